#ifndef REVRANK_METRICS_HPP_
#define REVRANK_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "revrank/errors.hpp"
#include "revrank/parallel.hpp"

namespace revrank {

/*! \brief One scored item: model score, revenue label and raw click. */
struct ScoredRecord {
  double score = 0.0;
  double y = 0.0;
  int click = 0;
};

/*!
 * \brief Result of a ranking metric evaluation.
 *
 * normalizer_z is the perfect-order pairwise revenue total used by the
 * revenue-weighted metrics; it is absent for plain AUC. n_score_ties counts
 * the evaluated pairs whose scores compare equal.
 */
struct MetricReport {
  std::string name;
  double value = 0.0;
  std::optional<double> normalizer_z;
  std::uint64_t n_pairs = 0;
  std::uint64_t n_score_ties = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["value"] = value;
    if (normalizer_z) j["normalizer_z"] = *normalizer_z;
    j["n_pairs"] = n_pairs;
    j["n_score_ties"] = n_score_ties;
    return j;
  }
};

enum class MetricKind { kAuc, kAucR, kAucRAsym, kSauc };

inline std::string metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kAuc: return "auc";
    case MetricKind::kAucR: return "auc_r";
    case MetricKind::kAucRAsym: return "auc_r_asym";
    case MetricKind::kSauc: return "sauc";
  }
  throw ValidationError("unknown metric kind");
}

inline MetricKind metric_from_name(const std::string& name) {
  if (name == "auc") return MetricKind::kAuc;
  if (name == "auc_r") return MetricKind::kAucR;
  if (name == "auc_r_asym") return MetricKind::kAucRAsym;
  if (name == "sauc") return MetricKind::kSauc;
  throw ValidationError("unknown metric '" + name + "'");
}

/*! \brief Numerically stable logistic function. */
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline void check_finite_scores(std::span<const ScoredRecord> records, const char* metric) {
  for (const auto& r : records) {
    if (!std::isfinite(r.score)) {
      throw ValidationError(std::string(metric) + ": non-finite score");
    }
    if (!std::isfinite(r.y)) {
      throw ValidationError(std::string(metric) + ": non-finite revenue label");
    }
  }
}

/*!
 * \brief Per-record pair weights for sums of the form sum_{i<j} sign * (y_i - y_j).
 *
 * Sorting by key descending, a record at global position p would meet n-1-2p
 * signed partners under strict ordering; records tied on the key contribute
 * nothing against each other, which subtracts the same expression evaluated
 * inside the tie group. Accumulating y[r] * w[r] in input order afterwards
 * keeps the summation order independent of the sort, so a dataset whose key
 * order matches (or exactly reverses) the label order reproduces the
 * perfect-order total bit for bit.
 */
struct PairWeights {
  std::vector<double> w;
  std::uint64_t tie_pairs = 0;
};

inline PairWeights pair_weights(std::span<const double> keys) {
  const std::size_t n = keys.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
  PairWeights out;
  out.w.assign(n, 0.0);
  std::size_t p = 0;
  while (p < n) {
    std::size_t q = p;
    while (q < n && keys[order[q]] == keys[order[p]]) ++q;
    const std::size_t g = q - p;
    out.tie_pairs += static_cast<std::uint64_t>(g) * (g - 1) / 2;
    for (std::size_t r = p; r < q; ++r) {
      const double w_all = static_cast<double>(n - 1) - 2.0 * static_cast<double>(r);
      const double w_group = static_cast<double>(g - 1) - 2.0 * static_cast<double>(r - p);
      out.w[order[r]] = w_all - w_group;
    }
    p = q;
  }
  return out;
}

/*! \brief Perfect-order pairwise revenue total sum_{i<j} |y_i - y_j|, plus label tie count. */
inline std::pair<double, std::uint64_t> revenue_normalizer(std::span<const ScoredRecord> records) {
  std::vector<double> ys(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) ys[i] = records[i].y;
  const PairWeights pw = pair_weights(ys);
  double z = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) z += records[i].y * pw.w[i];
  return {z, pw.tie_pairs};
}

constexpr std::size_t kPairChunkRows = 128;

}  // namespace detail

/*!
 * \brief Revenue-weighted ranking quality in [-1, 1].
 *
 * Averages the signed revenue gap of every record pair, counting a pair as
 * won when the higher-scored record carries the higher revenue label, and
 * normalizes by the total achieved under a perfect ordering. Score ties
 * contribute zero. Throws DegenerateMetricError when all labels are equal.
 */
inline MetricReport auc_r(std::span<const ScoredRecord> records) {
  if (records.empty()) throw ValidationError("auc_r: empty input");
  detail::check_finite_scores(records, "auc_r");
  const std::size_t n = records.size();

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = records[i].score;
  const detail::PairWeights sw = detail::pair_weights(scores);
  const auto [z, y_ties] = detail::revenue_normalizer(records);
  (void)y_ties;
  if (z == 0.0) {
    throw DegenerateMetricError("auc_r: all revenue labels are equal (normalizer is zero)");
  }
  double gain = 0.0;
  for (std::size_t i = 0; i < n; ++i) gain += records[i].y * sw.w[i];

  MetricReport report;
  report.name = "auc_r";
  report.value = gain / z;
  report.normalizer_z = z;
  report.n_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  report.n_score_ties = sw.tie_pairs;
  return report;
}

/*!
 * \brief One-sided variant of auc_r in [0, 1].
 *
 * Only correctly ordered pairs are credited (with their revenue gap); misses
 * earn nothing instead of a penalty. A perfectly reversed ranking therefore
 * scores 0 rather than -1. Same normalizer and error conditions as auc_r.
 */
inline MetricReport auc_r_asym(std::span<const ScoredRecord> records) {
  if (records.empty()) throw ValidationError("auc_r_asym: empty input");
  detail::check_finite_scores(records, "auc_r_asym");
  const std::size_t n = records.size();

  const auto [z, y_ties] = detail::revenue_normalizer(records);
  (void)y_ties;
  if (z == 0.0) {
    throw DegenerateMetricError("auc_r_asym: all revenue labels are equal (normalizer is zero)");
  }

  const std::size_t n_chunks = chunk_count(n, detail::kPairChunkRows);
  const auto partials = map_chunks<double>(n_chunks, [&](std::size_t k) {
    const std::size_t lo = k * detail::kPairChunkRows;
    const std::size_t hi = std::min(n, lo + detail::kPairChunkRows);
    double g = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double si = records[i].score;
      const double yi = records[i].y;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (si > records[j].score) {
          if (yi > records[j].y) g += yi - records[j].y;
        } else if (records[j].score > si) {
          if (records[j].y > yi) g += records[j].y - yi;
        }
      }
    }
    return g;
  });
  double gain = 0.0;
  for (double p : partials) gain += p;

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = records[i].score;

  MetricReport report;
  report.name = "auc_r_asym";
  report.value = gain / z;
  report.normalizer_z = z;
  report.n_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  report.n_score_ties = detail::pair_weights(scores).tie_pairs;
  return report;
}

/*!
 * \brief Click-based pairwise AUC with half credit for score ties.
 *
 * Counts clicked/unclicked pairs ordered correctly over all such pairs.
 * Throws DegenerateMetricError unless both classes are present.
 */
inline MetricReport auc(std::span<const ScoredRecord> records) {
  if (records.empty()) throw ValidationError("auc: empty input");
  detail::check_finite_scores(records, "auc");
  const std::size_t n = records.size();
  std::uint64_t n_pos = 0;
  for (const auto& r : records) {
    if (r.click != 0 && r.click != 1) throw ValidationError("auc: click must be 0 or 1");
    n_pos += static_cast<std::uint64_t>(r.click);
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DegenerateMetricError("auc: need both clicked and unclicked records");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].score < records[b].score;
  });

  // Ascending walk over tie buckets: positives beat every negative strictly
  // below their bucket and split ties within it.
  double correct = 0.0;
  std::uint64_t tied_pairs = 0;
  std::uint64_t cum_neg = 0;
  std::size_t p = 0;
  while (p < n) {
    std::size_t q = p;
    std::uint64_t bucket_pos = 0, bucket_neg = 0;
    while (q < n && records[order[q]].score == records[order[p]].score) {
      bucket_pos += static_cast<std::uint64_t>(records[order[q]].click);
      bucket_neg += static_cast<std::uint64_t>(1 - records[order[q]].click);
      ++q;
    }
    correct += static_cast<double>(bucket_pos) * static_cast<double>(cum_neg);
    correct += 0.5 * static_cast<double>(bucket_pos) * static_cast<double>(bucket_neg);
    tied_pairs += bucket_pos * bucket_neg;
    cum_neg += bucket_neg;
    p = q;
  }

  MetricReport report;
  report.name = "auc";
  report.value = correct / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  report.n_pairs = n_pos * n_neg;
  report.n_score_ties = tied_pairs;
  return report;
}

/*!
 * \brief Smooth surrogate of auc_r: the pair indicator is replaced by a
 *        logistic of the score gap at the given temperature.
 *
 * Each pair contributes sigmoid(ds/T)*dy + sigmoid(-ds/T)*(-dy), i.e.
 * (2*sigmoid(ds/T) - 1)*dy, over the perfect-order normalizer. As T -> 0 the
 * value approaches auc_r on tie-free scores; as T -> inf it approaches 0.
 * Pairs with equal labels contribute nothing, so the sum only visits pairs
 * with at least one nonzero label.
 */
inline MetricReport sauc(std::span<const ScoredRecord> records, double temperature) {
  if (records.empty()) throw ValidationError("sauc: empty input");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("sauc: temperature must be > 0");
  }
  detail::check_finite_scores(records, "sauc");
  const std::size_t n = records.size();

  const auto [z, y_ties] = detail::revenue_normalizer(records);
  (void)y_ties;
  if (z == 0.0) {
    throw DegenerateMetricError("sauc: all revenue labels are equal (normalizer is zero)");
  }

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (records[i].y != 0.0) active.push_back(i);
  }

  const double inv_t = 1.0 / temperature;
  const std::size_t n_chunks = chunk_count(active.size(), detail::kPairChunkRows);
  const auto partials = map_chunks<double>(n_chunks, [&](std::size_t k) {
    const std::size_t lo = k * detail::kPairChunkRows;
    const std::size_t hi = std::min(active.size(), lo + detail::kPairChunkRows);
    double g = 0.0;
    for (std::size_t p = lo; p < hi; ++p) {
      const std::size_t i = active[p];
      const double si = records[i].score;
      const double yi = records[i].y;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        // A pair of two active records is owned by its lower index.
        if (records[j].y != 0.0 && j < i) continue;
        const double dy = yi - records[j].y;
        g += (2.0 * sigmoid((si - records[j].score) * inv_t) - 1.0) * dy;
      }
    }
    return g;
  });
  double gain = 0.0;
  for (double p : partials) gain += p;

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = records[i].score;

  MetricReport report;
  report.name = "sauc";
  report.value = gain / z;
  report.normalizer_z = z;
  report.n_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  report.n_score_ties = detail::pair_weights(scores).tie_pairs;
  return report;
}

inline MetricReport evaluate_metric(MetricKind kind, std::span<const ScoredRecord> records,
                                    double temperature = 1.0) {
  switch (kind) {
    case MetricKind::kAuc: return auc(records);
    case MetricKind::kAucR: return auc_r(records);
    case MetricKind::kAucRAsym: return auc_r_asym(records);
    case MetricKind::kSauc: return sauc(records, temperature);
  }
  throw ValidationError("unknown metric kind");
}

/*!
 * \brief Agreement table between offline metric deltas and online revenue
 *        deltas over paired experiments. Zero deltas count as negative.
 */
struct ConfusionMatrix {
  std::uint64_t on_pos_off_pos = 0;
  std::uint64_t on_pos_off_neg = 0;
  std::uint64_t on_neg_off_pos = 0;
  std::uint64_t on_neg_off_neg = 0;

  std::uint64_t total() const {
    return on_pos_off_pos + on_pos_off_neg + on_neg_off_pos + on_neg_off_neg;
  }

  /*! \brief Fraction of experiments where the offline and online signs differ. */
  double disagreement_rate() const {
    const std::uint64_t t = total();
    if (t == 0) throw ValidationError("confusion matrix is empty");
    return static_cast<double>(on_pos_off_neg + on_neg_off_pos) / static_cast<double>(t);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["on_pos_off_pos"] = on_pos_off_pos;
    j["on_pos_off_neg"] = on_pos_off_neg;
    j["on_neg_off_pos"] = on_neg_off_pos;
    j["on_neg_off_neg"] = on_neg_off_neg;
    return j;
  }
};

/*! \brief Tally (offline_delta, online_delta) pairs; delta > 0 is positive. */
inline ConfusionMatrix confusion_matrix(std::span<const std::pair<double, double>> deltas) {
  if (deltas.empty()) throw ValidationError("confusion_matrix: empty input");
  ConfusionMatrix m;
  for (const auto& [offline, online] : deltas) {
    if (!std::isfinite(offline) || !std::isfinite(online)) {
      throw ValidationError("confusion_matrix: non-finite delta");
    }
    const bool off_pos = offline > 0.0;
    const bool on_pos = online > 0.0;
    if (on_pos && off_pos) ++m.on_pos_off_pos;
    else if (on_pos && !off_pos) ++m.on_pos_off_neg;
    else if (!on_pos && off_pos) ++m.on_neg_off_pos;
    else ++m.on_neg_off_neg;
  }
  return m;
}

}  // namespace revrank

#endif  // REVRANK_METRICS_HPP_
