#ifndef REVRANK_SIMULATOR_HPP_
#define REVRANK_SIMULATOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <boost/math/distributions/beta.hpp>

#include "revrank/calibration.hpp"
#include "revrank/dataset.hpp"
#include "revrank/dataset_io.hpp"
#include "revrank/errors.hpp"
#include "revrank/explicit_ranker.hpp"
#include "revrank/metrics.hpp"
#include "revrank/rng.hpp"

namespace revrank {

/*!
 * \brief Systematic distortion mapping an ad's true CTR to its logged eCTR.
 *
 * identity leaves the estimate calibrated; power applies scale * ctr^exponent
 * (clamped to 1); piecewise interpolates a monotone knot table.
 */
struct BiasFn {
  enum class Kind { kIdentity, kPower, kPiecewise };
  Kind kind = Kind::kIdentity;
  double exponent = 1.0;
  double scale = 1.0;
  std::vector<double> knots_x, knots_y;

  double operator()(double ctr) const {
    switch (kind) {
      case Kind::kIdentity:
        return ctr;
      case Kind::kPower:
        return std::min(scale * std::pow(ctr, exponent), 1.0);
      case Kind::kPiecewise: {
        if (ctr <= knots_x.front()) return knots_y.front();
        if (ctr >= knots_x.back()) return knots_y.back();
        const std::size_t hi = static_cast<std::size_t>(
            std::upper_bound(knots_x.begin(), knots_x.end(), ctr) - knots_x.begin());
        const double w = (ctr - knots_x[hi - 1]) / (knots_x[hi] - knots_x[hi - 1]);
        return (1.0 - w) * knots_y[hi - 1] + w * knots_y[hi];
      }
    }
    throw ValidationError("bias_fn: unknown kind");
  }

  void validate() const {
    if (kind == Kind::kPower) {
      if (!(exponent > 0.0) || !(scale > 0.0)) {
        throw ValidationError("bias_fn: power bias needs exponent > 0 and scale > 0");
      }
    }
    if (kind == Kind::kPiecewise) {
      if (knots_x.size() < 2 || knots_x.size() != knots_y.size()) {
        throw ValidationError("bias_fn: piecewise bias needs >= 2 paired knots");
      }
      for (std::size_t i = 0; i < knots_x.size(); ++i) {
        if (!(knots_x[i] > 0.0) || knots_x[i] > 1.0 || !(knots_y[i] > 0.0) || knots_y[i] > 1.0) {
          throw ValidationError("bias_fn: piecewise knots must lie in (0,1]");
        }
        if (i > 0 && (!(knots_x[i] > knots_x[i - 1]) || knots_y[i] < knots_y[i - 1])) {
          throw ValidationError("bias_fn: piecewise knots must be monotone");
        }
      }
    }
  }

  static std::string kind_name(Kind k) {
    switch (k) {
      case Kind::kIdentity: return "identity";
      case Kind::kPower: return "power";
      case Kind::kPiecewise: return "piecewise";
    }
    throw ValidationError("bias_fn: unknown kind");
  }

  static Kind kind_from_name(const std::string& name) {
    if (name == "identity") return Kind::kIdentity;
    if (name == "power") return Kind::kPower;
    if (name == "piecewise") return Kind::kPiecewise;
    throw ValidationError("bias_fn: unknown kind '" + name + "'");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = kind_name(kind);
    if (kind == Kind::kPower) {
      j["exponent"] = exponent;
      j["scale"] = scale;
    }
    if (kind == Kind::kPiecewise) {
      j["knots_x"] = knots_x;
      j["knots_y"] = knots_y;
    }
    return j;
  }

  static BiasFn from_json(const nlohmann::json& j) {
    BiasFn b;
    b.kind = kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("exponent")) b.exponent = j["exponent"].get<double>();
    if (j.contains("scale")) b.scale = j["scale"].get<double>();
    if (j.contains("knots_x")) b.knots_x = j["knots_x"].get<std::vector<double>>();
    if (j.contains("knots_y")) b.knots_y = j["knots_y"].get<std::vector<double>>();
    b.validate();
    return b;
  }
};

/*!
 * \brief Synthetic auction-log generator settings.
 *
 * True CTRs follow Beta(ctr_alpha, ctr_beta); bids are lognormal and coupled
 * to CTR through a Gaussian copula with coefficient bid_ctr_corr. Logged
 * eCTRs are the bias-distorted true CTRs, optionally with Gaussian noise of
 * ectr_noise in log-odds space. Clicks are Bernoulli draws at the true CTR.
 */
struct SimConfig {
  std::int64_t n_impressions = 5000;
  int ads_per_impression = 10;
  int slots = 1;
  double ctr_alpha = 2.0;
  double ctr_beta = 38.0;
  BiasFn bias;
  double ectr_noise = 0.0;
  double bid_mu = 0.0;
  double bid_sigma = 0.5;
  double bid_ctr_corr = 0.2;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_impressions < 1) throw ValidationError("sim: n_impressions must be >= 1");
    if (ads_per_impression < 1) throw ValidationError("sim: ads_per_impression must be >= 1");
    if (slots < 1 || slots > ads_per_impression) {
      throw ValidationError("sim: slots must be in [1, ads_per_impression]");
    }
    if (!(ctr_alpha > 0.0) || !(ctr_beta > 0.0)) {
      throw ValidationError("sim: ctr_alpha and ctr_beta must be > 0");
    }
    if (!(ectr_noise >= 0.0)) throw ValidationError("sim: ectr_noise must be >= 0");
    if (!(bid_sigma >= 0.0)) throw ValidationError("sim: bid_sigma must be >= 0");
    if (!(bid_ctr_corr >= -1.0 && bid_ctr_corr <= 1.0)) {
      throw ValidationError("sim: bid_ctr_corr must be in [-1, 1]");
    }
    bias.validate();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["n_impressions"] = n_impressions;
    j["ads_per_impression"] = ads_per_impression;
    j["slots"] = slots;
    j["ctr_alpha"] = ctr_alpha;
    j["ctr_beta"] = ctr_beta;
    j["bias"] = to_json_bias();
    j["ectr_noise"] = ectr_noise;
    j["bid_mu"] = bid_mu;
    j["bid_sigma"] = bid_sigma;
    j["bid_ctr_corr"] = bid_ctr_corr;
    j["seed"] = seed;
    return j;
  }

  nlohmann::ordered_json to_json_bias() const { return bias.to_json(); }

  static SimConfig from_json(const nlohmann::json& j) {
    SimConfig c;
    auto take = [&](const char* key, auto& slot) {
      if (j.contains(key)) slot = j[key].get<std::decay_t<decltype(slot)>>();
    };
    take("n_impressions", c.n_impressions);
    take("ads_per_impression", c.ads_per_impression);
    take("slots", c.slots);
    take("ctr_alpha", c.ctr_alpha);
    take("ctr_beta", c.ctr_beta);
    take("ectr_noise", c.ectr_noise);
    take("bid_mu", c.bid_mu);
    take("bid_sigma", c.bid_sigma);
    take("bid_ctr_corr", c.bid_ctr_corr);
    take("seed", c.seed);
    if (j.contains("bias")) c.bias = BiasFn::from_json(j["bias"]);
    c.validate();
    return c;
  }
};

/*!
 * \brief Hidden per-record state of a generated log: the true CTRs, keyed by
 *        pooled record position. Replay needs it; rankers never see it.
 */
struct LatentTruth {
  std::vector<double> true_ctr;

  void save_jsonl(const std::string& path, const Dataset& ds) const {
    if (true_ctr.size() != ds.size()) {
      throw ValidationError("latent truth: size does not match dataset");
    }
    std::string out;
    out.reserve(true_ctr.size() * 40);
    for (std::size_t i = 0; i < true_ctr.size(); ++i) {
      out += "{\"index\":";
      out += std::to_string(i);
      out += ",\"impression_id\":";
      detail::append_json_string(out, ds.record(i).impression_id);
      out += ",\"true_ctr\":";
      out += detail::format_double(true_ctr[i]);
      out += "}\n";
    }
    detail::write_file(path, out);
  }

  static LatentTruth load_jsonl(const std::string& path) {
    const std::string content = detail::read_file(path);
    const auto lines = detail::split_lines(content);
    if (lines.empty()) throw ParseError(path + ": file is empty");
    LatentTruth truth;
    truth.true_ctr.assign(lines.size(), -1.0);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string where = path + ":" + std::to_string(i + 1);
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(lines[i]);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": invalid JSON (" + e.what() + ")");
      }
      if (!obj.contains("index") || !obj["index"].is_number_integer() ||
          !obj.contains("true_ctr") || !obj["true_ctr"].is_number()) {
        throw ParseError(where + ": need integer 'index' and numeric 'true_ctr'");
      }
      const std::int64_t idx = obj["index"].get<std::int64_t>();
      if (idx < 0 || static_cast<std::size_t>(idx) >= truth.true_ctr.size()) {
        throw ParseError(where + ": index out of range");
      }
      const double ctr = obj["true_ctr"].get<double>();
      if (!(ctr > 0.0 && ctr < 1.0)) throw ParseError(where + ": true_ctr out of (0,1)");
      if (truth.true_ctr[static_cast<std::size_t>(idx)] >= 0.0) {
        throw ParseError(where + ": duplicate index");
      }
      truth.true_ctr[static_cast<std::size_t>(idx)] = ctr;
    }
    return truth;
  }
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clamp_unit_open(double p) {
  return std::min(std::max(p, 1e-12), 1.0 - 1e-12);
}

constexpr std::uint64_t kStreamGenerate = 0xa1;
constexpr std::uint64_t kStreamTrialGen = 0xb1;
constexpr std::uint64_t kStreamTrialDraw = 0xb2;
constexpr std::uint64_t kStreamTrialReplay = 0xb3;

}  // namespace detail

/*!
 * \brief Draw a synthetic auction log and its hidden true CTRs.
 *
 * Each impression owns an independent sub-stream keyed by its index, so logs
 * of different sizes share their common prefix under the same seed.
 */
inline std::pair<Dataset, LatentTruth> generate(const SimConfig& cfg) {
  cfg.validate();
  const boost::math::beta_distribution<double> ctr_dist(cfg.ctr_alpha, cfg.ctr_beta);
  const double tail = std::sqrt(std::max(0.0, 1.0 - cfg.bid_ctr_corr * cfg.bid_ctr_corr));

  Dataset ds;
  LatentTruth truth;
  truth.true_ctr.reserve(static_cast<std::size_t>(cfg.n_impressions) *
                         static_cast<std::size_t>(cfg.ads_per_impression));
  const Rng root(cfg.seed);
  for (std::int64_t imp = 0; imp < cfg.n_impressions; ++imp) {
    Rng rng = root.derive(detail::kStreamGenerate, static_cast<std::uint64_t>(imp));
    const std::string imp_id = std::to_string(imp);
    for (int ad = 0; ad < cfg.ads_per_impression; ++ad) {
      const double z1 = rng.normal();
      const double z2 = rng.normal();
      const double u1 = detail::clamp_unit_open(detail::normal_cdf(z1));
      const double ctr = detail::clamp_unit_open(boost::math::quantile(ctr_dist, u1));
      const double zb = cfg.bid_ctr_corr * z1 + tail * z2;
      const double bid = std::exp(cfg.bid_mu + cfg.bid_sigma * zb);
      double ectr = cfg.bias(ctr);
      if (cfg.ectr_noise > 0.0) {
        const double z3 = rng.normal();
        ectr = sigmoid(detail::logit(detail::clamp_unit_open(ectr)) + cfg.ectr_noise * z3);
      }
      ectr = std::min(std::max(ectr, 1e-12), 1.0);
      const int click = rng.bernoulli(ctr) ? 1 : 0;
      ds.add(make_record(imp_id, ectr, bid, click));
      truth.true_ctr.push_back(ctr);
    }
  }
  return {std::move(ds), std::move(truth)};
}

/*! \brief Ranking function handle used by replay. */
using Scorer = std::function<double(const AuctionRecord&)>;

inline Scorer make_scorer(const ExplicitRankerParams& params) {
  return [params](const AuctionRecord& rec) { return log_score(params, rec); };
}

/*!
 * \brief Outcome of re-running a logged set of auctions under a scorer.
 *
 * rpm is revenue per thousand impressions; ctr is clicks over shown ads; cpc
 * is revenue per click (0 when nothing was clicked). First-price pricing:
 * a clicked ad pays its own bid.
 */
struct ReplayResult {
  double rpm = 0.0;
  double ctr = 0.0;
  double cpc = 0.0;
  double revenue = 0.0;
  std::int64_t n_impressions = 0;
  std::int64_t n_shown = 0;
  std::int64_t n_clicks = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["rpm"] = rpm;
    j["ctr"] = ctr;
    j["cpc"] = cpc;
    j["revenue"] = revenue;
    j["n_impressions"] = n_impressions;
    j["n_shown"] = n_shown;
    j["n_clicks"] = n_clicks;
    return j;
  }
};

/*!
 * \brief Rank every impression with the scorer, show the top slots ads, and
 *        draw fresh clicks from the hidden true CTRs.
 *
 * Click luck is keyed by (seed, impression, candidate), not by rank, so two
 * scorers evaluated under the same seed see identical luck wherever they
 * select the same ads. Ties keep the logged order.
 */
inline ReplayResult replay(const Dataset& ds, const LatentTruth& truth, const Scorer& scorer,
                           int slots, std::uint64_t seed) {
  if (ds.empty()) throw ValidationError("replay: empty dataset");
  if (truth.true_ctr.size() != ds.size()) {
    throw ValidationError("replay: truth size does not match dataset");
  }
  if (slots < 1) throw ValidationError("replay: slots must be >= 1");

  ReplayResult res;
  res.n_impressions = static_cast<std::int64_t>(ds.impressions().size());
  std::vector<std::size_t> order;
  std::vector<double> scores;
  for (std::size_t imp = 0; imp < ds.impressions().size(); ++imp) {
    const auto& list = ds.impressions()[imp].record_indices;
    const std::size_t m = list.size();
    if (static_cast<std::size_t>(slots) > m) {
      throw ValidationError("replay: slots exceeds ads in impression '" +
                            ds.impressions()[imp].impression_id + "'");
    }
    scores.resize(m);
    for (std::size_t c = 0; c < m; ++c) {
      scores[c] = scorer(ds.record(list[c]));
      if (!std::isfinite(scores[c])) throw ValidationError("replay: non-finite score");
    }
    const std::size_t k = static_cast<std::size_t>(slots);
    order.resize(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (k == 1) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < m; ++c) {
        if (scores[c] > scores[best]) best = c;
      }
      order[0] = best;
    } else if (k < m) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    }
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t cand = order[r];
      const AuctionRecord& rec = ds.record(list[cand]);
      const double u = hash_uniform01(seed, static_cast<std::uint64_t>(imp),
                                      static_cast<std::uint64_t>(cand));
      if (u < truth.true_ctr[list[cand]]) {
        res.n_clicks += 1;
        res.revenue += rec.bid;
      }
      res.n_shown += 1;
    }
  }
  res.rpm = 1000.0 * res.revenue / static_cast<double>(res.n_impressions);
  res.ctr = res.n_shown > 0 ? static_cast<double>(res.n_clicks) / static_cast<double>(res.n_shown)
                            : 0.0;
  res.cpc = res.n_clicks > 0 ? res.revenue / static_cast<double>(res.n_clicks) : 0.0;
  return res;
}

/*!
 * \brief Settings for the offline/online agreement experiment.
 *
 * Each trial draws a fresh log from sim (whose n_impressions is the per-trial
 * log size), a baseline power-rule scorer with beta uniform on
 * [beta_base_min, beta_base_max] and identity calibration, and a candidate
 * perturbed by Gaussian jitter on beta and log-space jitter on calibration
 * knots. Offline deltas come from the logged clicks; online deltas from
 * replayed revenue under shared click luck.
 */
struct ConfusionConfig {
  SimConfig sim;
  double beta_base_min = 0.7;
  double beta_base_max = 1.3;
  double beta_jitter = 0.25;
  double calib_jitter = 0.0;
  int calib_knots = 6;
  double temperature = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    sim.validate();
    if (!(beta_base_min <= beta_base_max)) {
      throw ValidationError("confusion: beta_base_min must be <= beta_base_max");
    }
    if (!(beta_jitter >= 0.0) || !(calib_jitter >= 0.0)) {
      throw ValidationError("confusion: jitters must be >= 0");
    }
    if (calib_knots < 2) throw ValidationError("confusion: calib_knots must be >= 2");
    if (!(temperature > 0.0)) throw ValidationError("confusion: temperature must be > 0");
  }
};

/*!
 * \brief Run paired offline/online trials and tally agreement per metric.
 *
 * All randomness is keyed by (seed, trial), never by the metric, so calling
 * this with different metrics reproduces the same trials; the returned
 * matrices for a multi-metric call are tallied from one shared set of runs.
 */
inline std::vector<ConfusionMatrix> run_confusion_experiment(
    const ConfusionConfig& cfg, int n_trials, std::span<const MetricKind> metrics) {
  cfg.validate();
  if (n_trials < 1) throw ValidationError("confusion: n_trials must be >= 1");
  if (metrics.empty()) throw ValidationError("confusion: need at least one metric");

  std::vector<ConfusionMatrix> tallies(metrics.size());
  const Rng root(cfg.seed);
  for (int trial = 0; trial < n_trials; ++trial) {
    SimConfig sim = cfg.sim;
    sim.seed = root.derive(detail::kStreamTrialGen, static_cast<std::uint64_t>(trial)).next_u64();
    auto [log, truth] = generate(sim);

    Rng draw = root.derive(detail::kStreamTrialDraw, static_cast<std::uint64_t>(trial));
    ExplicitRankerParams base;
    base.beta = draw.uniform(cfg.beta_base_min, cfg.beta_base_max);

    ExplicitRankerParams cand;
    cand.beta = base.beta + cfg.beta_jitter * draw.normal();
    if (cfg.calib_jitter > 0.0) {
      Calibration knots = Calibration::at_ectr_quantiles(log, cfg.calib_knots);
      std::vector<double> raw = knots.raw();
      for (auto& r : raw) r += cfg.calib_jitter * draw.normal();
      knots.set_from_raw(raw);
      cand.calibration = knots;
    }

    const auto scored_base = log_scored(base, log);
    const auto scored_cand = log_scored(cand, log);

    const std::uint64_t replay_seed =
        root.derive(detail::kStreamTrialReplay, static_cast<std::uint64_t>(trial)).next_u64();
    const ReplayResult on_base = replay(log, truth, make_scorer(base), cfg.sim.slots, replay_seed);
    const ReplayResult on_cand = replay(log, truth, make_scorer(cand), cfg.sim.slots, replay_seed);
    const double online_delta = on_cand.rpm - on_base.rpm;

    for (std::size_t m = 0; m < metrics.size(); ++m) {
      const double off_base = evaluate_metric(metrics[m], scored_base, cfg.temperature).value;
      const double off_cand = evaluate_metric(metrics[m], scored_cand, cfg.temperature).value;
      const double offline_delta = off_cand - off_base;
      const bool off_pos = offline_delta > 0.0;
      const bool on_pos = online_delta > 0.0;
      if (on_pos && off_pos) ++tallies[m].on_pos_off_pos;
      else if (on_pos && !off_pos) ++tallies[m].on_pos_off_neg;
      else if (!on_pos && off_pos) ++tallies[m].on_neg_off_pos;
      else ++tallies[m].on_neg_off_neg;
    }
  }
  return tallies;
}

inline ConfusionMatrix run_confusion_experiment(const ConfusionConfig& cfg, int n_trials,
                                                MetricKind metric) {
  const MetricKind kinds[1] = {metric};
  return run_confusion_experiment(cfg, n_trials, std::span<const MetricKind>(kinds, 1))[0];
}

}  // namespace revrank

#endif  // REVRANK_SIMULATOR_HPP_
