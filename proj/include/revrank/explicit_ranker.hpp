#ifndef REVRANK_EXPLICIT_RANKER_HPP_
#define REVRANK_EXPLICIT_RANKER_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "revrank/calibration.hpp"
#include "revrank/dataset.hpp"
#include "revrank/errors.hpp"
#include "revrank/fit_trace.hpp"
#include "revrank/metrics.hpp"
#include "revrank/rng.hpp"

namespace revrank {

/*!
 * \brief Power-rule ranker: score = calibrate(ectr)^beta * bid.
 *
 * beta < 1 discounts the CTR estimate relative to the bid, which is the
 * revenue-optimal direction when the estimates carry multiplicative noise.
 */
struct ExplicitRankerParams {
  double beta = 1.0;
  Calibration calibration = Calibration::identity();

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["beta"] = beta;
    j["knots_x"] = calibration.knots_x();
    j["knots_y"] = calibration.knots_y();
    return j;
  }

  static ExplicitRankerParams from_json(const nlohmann::json& j) {
    if (!j.contains("beta") || !j["beta"].is_number()) {
      throw ParseError("ranker params: missing numeric 'beta'");
    }
    if (!j.contains("knots_x") || !j.contains("knots_y")) {
      throw ParseError("ranker params: missing 'knots_x'/'knots_y'");
    }
    ExplicitRankerParams p;
    p.beta = j["beta"].get<double>();
    if (!std::isfinite(p.beta)) throw ValidationError("ranker params: beta must be finite");
    p.calibration = Calibration::from_knots(j["knots_x"].get<std::vector<double>>(),
                                            j["knots_y"].get<std::vector<double>>());
    return p;
  }
};

inline double score(const ExplicitRankerParams& params, const AuctionRecord& rec) {
  return std::pow(params.calibration(rec.ectr), params.beta) * rec.bid;
}

/*! \brief log(score); same ordering as score and better conditioned for optimization. */
inline double log_score(const ExplicitRankerParams& params, const AuctionRecord& rec) {
  return params.beta * std::log(params.calibration(rec.ectr)) + std::log(rec.bid);
}

/*! \brief Log-scored view of a dataset, for metric evaluation. */
inline std::vector<ScoredRecord> log_scored(const ExplicitRankerParams& params,
                                            const Dataset& ds) {
  std::vector<ScoredRecord> out(ds.size());
  const auto& pooled = ds.pooled();
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    out[i] = ScoredRecord{log_score(params, pooled[i]), pooled[i].y, pooled[i].click};
  }
  return out;
}

struct GridOptions {
  double beta_min = 0.1;
  double beta_max = 2.0;
  double step = 0.02;
};

struct GridSearchResult {
  double beta = 0.0;
  MetricReport report;
  FitTrace trace;
};

/*!
 * \brief Exhaustive sweep of beta over an inclusive grid, scoring each value
 *        by auc_r of the resulting ranking; first maximum wins ties.
 *
 * Grid points are indexed (beta_min + k * step) so the sweep hits beta_max
 * even when the span is not an exact multiple of step in floating point.
 */
inline GridSearchResult grid_search_beta(const Dataset& ds, const Calibration& calibration,
                                         const GridOptions& opt = GridOptions()) {
  if (ds.empty()) throw ValidationError("grid_search_beta: empty dataset");
  if (!(opt.step > 0.0) || !(opt.beta_min < opt.beta_max)) {
    throw ValidationError("grid_search_beta: need beta_min < beta_max and step > 0");
  }
  const auto& pooled = ds.pooled();
  const std::size_t n = pooled.size();
  std::vector<double> log_ectr(n), log_bid(n);
  for (std::size_t i = 0; i < n; ++i) {
    log_ectr[i] = std::log(calibration(pooled[i].ectr));
    log_bid[i] = std::log(pooled[i].bid);
  }

  const int k_max = static_cast<int>((opt.beta_max - opt.beta_min) / opt.step + 1e-9);
  GridSearchResult best;
  FitTrace trace;
  std::vector<ScoredRecord> scored(n);
  bool have_best = false;
  for (int k = 0; k <= k_max; ++k) {
    const double beta = opt.beta_min + static_cast<double>(k) * opt.step;
    for (std::size_t i = 0; i < n; ++i) {
      scored[i] = ScoredRecord{beta * log_ectr[i] + log_bid[i], pooled[i].y, pooled[i].click};
    }
    const MetricReport report = auc_r(scored);
    trace.points.push_back(FitTracePoint{k, beta, report.value, "auc_r"});
    if (!have_best || report.value > best.report.value) {
      best.beta = beta;
      best.report = report;
      have_best = true;
    }
  }
  best.trace = std::move(trace);
  return best;
}

/*!
 * \brief Batch objective value and its gradient in the fit parameters
 *        (beta and the log knot outputs).
 */
struct SaucGradient {
  double sauc = 0.0;
  double d_beta = 0.0;
  std::vector<double> d_raw;
};

/*!
 * \brief Smooth pairwise objective over one mini-batch, differentiated in
 *        log-score space with the batch-local normalizer.
 *
 * A batch whose labels are all equal has no pair signal and yields a zero
 * gradient rather than an error.
 */
inline SaucGradient sauc_gradient(const ExplicitRankerParams& params,
                                  std::span<const AuctionRecord> batch, double temperature) {
  if (batch.size() < 2) throw ValidationError("sauc_gradient: batch needs at least 2 records");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("sauc_gradient: temperature must be > 0");
  }
  const std::size_t b = batch.size();
  const std::size_t n_knots = params.calibration.n_knots();

  SaucGradient out;
  out.d_raw.assign(n_knots, 0.0);

  std::vector<double> s(b), log_e(b), ys(b);
  std::vector<Calibration::Blend> blends(b);
  std::vector<double> eprime(b);
  for (std::size_t i = 0; i < b; ++i) {
    blends[i] = params.calibration.blend(batch[i].ectr);
    const auto& yk = params.calibration.knots_y();
    eprime[i] = (1.0 - blends[i].w_hi) * yk[blends[i].lo] + blends[i].w_hi * yk[blends[i].hi];
    log_e[i] = std::log(eprime[i]);
    s[i] = params.beta * log_e[i] + std::log(batch[i].bid);
    ys[i] = batch[i].y;
    if (!std::isfinite(s[i])) throw DivergenceError("sauc_gradient: non-finite score");
  }

  const detail::PairWeights pw = detail::pair_weights(ys);
  double z = 0.0;
  for (std::size_t i = 0; i < b; ++i) z += ys[i] * pw.w[i];
  if (z == 0.0) return out;

  const double inv_t = 1.0 / temperature;
  const double inv_z = 1.0 / z;
  double gain = 0.0;
  std::vector<double> acc(b, 0.0);  // d(sauc)/d(s_i)
  for (std::size_t i = 0; i + 1 < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double dy = ys[i] - ys[j];
      if (dy == 0.0) continue;
      const double sig = sigmoid((s[i] - s[j]) * inv_t);
      gain += (2.0 * sig - 1.0) * dy;
      const double c = 2.0 * inv_t * sig * (1.0 - sig) * dy * inv_z;
      acc[i] += c;
      acc[j] -= c;
    }
  }
  out.sauc = gain * inv_z;

  const auto& yk = params.calibration.knots_y();
  for (std::size_t i = 0; i < b; ++i) {
    if (acc[i] == 0.0) continue;
    out.d_beta += acc[i] * log_e[i];
    // d s_i / d raw_k = beta * w_k * knot_y_k / eprime_i for the two stencil knots.
    const double scale = acc[i] * params.beta / eprime[i];
    const auto& bl = blends[i];
    if (bl.lo == bl.hi) {
      out.d_raw[bl.lo] += scale * yk[bl.lo];
    } else {
      out.d_raw[bl.lo] += scale * (1.0 - bl.w_hi) * yk[bl.lo];
      out.d_raw[bl.hi] += scale * bl.w_hi * yk[bl.hi];
    }
  }
  if (!std::isfinite(out.sauc) || !std::isfinite(out.d_beta)) {
    throw DivergenceError("sauc_gradient: non-finite gradient");
  }
  return out;
}

struct SgdOptions {
  std::size_t batch_size = 100;
  double learning_rate = 0.5;
  double temperature = 1.0;
  int max_epochs = 40;
  double rel_tol = 1e-4;
  std::uint64_t seed = 1;
  bool update_beta = true;
  bool update_calibration = true;
};

namespace detail {

struct FullEval {
  MetricReport sauc_report;
  MetricReport auc_r_report;
};

inline FullEval full_objective(const ExplicitRankerParams& params, const Dataset& ds,
                               double temperature) {
  const auto scored = log_scored(params, ds);
  FullEval e;
  e.sauc_report = sauc(scored, temperature);
  e.auc_r_report = auc_r(scored);
  return e;
}

}  // namespace detail

/*!
 * \brief Mini-batch gradient ascent on the smooth pairwise objective.
 *
 * Records are shuffled once with the given seed and walked in contiguous
 * batches each epoch. Training stops after max_epochs or as soon as the
 * full-dataset objective fails to improve by more than rel_tol over an
 * epoch (so rel_tol = inf runs zero epochs and returns the init unchanged).
 * The trace logs the exact full-dataset sauc and auc_r after every epoch,
 * step 0 being the init.
 */
inline std::pair<ExplicitRankerParams, FitTrace> fit_sgd(const Dataset& ds,
                                                         const ExplicitRankerParams& init,
                                                         const SgdOptions& opt) {
  if (ds.empty()) throw ValidationError("fit_sgd: empty dataset");
  if (opt.batch_size < 2) throw ValidationError("fit_sgd: batch_size must be >= 2");
  if (!(opt.learning_rate > 0.0)) throw ValidationError("fit_sgd: learning_rate must be > 0");
  if (!(opt.temperature > 0.0)) throw ValidationError("fit_sgd: temperature must be > 0");
  if (opt.max_epochs < 0) throw ValidationError("fit_sgd: max_epochs must be >= 0");

  std::vector<AuctionRecord> shuffled(ds.pooled());
  Rng rng = Rng(opt.seed).derive(0x5d9f);
  rng.shuffle(shuffled.data(), shuffled.size());

  ExplicitRankerParams params = init;
  std::vector<double> raw = params.calibration.raw();

  FitTrace trace;
  detail::FullEval eval = detail::full_objective(params, ds, opt.temperature);
  trace.points.push_back(FitTracePoint{0, params.beta, eval.sauc_report.value, "sauc"});
  trace.points.push_back(FitTracePoint{0, params.beta, eval.auc_r_report.value, "auc_r"});

  double last = eval.sauc_report.value;
  double improvement = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    if (!(improvement > opt.rel_tol)) break;
    for (std::size_t start = 0; start < shuffled.size(); start += opt.batch_size) {
      const std::size_t len = std::min(opt.batch_size, shuffled.size() - start);
      if (len < 2) break;  // a trailing singleton has no pairs
      const SaucGradient g = sauc_gradient(
          params, std::span<const AuctionRecord>(shuffled.data() + start, len), opt.temperature);
      if (opt.update_beta) {
        params.beta += opt.learning_rate * g.d_beta;
        if (!std::isfinite(params.beta)) throw DivergenceError("fit_sgd: beta diverged");
      }
      if (opt.update_calibration) {
        for (std::size_t k = 0; k < raw.size(); ++k) {
          raw[k] += opt.learning_rate * g.d_raw[k];
        }
        params.calibration.set_from_raw(raw);
      }
    }
    eval = detail::full_objective(params, ds, opt.temperature);
    if (!std::isfinite(eval.sauc_report.value)) throw DivergenceError("fit_sgd: objective diverged");
    trace.points.push_back(FitTracePoint{epoch, params.beta, eval.sauc_report.value, "sauc"});
    trace.points.push_back(FitTracePoint{epoch, params.beta, eval.auc_r_report.value, "auc_r"});
    improvement = eval.sauc_report.value - last;
    last = eval.sauc_report.value;
  }
  return {params, trace};
}

/*!
 * \brief Two-stage fit: gradient steps on the calibration knots with beta
 *        frozen, then a grid sweep of beta under the fitted calibration.
 */
inline std::pair<ExplicitRankerParams, FitTrace> fit_staged(const Dataset& ds,
                                                            const ExplicitRankerParams& init,
                                                            const SgdOptions& sgd_opt,
                                                            const GridOptions& grid_opt) {
  SgdOptions stage1 = sgd_opt;
  stage1.update_beta = false;
  auto [calibrated, trace] = fit_sgd(ds, init, stage1);

  GridSearchResult grid = grid_search_beta(ds, calibrated.calibration, grid_opt);
  const std::int64_t offset = trace.points.empty() ? 0 : trace.points.back().step + 1;
  for (const auto& p : grid.trace.points) {
    trace.points.push_back(FitTracePoint{offset + p.step, p.param, p.objective, p.metric});
  }
  calibrated.beta = grid.beta;
  return {calibrated, trace};
}

}  // namespace revrank

#endif  // REVRANK_EXPLICIT_RANKER_HPP_
