#ifndef REVRANK_CALIBRATION_HPP_
#define REVRANK_CALIBRATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "revrank/dataset.hpp"
#include "revrank/errors.hpp"

namespace revrank {

/*!
 * \brief Piecewise-linear correction applied to the predicted CTR before
 *        ranking, mapping eCTR to a positive calibrated value.
 *
 * Knot outputs stay positive by construction: the optimizer works on their
 * logs (raw()/set_from_raw()), so any unconstrained update maps back to a
 * valid curve. Inputs outside the knot range clamp to the end knots.
 */
class Calibration {
 public:
  Calibration() : Calibration(identity()) {}

  static Calibration identity() {
    Calibration c((Private()));
    c.x_ = {1e-9, 1.0};
    c.y_ = {1e-9, 1.0};
    return c;
  }

  static Calibration from_knots(std::vector<double> x, std::vector<double> y) {
    if (x.empty() || x.size() != y.size()) {
      throw ValidationError("calibration: knots_x and knots_y must be non-empty and equal length");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || x[i] <= 0.0 || x[i] > 1.0) {
        throw ValidationError("calibration: knots_x must lie in (0,1]");
      }
      if (!std::isfinite(y[i]) || y[i] <= 0.0) {
        throw ValidationError("calibration: knots_y must be positive and finite");
      }
      if (i > 0 && !(x[i] > x[i - 1])) {
        throw ValidationError("calibration: knots_x must be strictly increasing");
      }
    }
    Calibration c((Private()));
    c.x_ = std::move(x);
    c.y_ = std::move(y);
    return c;
  }

  /*!
   * \brief Identity-valued knots at empirical eCTR quantiles of the dataset.
   *
   * The first knot sits at the minimum observed eCTR and the last at 1.0;
   * interior knots follow the quantiles. Duplicate positions collapse.
   */
  static Calibration at_ectr_quantiles(const Dataset& ds, int n_knots) {
    if (ds.empty()) throw ValidationError("calibration: empty dataset");
    if (n_knots < 2) throw ValidationError("calibration: need at least 2 knots");
    std::vector<double> ectrs;
    ectrs.reserve(ds.size());
    for (const auto& rec : ds.pooled()) ectrs.push_back(rec.ectr);
    std::sort(ectrs.begin(), ectrs.end());

    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(n_knots));
    const std::size_t n = ectrs.size();
    for (int k = 0; k + 1 < n_knots; ++k) {
      const double q = static_cast<double>(k) / static_cast<double>(n_knots - 1);
      const double pos = q * static_cast<double>(n - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, n - 1);
      const double frac = pos - static_cast<double>(lo);
      xs.push_back(ectrs[lo] * (1.0 - frac) + ectrs[hi] * frac);
    }
    xs.push_back(1.0);

    std::vector<double> dedup;
    for (double x : xs) {
      if (dedup.empty() || x > dedup.back() + 1e-12) dedup.push_back(x);
    }
    if (dedup.size() < 2) dedup = {std::min(ectrs.front(), 0.5), 1.0};
    return from_knots(dedup, dedup);
  }

  /*! \brief Calibrated eCTR, interpolated between the bracketing knots. */
  double operator()(double ectr) const {
    const Blend b = blend(ectr);
    return (1.0 - b.w_hi) * y_[b.lo] + b.w_hi * y_[b.hi];
  }

  /*! \brief Interpolation stencil of an input: knot indices and the upper weight. */
  struct Blend {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double w_hi = 0.0;
  };

  Blend blend(double ectr) const {
    if (x_.size() == 1 || ectr <= x_.front()) return Blend{0, 0, 0.0};
    if (ectr >= x_.back()) return Blend{x_.size() - 1, x_.size() - 1, 0.0};
    const std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(x_.begin(), x_.end(), ectr) - x_.begin());
    const std::size_t lo = hi - 1;
    const double w = (ectr - x_[lo]) / (x_[hi] - x_[lo]);
    return Blend{lo, hi, w};
  }

  std::size_t n_knots() const { return x_.size(); }
  const std::vector<double>& knots_x() const { return x_; }
  const std::vector<double>& knots_y() const { return y_; }

  /*! \brief Unconstrained view of the knot outputs (their logs). */
  std::vector<double> raw() const {
    std::vector<double> r(y_.size());
    for (std::size_t i = 0; i < y_.size(); ++i) r[i] = std::log(y_[i]);
    return r;
  }

  void set_from_raw(std::span<const double> raw) {
    if (raw.size() != y_.size()) {
      throw ValidationError("calibration: raw parameter size mismatch");
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!std::isfinite(raw[i])) throw DivergenceError("calibration: non-finite raw knot");
      y_[i] = std::exp(raw[i]);
      if (!(y_[i] > 0.0) || !std::isfinite(y_[i])) {
        throw DivergenceError("calibration: knot output left (0, inf)");
      }
    }
  }

 private:
  struct Private {};
  explicit Calibration(Private) {}

  std::vector<double> x_;
  std::vector<double> y_;
};

}  // namespace revrank

#endif  // REVRANK_CALIBRATION_HPP_
