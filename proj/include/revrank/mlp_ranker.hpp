#ifndef REVRANK_MLP_RANKER_HPP_
#define REVRANK_MLP_RANKER_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "revrank/dataset.hpp"
#include "revrank/errors.hpp"
#include "revrank/fit_trace.hpp"
#include "revrank/metrics.hpp"
#include "revrank/parallel.hpp"
#include "revrank/rng.hpp"

namespace revrank {

enum class Activation { kTanh, kIdentity };

inline std::string activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "identity";
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ValidationError("unknown activation '" + name + "'");
}

/*!
 * \brief Small fully connected scorer over (log ectr, log bid).
 *
 * Three hidden layers and a linear scalar head; inputs are standardized with
 * constants frozen at init time. AdaGrad accumulators live beside the
 * weights but are training state and are not serialized.
 */
struct MlpRanker {
  std::vector<int> layer_dims;                // [2, H1, H2, H3, 1]
  std::vector<std::vector<double>> weights;   // per layer, row-major [out x in]
  std::vector<std::vector<double>> biases;    // per layer, [out]
  std::vector<std::vector<double>> accum_w;   // AdaGrad squared-gradient sums
  std::vector<std::vector<double>> accum_b;
  Activation activation = Activation::kTanh;
  double mean_log_ectr = 0.0, std_log_ectr = 1.0;
  double mean_log_bid = 0.0, std_log_bid = 1.0;

  std::size_t n_layers() const { return weights.size(); }

  double forward_features(double log_ectr, double log_bid) const {
    std::vector<double> cur = {(log_ectr - mean_log_ectr) / std_log_ectr,
                               (log_bid - mean_log_bid) / std_log_bid};
    std::vector<double> next;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const int out_dim = layer_dims[l + 1];
      const int in_dim = layer_dims[l];
      next.assign(static_cast<std::size_t>(out_dim), 0.0);
      for (int o = 0; o < out_dim; ++o) {
        double v = biases[l][static_cast<std::size_t>(o)];
        const double* row = weights[l].data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) v += row[i] * cur[static_cast<std::size_t>(i)];
        if (l + 1 < weights.size() && activation == Activation::kTanh) v = std::tanh(v);
        next[static_cast<std::size_t>(o)] = v;
      }
      cur.swap(next);
    }
    return cur[0];
  }

  double forward(const AuctionRecord& rec) const {
    return forward_features(std::log(rec.ectr), std::log(rec.bid));
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["layer_dims"] = layer_dims;
    j["activation"] = activation_name(activation);
    j["standardization"] = {{"mean_log_ectr", mean_log_ectr},
                            {"std_log_ectr", std_log_ectr},
                            {"mean_log_bid", mean_log_bid},
                            {"std_log_bid", std_log_bid}};
    j["weights"] = weights;
    j["biases"] = biases;
    return j;
  }

  static MlpRanker from_json(const nlohmann::json& j) {
    MlpRanker net;
    try {
      net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
      net.activation = activation_from_name(j.at("activation").get<std::string>());
      const auto& s = j.at("standardization");
      net.mean_log_ectr = s.at("mean_log_ectr").get<double>();
      net.std_log_ectr = s.at("std_log_ectr").get<double>();
      net.mean_log_bid = s.at("mean_log_bid").get<double>();
      net.std_log_bid = s.at("std_log_bid").get<double>();
      net.weights = j.at("weights").get<std::vector<std::vector<double>>>();
      net.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("mlp model: ") + e.what());
    }
    net.validate();
    net.accum_w.clear();
    net.accum_b.clear();
    for (const auto& w : net.weights) net.accum_w.emplace_back(w.size(), 0.0);
    for (const auto& b : net.biases) net.accum_b.emplace_back(b.size(), 0.0);
    return net;
  }

  void validate() const {
    if (layer_dims.size() != 5 || layer_dims.front() != 2 || layer_dims.back() != 1) {
      throw ValidationError("mlp: layer_dims must be [2, H1, H2, H3, 1]");
    }
    for (int d : layer_dims) {
      if (d < 1) throw ValidationError("mlp: layer widths must be >= 1");
    }
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) {
      throw ValidationError("mlp: weight/bias layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const std::size_t want_w = static_cast<std::size_t>(layer_dims[l]) *
                                 static_cast<std::size_t>(layer_dims[l + 1]);
      if (weights[l].size() != want_w ||
          biases[l].size() != static_cast<std::size_t>(layer_dims[l + 1])) {
        throw ValidationError("mlp: layer " + std::to_string(l) + " shape mismatch");
      }
    }
    if (!(std_log_ectr > 0.0) || !(std_log_bid > 0.0)) {
      throw ValidationError("mlp: standardization stds must be > 0");
    }
  }
};

/*!
 * \brief Fresh network with fan-in-scaled uniform weights, zero biases, and
 *        feature standardization estimated from the dataset.
 */
inline MlpRanker make_mlp(const std::vector<int>& hidden, Activation activation,
                          std::uint64_t seed, const Dataset& ds) {
  if (hidden.size() != 3) throw ValidationError("mlp: expected exactly 3 hidden widths");
  if (ds.empty()) throw ValidationError("mlp: empty dataset");

  MlpRanker net;
  net.activation = activation;
  net.layer_dims = {2, hidden[0], hidden[1], hidden[2], 1};

  double m_e = 0.0, m_b = 0.0;
  for (const auto& rec : ds.pooled()) {
    m_e += std::log(rec.ectr);
    m_b += std::log(rec.bid);
  }
  const double n = static_cast<double>(ds.size());
  m_e /= n;
  m_b /= n;
  double v_e = 0.0, v_b = 0.0;
  for (const auto& rec : ds.pooled()) {
    v_e += (std::log(rec.ectr) - m_e) * (std::log(rec.ectr) - m_e);
    v_b += (std::log(rec.bid) - m_b) * (std::log(rec.bid) - m_b);
  }
  net.mean_log_ectr = m_e;
  net.mean_log_bid = m_b;
  net.std_log_ectr = std::max(std::sqrt(v_e / n), 1e-12);
  net.std_log_bid = std::max(std::sqrt(v_b / n), 1e-12);

  Rng rng = Rng(seed).derive(0x317);
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    const int in_dim = net.layer_dims[l];
    const int out_dim = net.layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    std::vector<double> w(static_cast<std::size_t>(in_dim) * out_dim);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(static_cast<std::size_t>(out_dim), 0.0);
    net.accum_w.emplace_back(static_cast<std::size_t>(in_dim) * out_dim, 0.0);
    net.accum_b.emplace_back(static_cast<std::size_t>(out_dim), 0.0);
  }
  net.validate();
  return net;
}

/*! \brief Gradient of the negated batch objective, shaped like the network. */
struct MlpGradient {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;
};

/*!
 * \brief Backpropagated gradient of -sauc over one mini-batch, with the
 *        batch-local normalizer. All-equal labels yield a zero gradient.
 */
inline MlpGradient backward(const MlpRanker& net, std::span<const AuctionRecord> batch,
                            double temperature) {
  if (batch.size() < 2) throw ValidationError("backward: batch needs at least 2 records");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("backward: temperature must be > 0");
  }
  const std::size_t b = batch.size();
  const std::size_t n_layers = net.n_layers();

  MlpGradient grad;
  for (const auto& w : net.weights) grad.w.emplace_back(w.size(), 0.0);
  for (const auto& bs : net.biases) grad.b.emplace_back(bs.size(), 0.0);

  // Forward pass with cached activations: acts[r][0] is the standardized
  // input, acts[r][l+1] the output of layer l.
  std::vector<std::vector<std::vector<double>>> acts(b);
  std::vector<double> s(b), ys(b);
  for (std::size_t r = 0; r < b; ++r) {
    auto& layers = acts[r];
    layers.resize(n_layers + 1);
    layers[0] = {(std::log(batch[r].ectr) - net.mean_log_ectr) / net.std_log_ectr,
                 (std::log(batch[r].bid) - net.mean_log_bid) / net.std_log_bid};
    for (std::size_t l = 0; l < n_layers; ++l) {
      const int out_dim = net.layer_dims[l + 1];
      const int in_dim = net.layer_dims[l];
      layers[l + 1].assign(static_cast<std::size_t>(out_dim), 0.0);
      for (int o = 0; o < out_dim; ++o) {
        double v = net.biases[l][static_cast<std::size_t>(o)];
        const double* row = net.weights[l].data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) v += row[i] * layers[l][static_cast<std::size_t>(i)];
        if (l + 1 < n_layers && net.activation == Activation::kTanh) v = std::tanh(v);
        layers[l + 1][static_cast<std::size_t>(o)] = v;
      }
    }
    s[r] = layers[n_layers][0];
    ys[r] = batch[r].y;
    if (!std::isfinite(s[r])) throw DivergenceError("backward: non-finite score");
  }

  const detail::PairWeights pw = detail::pair_weights(ys);
  double z = 0.0;
  for (std::size_t r = 0; r < b; ++r) z += ys[r] * pw.w[r];
  if (z == 0.0) return grad;

  const double inv_t = 1.0 / temperature;
  const double inv_z = 1.0 / z;
  std::vector<double> acc(b, 0.0);  // d(sauc)/d(s_r)
  for (std::size_t i = 0; i + 1 < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double dy = ys[i] - ys[j];
      if (dy == 0.0) continue;
      const double sig = sigmoid((s[i] - s[j]) * inv_t);
      const double c = 2.0 * inv_t * sig * (1.0 - sig) * dy * inv_z;
      acc[i] += c;
      acc[j] -= c;
    }
  }

  std::vector<double> delta, delta_prev;
  for (std::size_t r = 0; r < b; ++r) {
    if (acc[r] == 0.0) continue;
    delta.assign(1, -acc[r]);  // loss is -sauc
    for (std::size_t l = n_layers; l-- > 0;) {
      const int out_dim = net.layer_dims[l + 1];
      const int in_dim = net.layer_dims[l];
      const auto& input = acts[r][l];
      for (int o = 0; o < out_dim; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        grad.b[l][static_cast<std::size_t>(o)] += d;
        double* grow = grad.w[l].data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) grow[i] += d * input[static_cast<std::size_t>(i)];
      }
      if (l == 0) break;
      delta_prev.assign(static_cast<std::size_t>(in_dim), 0.0);
      for (int o = 0; o < out_dim; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        const double* row = net.weights[l].data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) delta_prev[static_cast<std::size_t>(i)] += d * row[i];
      }
      if (net.activation == Activation::kTanh) {
        for (int i = 0; i < in_dim; ++i) {
          const double a = acts[r][l][static_cast<std::size_t>(i)];
          delta_prev[static_cast<std::size_t>(i)] *= 1.0 - a * a;
        }
      }
      delta.swap(delta_prev);
    }
  }
  return grad;
}

/*!
 * \brief One AdaGrad update: accumulate squared gradients, then step each
 *        parameter by lr * g / (sqrt(accum) + eps).
 */
inline MlpRanker adagrad_step(MlpRanker net, const MlpGradient& grad, double learning_rate,
                              double epsilon) {
  if (!(learning_rate > 0.0)) throw ValidationError("adagrad_step: learning_rate must be > 0");
  if (!(epsilon > 0.0)) throw ValidationError("adagrad_step: epsilon must be > 0");
  if (grad.w.size() != net.weights.size() || grad.b.size() != net.biases.size()) {
    throw ValidationError("adagrad_step: gradient shape mismatch");
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (grad.w[l].size() != net.weights[l].size() || grad.b[l].size() != net.biases[l].size()) {
      throw ValidationError("adagrad_step: gradient shape mismatch");
    }
    for (std::size_t k = 0; k < net.weights[l].size(); ++k) {
      const double g = grad.w[l][k];
      net.accum_w[l][k] += g * g;
      net.weights[l][k] -= learning_rate * g / (std::sqrt(net.accum_w[l][k]) + epsilon);
      if (!std::isfinite(net.weights[l][k])) throw DivergenceError("adagrad_step: weight diverged");
    }
    for (std::size_t k = 0; k < net.biases[l].size(); ++k) {
      const double g = grad.b[l][k];
      net.accum_b[l][k] += g * g;
      net.biases[l][k] -= learning_rate * g / (std::sqrt(net.accum_b[l][k]) + epsilon);
      if (!std::isfinite(net.biases[l][k])) throw DivergenceError("adagrad_step: bias diverged");
    }
  }
  return net;
}

struct ImplicitFitOptions {
  std::vector<int> hidden = {16, 16, 8};
  Activation activation = Activation::kTanh;
  double learning_rate = 0.1;
  double temperature = 1.0;
  std::size_t batch_size = 100;
  int max_epochs = 40;
  double rel_tol = 1e-4;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
};

/*! \brief Scores of the whole dataset under the network, in pooled order. */
inline std::vector<ScoredRecord> mlp_scored(const MlpRanker& net, const Dataset& ds) {
  const auto& pooled = ds.pooled();
  std::vector<ScoredRecord> out(pooled.size());
  constexpr std::size_t kChunk = 1024;
  const std::size_t n_chunks = chunk_count(pooled.size(), kChunk);
  map_chunks<int>(n_chunks, [&](std::size_t k) {
    const std::size_t lo = k * kChunk;
    const std::size_t hi = std::min(pooled.size(), lo + kChunk);
    for (std::size_t i = lo; i < hi; ++i) {
      out[i] = ScoredRecord{net.forward(pooled[i]), pooled[i].y, pooled[i].click};
    }
    return 0;
  });
  return out;
}

/*!
 * \brief Train an MLP scorer with mini-batch AdaGrad on the smooth pairwise
 *        objective. Same shuffle, batch and stopping scheme as the explicit
 *        fit; the trace's param column carries the weight L2 norm.
 */
inline std::pair<MlpRanker, FitTrace> fit_implicit(const Dataset& ds,
                                                   const ImplicitFitOptions& opt) {
  if (ds.empty()) throw ValidationError("fit_implicit: empty dataset");
  if (opt.batch_size < 2) throw ValidationError("fit_implicit: batch_size must be >= 2");
  if (opt.max_epochs < 0) throw ValidationError("fit_implicit: max_epochs must be >= 0");
  if (!(opt.temperature > 0.0)) throw ValidationError("fit_implicit: temperature must be > 0");

  MlpRanker net = make_mlp(opt.hidden, opt.activation, opt.seed, ds);

  std::vector<AuctionRecord> shuffled(ds.pooled());
  Rng rng = Rng(opt.seed).derive(0x5d9f);
  rng.shuffle(shuffled.data(), shuffled.size());

  auto weight_norm = [&](const MlpRanker& m) {
    double sq = 0.0;
    for (const auto& w : m.weights) {
      for (double v : w) sq += v * v;
    }
    return std::sqrt(sq);
  };
  auto log_epoch = [&](FitTrace& trace, int epoch, const MlpRanker& m, double& sauc_value) {
    const auto scored = mlp_scored(m, ds);
    const MetricReport s_rep = sauc(scored, opt.temperature);
    const MetricReport r_rep = auc_r(scored);
    trace.points.push_back(FitTracePoint{epoch, weight_norm(m), s_rep.value, "sauc"});
    trace.points.push_back(FitTracePoint{epoch, weight_norm(m), r_rep.value, "auc_r"});
    sauc_value = s_rep.value;
  };

  FitTrace trace;
  double last = 0.0;
  log_epoch(trace, 0, net, last);
  double improvement = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    if (!(improvement > opt.rel_tol)) break;
    for (std::size_t start = 0; start < shuffled.size(); start += opt.batch_size) {
      const std::size_t len = std::min(opt.batch_size, shuffled.size() - start);
      if (len < 2) break;
      const MlpGradient g = backward(
          net, std::span<const AuctionRecord>(shuffled.data() + start, len), opt.temperature);
      net = adagrad_step(std::move(net), g, opt.learning_rate, opt.epsilon);
    }
    double now = 0.0;
    log_epoch(trace, epoch, net, now);
    if (!std::isfinite(now)) throw DivergenceError("fit_implicit: objective diverged");
    improvement = now - last;
    last = now;
  }
  return {net, trace};
}

}  // namespace revrank

#endif  // REVRANK_MLP_RANKER_HPP_
