#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <revrank/dataset.hpp>
#include <revrank/explicit_ranker.hpp>
#include <revrank/metrics.hpp>
#include <revrank/mlp_ranker.hpp>
#include <revrank/parallel.hpp>

#include "oracles.hpp"

using revrank::Activation;
using revrank::AuctionRecord;
using revrank::Dataset;
using revrank::make_record;
using revrank::MlpGradient;
using revrank::MlpRanker;

namespace {

MlpRanker manual_net(Activation act, std::vector<int> dims,
                     std::vector<std::vector<double>> weights,
                     std::vector<std::vector<double>> biases) {
  MlpRanker net;
  net.activation = act;
  net.layer_dims = std::move(dims);
  net.weights = std::move(weights);
  net.biases = std::move(biases);
  for (const auto& w : net.weights) net.accum_w.emplace_back(w.size(), 0.0);
  for (const auto& b : net.biases) net.accum_b.emplace_back(b.size(), 0.0);
  net.validate();
  return net;
}

MlpRanker scalar_chain(Activation act, double w0a, double w0b, double w1, double w2, double w3,
                       const std::vector<double>& biases) {
  return manual_net(act, {2, 1, 1, 1, 1}, {{w0a, w0b}, {w1}, {w2}, {w3}},
                    {{biases[0]}, {biases[1]}, {biases[2]}, {biases[3]}});
}

Dataset random_ds(std::mt19937_64& gen, int n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    const double ectr = 0.01 + 0.95 * unit(gen);
    const double bid = 0.3 + 4.0 * unit(gen);
    const int click = unit(gen) < ectr ? 1 : 0;
    ds.add(make_record("imp" + std::to_string(i), ectr, bid, click));
  }
  return ds;
}

double neg_sauc_of(const MlpRanker& net, std::span<const AuctionRecord> batch, double t) {
  std::vector<oracles::Pt> pts;
  pts.reserve(batch.size());
  for (const auto& rec : batch) pts.push_back({net.forward(rec), rec.y});
  double v = 0.0;
  if (!oracles::sauc(pts, t, &v)) return 0.0;
  return -v;
}

}  // namespace

TEST_CASE("an all-zero network scores everything exactly zero") {
  const auto net = manual_net(Activation::kTanh, {2, 2, 2, 2, 1},
                              {std::vector<double>(4, 0.0), std::vector<double>(4, 0.0),
                               std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)},
                              {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0}});
  REQUIRE(net.forward(make_record("a", 0.3, 2.5, 1)) == 0.0);
  REQUIRE(net.forward_features(-7.0, 3.0) == 0.0);
}

TEST_CASE("a linear chain with unit passthrough reproduces the power-rule log score") {
  const double beta = 0.62;
  const auto net =
      scalar_chain(Activation::kIdentity, beta, 1.0, 1.0, 1.0, 1.0, {0.0, 0.0, 0.0, 0.0});
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int rep = 0; rep < 40; ++rep) {
    const auto rec = make_record("a", 0.01 + 0.99 * unit(gen), 0.2 + 4.0 * unit(gen), 0);
    const double expect = beta * std::log(rec.ectr) + std::log(rec.bid);
    REQUIRE(net.forward(rec) == expect);
  }
}

TEST_CASE("identity-activation nets compute the straight-line composition") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> coef(-1.5, 1.5);
  for (int rep = 0; rep < 25; ++rep) {
    const double w0a = coef(gen), w0b = coef(gen), w1 = coef(gen), w2 = coef(gen), w3 = coef(gen);
    const std::vector<double> bs = {coef(gen), coef(gen), coef(gen), coef(gen)};
    auto net = scalar_chain(Activation::kIdentity, w0a, w0b, w1, w2, w3, bs);
    net.mean_log_ectr = coef(gen);
    net.std_log_ectr = 0.5 + std::fabs(coef(gen));
    net.mean_log_bid = coef(gen);
    net.std_log_bid = 0.5 + std::fabs(coef(gen));

    const double le = coef(gen), lb = coef(gen);
    const double x0 = (le - net.mean_log_ectr) / net.std_log_ectr;
    const double x1 = (lb - net.mean_log_bid) / net.std_log_bid;
    const double expect = w3 * (w2 * (w1 * (w0a * x0 + w0b * x1 + bs[0]) + bs[1]) + bs[2]) + bs[3];
    REQUIRE_THAT(net.forward_features(le, lb), Catch::Matchers::WithinRel(expect, 1e-12) ||
                                                   Catch::Matchers::WithinAbs(expect, 1e-12));
  }
}

TEST_CASE("backward matches the hand chain rule on a scalar linear net") {
  const double t = 0.8;
  const auto net =
      scalar_chain(Activation::kIdentity, 0.4, 0.9, 1.1, -0.7, 0.6, {0.05, -0.1, 0.2, 0.0});
  Dataset ds;
  ds.add(make_record("a", 0.3, 2.0, 1));
  ds.add(make_record("a", 0.6, 1.5, 0));
  const auto grad = revrank::backward(net, ds.pooled(), t);

  // Two records, one pair: sauc = 2 sigmoid((s0 - s1)/t) - 1, so
  // d(-sauc)/d s0 = -(2/t) sig (1 - sig) and the opposite sign for s1.
  auto hidden = [&](const AuctionRecord& rec) {
    const double x0 = std::log(rec.ectr), x1 = std::log(rec.bid);
    std::vector<double> h(4);
    h[0] = 0.4 * x0 + 0.9 * x1 + 0.05;
    h[1] = 1.1 * h[0] - 0.1;
    h[2] = -0.7 * h[1] + 0.2;
    h[3] = 0.6 * h[2];
    return h;
  };
  const auto h0 = hidden(ds.record(0));
  const auto h1 = hidden(ds.record(1));
  const double sig = revrank::sigmoid((h0[3] - h1[3]) / t);
  const double d0 = -(2.0 / t) * sig * (1.0 - sig);
  const double d1 = -d0;

  // Back through the chain: delta at layer l scales by the downstream weights.
  const double c3 = 1.0, c2 = 0.6, c1 = 0.6 * -0.7, c0 = 0.6 * -0.7 * 1.1;
  const auto x = [&](const AuctionRecord& rec) {
    return std::vector<double>{std::log(rec.ectr), std::log(rec.bid)};
  };
  const auto x0v = x(ds.record(0)), x1v = x(ds.record(1));

  REQUIRE_THAT(grad.w[3][0], Catch::Matchers::WithinRel(d0 * c3 * h0[2] + d1 * c3 * h1[2], 1e-12));
  REQUIRE_THAT(grad.b[3][0], Catch::Matchers::WithinAbs(d0 * c3 + d1 * c3, 1e-14));
  REQUIRE_THAT(grad.w[2][0], Catch::Matchers::WithinRel(d0 * c2 * h0[1] + d1 * c2 * h1[1], 1e-12));
  REQUIRE_THAT(grad.b[2][0], Catch::Matchers::WithinAbs(d0 * c2 + d1 * c2, 1e-14));
  REQUIRE_THAT(grad.w[1][0], Catch::Matchers::WithinRel(d0 * c1 * h0[0] + d1 * c1 * h1[0], 1e-12));
  REQUIRE_THAT(grad.w[0][0],
               Catch::Matchers::WithinRel(d0 * c0 * x0v[0] + d1 * c0 * x1v[0], 1e-12));
  REQUIRE_THAT(grad.w[0][1],
               Catch::Matchers::WithinRel(d0 * c0 * x0v[1] + d1 * c0 * x1v[1], 1e-12));
  REQUIRE_THAT(grad.b[0][0], Catch::Matchers::WithinAbs(d0 * c0 + d1 * c0, 1e-14));
}

TEST_CASE("backward matches finite differences across seeds and widths") {
  const double t = 0.7;
  const double h = 1e-6;
  for (const auto& widths : {std::vector<int>{4, 3, 2}, std::vector<int>{8, 8, 4}}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      std::mt19937_64 gen(seed * 91);
      const Dataset ds = random_ds(gen, 12);
      MlpRanker net = revrank::make_mlp(widths, Activation::kTanh, seed, ds);
      const std::span<const AuctionRecord> batch(ds.pooled());
      const MlpGradient grad = revrank::backward(net, batch, t);

      // Probe a spread of parameters in every layer rather than all of them.
      for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const std::size_t stride = std::max<std::size_t>(1, net.weights[l].size() / 5);
        for (std::size_t k = 0; k < net.weights[l].size(); k += stride) {
          MlpRanker lo = net, hi = net;
          lo.weights[l][k] -= h;
          hi.weights[l][k] += h;
          const double fd =
              (neg_sauc_of(hi, batch, t) - neg_sauc_of(lo, batch, t)) / (2.0 * h);
          REQUIRE_THAT(grad.w[l][k], Catch::Matchers::WithinRel(fd, 1e-5) ||
                                         Catch::Matchers::WithinAbs(fd, 1e-9));
        }
        MlpRanker lo = net, hi = net;
        lo.biases[l][0] -= h;
        hi.biases[l][0] += h;
        const double fd = (neg_sauc_of(hi, batch, t) - neg_sauc_of(lo, batch, t)) / (2.0 * h);
        REQUIRE_THAT(grad.b[l][0], Catch::Matchers::WithinRel(fd, 1e-5) ||
                                       Catch::Matchers::WithinAbs(fd, 1e-9));
      }
    }
  }
}

TEST_CASE("backward returns zeros when the batch labels are flat") {
  std::mt19937_64 gen(7);
  Dataset ds;
  ds.add(make_record("a", 0.2, 1.0, 0));
  ds.add(make_record("a", 0.4, 2.0, 0));
  const auto net = revrank::make_mlp({4, 3, 2}, Activation::kTanh, 1, ds);
  const auto grad = revrank::backward(net, ds.pooled(), 1.0);
  for (const auto& layer : grad.w) {
    for (double g : layer) REQUIRE(g == 0.0);
  }
  Dataset one;
  one.add(make_record("a", 0.2, 1.0, 1));
  REQUIRE_THROWS_AS(revrank::backward(net, one.pooled(), 1.0), revrank::ValidationError);
  REQUIRE_THROWS_AS(revrank::backward(net, ds.pooled(), 0.0), revrank::ValidationError);
}

TEST_CASE("the first adagrad step is lr g over abs g plus eps") {
  auto net = scalar_chain(Activation::kIdentity, 1.0, 1.0, 1.0, 1.0, 1.0, {0.0, 0.0, 0.0, 0.0});
  MlpGradient grad;
  grad.w = {{0.5, -0.25}, {2.0}, {0.0}, {-1.0}};
  grad.b = {{0.5}, {0.0}, {-2.0}, {0.25}};
  const double lr = 0.1, eps = 1e-8;
  const auto stepped = revrank::adagrad_step(net, grad, lr, eps);

  REQUIRE(stepped.weights[0][0] == 1.0 - lr * 0.5 / (0.5 + eps));
  REQUIRE(stepped.weights[0][1] == 1.0 - lr * -0.25 / (0.25 + eps));
  REQUIRE(stepped.weights[1][0] == 1.0 - lr * 2.0 / (2.0 + eps));
  REQUIRE(stepped.weights[2][0] == 1.0);
  REQUIRE(stepped.biases[2][0] == 0.0 - lr * -2.0 / (2.0 + eps));
  REQUIRE(stepped.accum_w[0][0] == 0.25);
  REQUIRE(stepped.accum_w[2][0] == 0.0);
}

TEST_CASE("two adagrad steps accumulate squared gradients in the denominator") {
  auto net = scalar_chain(Activation::kIdentity, 1.0, 1.0, 1.0, 1.0, 1.0, {0.0, 0.0, 0.0, 0.0});
  MlpGradient g1, g2;
  g1.w = {{0.5, 0.0}, {0.0}, {0.0}, {0.0}};
  g1.b = {{0.0}, {0.0}, {0.0}, {0.0}};
  g2.w = {{-0.25, 0.0}, {0.0}, {0.0}, {0.0}};
  g2.b = {{0.0}, {0.0}, {0.0}, {0.0}};
  const double lr = 0.2, eps = 1e-8;
  const auto after = revrank::adagrad_step(revrank::adagrad_step(net, g1, lr, eps), g2, lr, eps);

  const double accum = 0.5 * 0.5 + 0.25 * 0.25;
  const double expect = 1.0 - lr * 0.5 / (0.5 + eps) - lr * -0.25 / (std::sqrt(accum) + eps);
  REQUIRE_THAT(after.weights[0][0], Catch::Matchers::WithinRel(expect, 1e-15));
  REQUIRE(after.accum_w[0][0] == accum);
}

TEST_CASE("adagrad accumulators never decrease over random training steps") {
  std::mt19937_64 gen(8);
  const Dataset ds = random_ds(gen, 30);
  MlpRanker net = revrank::make_mlp({4, 3, 2}, Activation::kTanh, 2, ds);
  std::vector<std::vector<double>> prev_w = net.accum_w;
  for (int step = 0; step < 6; ++step) {
    const auto grad = revrank::backward(net, ds.pooled(), 0.9);
    net = revrank::adagrad_step(std::move(net), grad, 0.05, 1e-8);
    for (std::size_t l = 0; l < net.accum_w.size(); ++l) {
      for (std::size_t k = 0; k < net.accum_w[l].size(); ++k) {
        REQUIRE(net.accum_w[l][k] >= prev_w[l][k]);
      }
    }
    prev_w = net.accum_w;
  }
}

TEST_CASE("adagrad validates shapes and rates") {
  auto net = scalar_chain(Activation::kIdentity, 1.0, 1.0, 1.0, 1.0, 1.0, {0.0, 0.0, 0.0, 0.0});
  MlpGradient bad;
  bad.w = {{0.5}};
  bad.b = {{0.0}};
  REQUIRE_THROWS_AS(revrank::adagrad_step(net, bad, 0.1, 1e-8), revrank::ValidationError);
  MlpGradient ok;
  ok.w = {{0.0, 0.0}, {0.0}, {0.0}, {0.0}};
  ok.b = {{0.0}, {0.0}, {0.0}, {0.0}};
  REQUIRE_THROWS_AS(revrank::adagrad_step(net, ok, 0.0, 1e-8), revrank::ValidationError);
  REQUIRE_THROWS_AS(revrank::adagrad_step(net, ok, 0.1, 0.0), revrank::ValidationError);
}

TEST_CASE("fresh networks standardize features and bound their weights by fan-in") {
  Dataset ds;
  ds.add(make_record("a", 0.1, 1.0, 0));
  ds.add(make_record("a", 0.4, 2.0, 1));
  ds.add(make_record("a", 0.9, 4.0, 0));
  const auto net = revrank::make_mlp({5, 4, 3}, Activation::kTanh, 9, ds);

  double m = (std::log(0.1) + std::log(0.4) + std::log(0.9)) / 3.0;
  double v = 0.0;
  for (double e : {0.1, 0.4, 0.9}) v += (std::log(e) - m) * (std::log(e) - m);
  REQUIRE_THAT(net.mean_log_ectr, Catch::Matchers::WithinRel(m, 1e-12));
  REQUIRE_THAT(net.std_log_ectr, Catch::Matchers::WithinRel(std::sqrt(v / 3.0), 1e-12));

  REQUIRE(net.layer_dims == std::vector<int>{2, 5, 4, 3, 1});
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_dims[l]));
    for (double w : net.weights[l]) {
      REQUIRE(std::fabs(w) <= bound);
      REQUIRE(w != 0.0);
    }
    for (double b : net.biases[l]) REQUIRE(b == 0.0);
    for (double a : net.accum_w[l]) REQUIRE(a == 0.0);
  }

  const auto same = revrank::make_mlp({5, 4, 3}, Activation::kTanh, 9, ds);
  REQUIRE(same.weights == net.weights);
  const auto other = revrank::make_mlp({5, 4, 3}, Activation::kTanh, 10, ds);
  REQUIRE(other.weights != net.weights);
}

TEST_CASE("constant features floor the standardization spread") {
  Dataset ds;
  for (int i = 0; i < 4; ++i) ds.add(make_record("a", 0.5, 2.0, i % 2));
  const auto net = revrank::make_mlp({3, 3, 3}, Activation::kTanh, 1, ds);
  REQUIRE(net.std_log_ectr == 1e-12);
  REQUIRE(net.std_log_bid == 1e-12);
}

TEST_CASE("network construction and validation reject bad shapes") {
  Dataset ds;
  ds.add(make_record("a", 0.5, 2.0, 1));
  REQUIRE_THROWS_AS(revrank::make_mlp({4, 4}, Activation::kTanh, 1, ds),
                    revrank::ValidationError);
  REQUIRE_THROWS_AS(revrank::make_mlp({4, 4, 4, 4}, Activation::kTanh, 1, ds),
                    revrank::ValidationError);
  REQUIRE_THROWS_AS(revrank::make_mlp({4, 0, 4}, Activation::kTanh, 1, ds),
                    revrank::ValidationError);
  REQUIRE_THROWS_AS(revrank::make_mlp({4, 4, 4}, Activation::kTanh, 1, Dataset{}),
                    revrank::ValidationError);
}

TEST_CASE("models serialize without training state and load back bit-identically") {
  std::mt19937_64 gen(9);
  const Dataset ds = random_ds(gen, 20);
  MlpRanker net = revrank::make_mlp({4, 3, 2}, Activation::kTanh, 3, ds);
  const auto grad = revrank::backward(net, ds.pooled(), 1.0);
  net = revrank::adagrad_step(std::move(net), grad, 0.1, 1e-8);

  const auto j = net.to_json();
  REQUIRE(!j.contains("accum_w"));
  const auto loaded = MlpRanker::from_json(j);
  REQUIRE(loaded.weights == net.weights);
  REQUIRE(loaded.biases == net.biases);
  REQUIRE(loaded.mean_log_ectr == net.mean_log_ectr);
  for (const auto& layer : loaded.accum_w) {
    for (double a : layer) REQUIRE(a == 0.0);
  }
  for (const auto& rec : ds.pooled()) REQUIRE(loaded.forward(rec) == net.forward(rec));

  auto bad = j;
  bad["layer_dims"] = std::vector<int>{2, 4, 4, 1};
  REQUIRE_THROWS_AS(MlpRanker::from_json(bad), revrank::ValidationError);
  bad = j;
  bad.erase("weights");
  REQUIRE_THROWS_AS(MlpRanker::from_json(bad), revrank::ParseError);
  bad = j;
  bad["activation"] = "relu";
  REQUIRE_THROWS_AS(MlpRanker::from_json(bad), revrank::ValidationError);
}

TEST_CASE("bulk scoring matches forward and is thread-count invariant") {
  std::mt19937_64 gen(10);
  const Dataset ds = random_ds(gen, 3000);
  const auto net = revrank::make_mlp({8, 8, 4}, Activation::kTanh, 4, ds);
  revrank::set_max_threads(1);
  const auto serial = revrank::mlp_scored(net, ds);
  for (std::size_t i = 0; i < ds.size(); i += 97) {
    REQUIRE(serial[i].score == net.forward(ds.record(i)));
    REQUIRE(serial[i].y == ds.record(i).y);
  }
  revrank::set_max_threads(4);
  const auto parallel = revrank::mlp_scored(net, ds);
  revrank::set_max_threads(1);
  for (std::size_t i = 0; i < ds.size(); ++i) REQUIRE(serial[i].score == parallel[i].score);
}

TEST_CASE("implicit fit with zero epochs returns the freshly seeded network") {
  std::mt19937_64 gen(11);
  const Dataset ds = random_ds(gen, 40);
  revrank::ImplicitFitOptions opt;
  opt.hidden = {4, 3, 2};
  opt.max_epochs = 0;
  opt.seed = 6;
  const auto [net, trace] = revrank::fit_implicit(ds, opt);
  const auto fresh = revrank::make_mlp(opt.hidden, opt.activation, opt.seed, ds);
  REQUIRE(net.weights == fresh.weights);
  REQUIRE(net.biases == fresh.biases);
  REQUIRE(trace.points.size() == 2);
  REQUIRE(trace.points[0].step == 0);

  double sq = 0.0;
  for (const auto& w : net.weights) {
    for (double v : w) sq += v * v;
  }
  REQUIRE_THAT(trace.points[0].param, Catch::Matchers::WithinRel(std::sqrt(sq), 1e-15));
}

TEST_CASE("implicit fit is deterministic and improves on separable data") {
  Dataset ds;
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 150; ++i) {
    const double e = 0.02 + 0.9 * unit(gen);
    const double b = 0.5 + 2.0 * unit(gen);
    ds.add(make_record("i" + std::to_string(i), e, b, e * b > 0.8 ? 1 : 0));
  }
  revrank::ImplicitFitOptions opt;
  opt.hidden = {6, 5, 3};
  opt.max_epochs = 6;
  opt.batch_size = 50;
  opt.learning_rate = 0.15;
  opt.temperature = 0.5;
  const auto [a, ta] = revrank::fit_implicit(ds, opt);
  const auto [b2, tb] = revrank::fit_implicit(ds, opt);
  REQUIRE(a.weights == b2.weights);
  REQUIRE(ta.points.size() == tb.points.size());
  REQUIRE(ta.points.back().objective == tb.points.back().objective);

  const double init_sauc = ta.points[0].objective;
  double best_sauc = init_sauc;
  for (std::size_t i = 0; i < ta.points.size(); i += 2) {
    best_sauc = std::max(best_sauc, ta.points[i].objective);
  }
  REQUIRE(best_sauc > init_sauc);
  const double final_sauc = ta.points[ta.points.size() - 2].objective;
  REQUIRE(final_sauc >= init_sauc - 0.05);

  revrank::ImplicitFitOptions bad = opt;
  bad.batch_size = 1;
  REQUIRE_THROWS_AS(revrank::fit_implicit(ds, bad), revrank::ValidationError);
  bad = opt;
  bad.temperature = 0.0;
  REQUIRE_THROWS_AS(revrank::fit_implicit(ds, bad), revrank::ValidationError);
}
