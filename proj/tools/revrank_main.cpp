/*!
 * \brief revrank command line tool.
 *
 * Subcommands:
 *   gen           synthesize an auction log plus its latent CTR truth
 *   eval          compute an offline ranking metric for a scorer on a log
 *   fit-explicit  fit the calibrated power-rule scorer (grid, sgd or staged)
 *   fit-implicit  fit the small MLP scorer
 *   replay        re-run logged auctions under a scorer and report RPM
 *   confusion     paired offline/online metric agreement experiment
 *
 * Every subcommand echoes its effective configuration (all defaults
 * resolved) to stderr as one JSON line and writes its result to stdout as
 * one JSON line.  Exit codes: 0 success, 2 usage error, 3 invalid input or
 * diverged fit, 4 degenerate metric, 5 file I/O failure.
 */
#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <revrank/revrank.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInvalid = 3;
constexpr int kExitDegenerate = 4;
constexpr int kExitIo = 5;

using nlohmann::ordered_json;

void emit_config(const ordered_json& cfg) { std::cerr << cfg.dump() << "\n"; }

void emit_result(const ordered_json& result) { std::cout << result.dump() << "\n"; }

revrank::Dataset load_data(const std::string& path, const std::string& format) {
  if (format == "auto") return revrank::load_dataset(path);
  return revrank::load_dataset(path, revrank::format_from_name(format));
}

ordered_json read_json_file(const std::string& path) {
  const std::string text = revrank::detail::read_file(path);
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw revrank::ParseError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const ordered_json& j) {
  revrank::detail::write_file(path, j.dump(2) + "\n");
}

revrank::ExplicitRankerParams load_params(const std::string& path) {
  return revrank::ExplicitRankerParams::from_json(read_json_file(path));
}

revrank::MlpRanker load_model(const std::string& path) {
  return revrank::MlpRanker::from_json(read_json_file(path));
}

/*! \brief Scorer plus a short descriptor for config echo. */
struct ScorerChoice {
  revrank::Scorer scorer;
  ordered_json descriptor;
};

/*!
 * \brief Resolve --params / --model into a scorer.  With neither given the
 *        scorer is the uncalibrated power rule at beta = 1 (rank by
 *        ectr * bid).
 */
ScorerChoice resolve_scorer(const std::string& params_path, const std::string& model_path) {
  if (!params_path.empty() && !model_path.empty()) {
    throw CLI::ValidationError("--params and --model are mutually exclusive");
  }
  ScorerChoice choice;
  if (!model_path.empty()) {
    auto net = load_model(model_path);
    choice.scorer = [net](const revrank::AuctionRecord& rec) { return net.forward(rec); };
    choice.descriptor = ordered_json{{"kind", "mlp"}, {"path", model_path}};
    return choice;
  }
  revrank::ExplicitRankerParams params;
  if (!params_path.empty()) {
    params = load_params(params_path);
    choice.descriptor = ordered_json{{"kind", "explicit"}, {"path", params_path}};
  } else {
    choice.descriptor = ordered_json{{"kind", "explicit"}, {"beta", 1.0}, {"calibration", "identity"}};
  }
  choice.scorer = revrank::make_scorer(params);
  return choice;
}

std::vector<revrank::MetricKind> parse_metric_list(const std::string& csv) {
  std::vector<revrank::MetricKind> kinds;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string name =
        csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (name.empty()) throw CLI::ValidationError("--metrics: empty metric name");
    kinds.push_back(revrank::metric_from_name(name));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return kinds;
}

/*! \brief Options shared by the synthetic-log commands, bound onto a SimConfig. */
struct SimFlags {
  revrank::SimConfig cfg;
  std::string bias_kind = "identity";
  std::vector<double> bias_knots_x, bias_knots_y;

  void attach(CLI::App* sub) {
    sub->add_option("--impressions", cfg.n_impressions, "Number of auctions to synthesize")
        ->capture_default_str();
    sub->add_option("--ads", cfg.ads_per_impression, "Candidate ads per auction")
        ->capture_default_str();
    sub->add_option("--slots", cfg.slots, "Ads shown per auction")->capture_default_str();
    sub->add_option("--ctr-alpha", cfg.ctr_alpha, "Beta prior alpha for true CTR")
        ->capture_default_str();
    sub->add_option("--ctr-beta", cfg.ctr_beta, "Beta prior beta for true CTR")
        ->capture_default_str();
    sub->add_option("--bias", bias_kind, "eCTR bias shape: identity, power or piecewise")
        ->capture_default_str();
    sub->add_option("--bias-exponent", cfg.bias.exponent, "Exponent of the power bias")
        ->capture_default_str();
    sub->add_option("--bias-scale", cfg.bias.scale, "Scale of the power bias")
        ->capture_default_str();
    sub->add_option("--bias-knots-x", bias_knots_x, "CTR knots of the piecewise bias")
        ->delimiter(',');
    sub->add_option("--bias-knots-y", bias_knots_y, "eCTR knots of the piecewise bias")
        ->delimiter(',');
    sub->add_option("--ectr-noise", cfg.ectr_noise, "Log-odds noise sigma applied to eCTR")
        ->capture_default_str();
    sub->add_option("--bid-mu", cfg.bid_mu, "Log-mean of the lognormal bid")
        ->capture_default_str();
    sub->add_option("--bid-sigma", cfg.bid_sigma, "Log-sigma of the lognormal bid")
        ->capture_default_str();
    sub->add_option("--bid-ctr-corr", cfg.bid_ctr_corr, "Gaussian copula corr of bid and CTR")
        ->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Generator seed")->capture_default_str();
  }

  revrank::SimConfig resolve() {
    cfg.bias.kind = revrank::BiasFn::kind_from_name(bias_kind);
    cfg.bias.knots_x = bias_knots_x;
    cfg.bias.knots_y = bias_knots_y;
    cfg.validate();
    return cfg;
  }
};

int run_gen(const SimFlags& flags_in, const std::string& out, std::string truth,
            const std::string& format, int threads) {
  SimFlags flags = flags_in;
  const revrank::SimConfig cfg = flags.resolve();
  if (truth.empty()) truth = out + ".truth.jsonl";

  ordered_json echo;
  echo["command"] = "gen";
  echo["out"] = out;
  echo["truth"] = truth;
  echo["format"] = format;
  echo["threads"] = threads;
  echo["sim"] = cfg.to_json();
  emit_config(echo);

  auto [ds, latent] = revrank::generate(cfg);
  if (format == "auto") {
    revrank::save_dataset(ds, out);
  } else {
    revrank::save_dataset(ds, out, revrank::format_from_name(format));
  }
  latent.save_jsonl(truth, ds);

  std::size_t clicks = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) clicks += static_cast<std::size_t>(ds.record(i).click);
  ordered_json result;
  result["out"] = out;
  result["truth"] = truth;
  result["n_records"] = ds.size();
  result["n_impressions"] = ds.impressions().size();
  result["n_clicks"] = clicks;
  emit_result(result);
  return kExitOk;
}

int run_eval(const std::string& data, const std::string& format, const std::string& params_path,
             const std::string& model_path, const std::string& metric, double temperature,
             bool per_impression, int threads) {
  const revrank::MetricKind kind = revrank::metric_from_name(metric);
  ScorerChoice scorer = resolve_scorer(params_path, model_path);

  ordered_json echo;
  echo["command"] = "eval";
  echo["data"] = data;
  echo["format"] = format;
  echo["scorer"] = scorer.descriptor;
  echo["metric"] = metric;
  echo["temperature"] = temperature;
  echo["per_impression"] = per_impression;
  echo["threads"] = threads;
  emit_config(echo);

  const revrank::Dataset ds = load_data(data, format);
  std::vector<revrank::ScoredRecord> scored;
  scored.reserve(ds.size());
  for (const auto& rec : ds.pooled()) scored.push_back({scorer.scorer(rec), rec.y, rec.click});

  ordered_json result;
  result["data"] = data;
  result["n_records"] = ds.size();
  if (!per_impression) {
    const auto report = revrank::evaluate_metric(kind, scored, temperature);
    result["metric"] = report.to_json();
    emit_result(result);
    return kExitOk;
  }

  // Unweighted mean of the metric over impressions where it is defined;
  // single-ad or constant-outcome impressions are skipped, not failed.
  double sum = 0.0;
  std::size_t used = 0, skipped = 0;
  for (const auto& imp : ds.impressions()) {
    std::vector<revrank::ScoredRecord> group;
    group.reserve(imp.record_indices.size());
    for (std::size_t idx : imp.record_indices) group.push_back(scored[idx]);
    try {
      sum += revrank::evaluate_metric(kind, group, temperature).value;
      ++used;
    } catch (const revrank::DegenerateMetricError&) {
      ++skipped;
    }
  }
  if (used == 0) throw revrank::DegenerateMetricError("eval: no impression has a defined metric");
  ordered_json per;
  per["name"] = metric;
  per["aggregation"] = "mean_per_impression";
  per["value"] = sum / static_cast<double>(used);
  per["n_impressions_used"] = used;
  per["n_impressions_skipped"] = skipped;
  result["metric"] = per;
  emit_result(result);
  return kExitOk;
}

int run_fit_explicit(const std::string& data, const std::string& format, const std::string& mode,
                     const std::string& out, const std::string& trace_path,
                     const std::string& init_params, double init_beta, int knots,
                     const revrank::GridOptions& grid_opt, const revrank::SgdOptions& sgd_opt,
                     int threads) {
  ordered_json echo;
  echo["command"] = "fit-explicit";
  echo["data"] = data;
  echo["format"] = format;
  echo["mode"] = mode;
  echo["out"] = out;
  echo["trace"] = trace_path;
  echo["init_params"] = init_params;
  echo["init_beta"] = init_beta;
  echo["knots"] = knots;
  echo["grid"] = ordered_json{
      {"beta_min", grid_opt.beta_min}, {"beta_max", grid_opt.beta_max}, {"step", grid_opt.step}};
  echo["sgd"] = ordered_json{{"batch_size", sgd_opt.batch_size},
                             {"learning_rate", sgd_opt.learning_rate},
                             {"temperature", sgd_opt.temperature},
                             {"max_epochs", sgd_opt.max_epochs},
                             {"rel_tol", sgd_opt.rel_tol},
                             {"seed", sgd_opt.seed}};
  echo["threads"] = threads;
  emit_config(echo);

  const revrank::Dataset ds = load_data(data, format);

  revrank::ExplicitRankerParams init;
  init.beta = init_beta;
  if (!init_params.empty()) {
    init = load_params(init_params);
  } else if (knots > 0) {
    init.calibration = revrank::Calibration::at_ectr_quantiles(ds, knots);
  }

  revrank::ExplicitRankerParams fitted;
  revrank::FitTrace trace;
  if (mode == "grid") {
    auto res = revrank::grid_search_beta(ds, init.calibration, grid_opt);
    fitted.beta = res.beta;
    fitted.calibration = init.calibration;
    trace = std::move(res.trace);
  } else if (mode == "sgd") {
    revrank::SgdOptions opt = sgd_opt;
    opt.update_calibration = knots > 0 || !init_params.empty();
    std::tie(fitted, trace) = revrank::fit_sgd(ds, init, opt);
  } else if (mode == "staged") {
    std::tie(fitted, trace) = revrank::fit_staged(ds, init, sgd_opt, grid_opt);
  } else {
    throw CLI::ValidationError("--mode must be grid, sgd or staged");
  }

  if (!out.empty()) write_json_file(out, fitted.to_json());
  if (!trace_path.empty()) trace.write_csv(trace_path);

  const auto scored = revrank::log_scored(fitted, ds);
  ordered_json result;
  result["mode"] = mode;
  result["params"] = fitted.to_json();
  result["out"] = out;
  result["auc_r"] = revrank::evaluate_metric(revrank::MetricKind::kAucR, scored, 1.0).value;
  result["sauc"] =
      revrank::evaluate_metric(revrank::MetricKind::kSauc, scored, sgd_opt.temperature).value;
  result["n_trace_points"] = trace.points.size();
  emit_result(result);
  return kExitOk;
}

int run_fit_implicit(const std::string& data, const std::string& format, const std::string& out,
                     const std::string& trace_path, const std::string& activation,
                     const revrank::ImplicitFitOptions& opt_in, int threads) {
  revrank::ImplicitFitOptions opt = opt_in;
  opt.activation = revrank::activation_from_name(activation);

  ordered_json echo;
  echo["command"] = "fit-implicit";
  echo["data"] = data;
  echo["format"] = format;
  echo["out"] = out;
  echo["trace"] = trace_path;
  echo["hidden"] = opt.hidden;
  echo["activation"] = activation;
  echo["learning_rate"] = opt.learning_rate;
  echo["temperature"] = opt.temperature;
  echo["batch_size"] = opt.batch_size;
  echo["max_epochs"] = opt.max_epochs;
  echo["rel_tol"] = opt.rel_tol;
  echo["epsilon"] = opt.epsilon;
  echo["seed"] = opt.seed;
  echo["threads"] = threads;
  emit_config(echo);

  const revrank::Dataset ds = load_data(data, format);
  auto [net, trace] = revrank::fit_implicit(ds, opt);

  write_json_file(out, net.to_json());
  if (!trace_path.empty()) trace.write_csv(trace_path);

  const auto scored = revrank::mlp_scored(net, ds);
  ordered_json result;
  result["out"] = out;
  result["hidden"] = opt.hidden;
  result["auc_r"] = revrank::evaluate_metric(revrank::MetricKind::kAucR, scored, 1.0).value;
  result["sauc"] =
      revrank::evaluate_metric(revrank::MetricKind::kSauc, scored, opt.temperature).value;
  result["n_trace_points"] = trace.points.size();
  emit_result(result);
  return kExitOk;
}

int run_replay(const std::string& data, const std::string& format, const std::string& truth_path,
               const std::string& params_path, const std::string& model_path, int slots,
               std::uint64_t seed, int threads) {
  ScorerChoice scorer = resolve_scorer(params_path, model_path);

  ordered_json echo;
  echo["command"] = "replay";
  echo["data"] = data;
  echo["format"] = format;
  echo["truth"] = truth_path;
  echo["scorer"] = scorer.descriptor;
  echo["slots"] = slots;
  echo["seed"] = seed;
  echo["threads"] = threads;
  emit_config(echo);

  const revrank::Dataset ds = load_data(data, format);
  const revrank::LatentTruth truth = revrank::LatentTruth::load_jsonl(truth_path);
  const auto result = revrank::replay(ds, truth, scorer.scorer, slots, seed);

  ordered_json out = result.to_json();
  out["scorer"] = scorer.descriptor;
  emit_result(out);
  return kExitOk;
}

int run_confusion(const SimFlags& flags_in, int trials, const std::string& metrics_csv,
                  double beta_base_min, double beta_base_max, double beta_jitter,
                  double calib_jitter, int calib_knots, double temperature, std::uint64_t seed,
                  int threads) {
  SimFlags flags = flags_in;
  revrank::ConfusionConfig cfg;
  cfg.sim = flags.resolve();
  cfg.beta_base_min = beta_base_min;
  cfg.beta_base_max = beta_base_max;
  cfg.beta_jitter = beta_jitter;
  cfg.calib_jitter = calib_jitter;
  cfg.calib_knots = calib_knots;
  cfg.temperature = temperature;
  cfg.seed = seed;
  const auto kinds = parse_metric_list(metrics_csv);

  ordered_json echo;
  echo["command"] = "confusion";
  echo["trials"] = trials;
  echo["metrics"] = metrics_csv;
  echo["beta_base_min"] = cfg.beta_base_min;
  echo["beta_base_max"] = cfg.beta_base_max;
  echo["beta_jitter"] = cfg.beta_jitter;
  echo["calib_jitter"] = cfg.calib_jitter;
  echo["calib_knots"] = cfg.calib_knots;
  echo["temperature"] = cfg.temperature;
  echo["seed"] = cfg.seed;
  echo["sim"] = cfg.sim.to_json();
  echo["threads"] = threads;
  emit_config(echo);

  const auto tallies = revrank::run_confusion_experiment(cfg, trials, kinds);

  ordered_json result;
  result["trials"] = trials;
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    ordered_json row;
    row["metric"] = revrank::metric_name(kinds[i]);
    row["matrix"] = tallies[i].to_json();
    row["disagreement_rate"] = tallies[i].disagreement_rate();
    rows.push_back(std::move(row));
  }
  result["results"] = std::move(rows);
  emit_result(result);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Revenue-weighted auction ranking toolkit"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "Worker threads for metric evaluation")
      ->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "Synthesize an auction log with latent CTR truth");
  SimFlags gen_flags;
  std::string gen_out, gen_truth, gen_format = "auto";
  gen->add_option("--out", gen_out, "Output log path")->required();
  gen->add_option("--truth", gen_truth, "Latent truth path (default: <out>.truth.jsonl)");
  gen->add_option("--format", gen_format, "Log format: auto, csv or jsonl")->capture_default_str();
  gen_flags.attach(gen);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate an offline metric on a log");
  std::string eval_data, eval_format = "auto", eval_params, eval_model, eval_metric = "auc_r";
  double eval_temperature = 1.0;
  bool eval_per_impression = false;
  eval->add_option("--data", eval_data, "Auction log path")->required();
  eval->add_option("--format", eval_format, "Log format: auto, csv or jsonl")
      ->capture_default_str();
  eval->add_option("--params", eval_params, "Explicit scorer parameter JSON");
  eval->add_option("--model", eval_model, "MLP scorer model JSON");
  eval->add_option("--metric", eval_metric, "Metric: auc_r, auc, auc_r_asym or sauc")
      ->capture_default_str();
  eval->add_option("--temperature", eval_temperature, "sauc temperature")->capture_default_str();
  eval->add_flag("--per-impression", eval_per_impression,
                 "Average the metric over impressions instead of pooling");

  // fit-explicit
  auto* fitx = app.add_subcommand("fit-explicit", "Fit the calibrated power-rule scorer");
  std::string fitx_data, fitx_format = "auto", fitx_mode = "grid", fitx_out = "params.json";
  std::string fitx_trace, fitx_init_params;
  double fitx_init_beta = 1.0;
  int fitx_knots = 8;
  revrank::GridOptions grid_opt;
  revrank::SgdOptions sgd_opt;
  fitx->add_option("--data", fitx_data, "Auction log path")->required();
  fitx->add_option("--format", fitx_format, "Log format: auto, csv or jsonl")
      ->capture_default_str();
  fitx->add_option("--mode", fitx_mode, "Fit mode: grid, sgd or staged")->capture_default_str();
  fitx->add_option("--out", fitx_out, "Where to write fitted parameter JSON")
      ->capture_default_str();
  fitx->add_option("--trace", fitx_trace, "Optional fit trace CSV path");
  fitx->add_option("--init-params", fitx_init_params, "Initial parameter JSON (overrides --knots)");
  fitx->add_option("--init-beta", fitx_init_beta, "Initial beta for sgd and staged modes")
      ->capture_default_str();
  fitx->add_option("--knots", fitx_knots,
                   "Calibration knots placed at eCTR quantiles (0 = identity, fixed)")
      ->capture_default_str();
  fitx->add_option("--beta-min", grid_opt.beta_min, "Grid lower bound")->capture_default_str();
  fitx->add_option("--beta-max", grid_opt.beta_max, "Grid upper bound")->capture_default_str();
  fitx->add_option("--beta-step", grid_opt.step, "Grid step")->capture_default_str();
  fitx->add_option("--batch-size", sgd_opt.batch_size, "Mini-batch size")->capture_default_str();
  fitx->add_option("--lr", sgd_opt.learning_rate, "SGD learning rate")->capture_default_str();
  fitx->add_option("--temperature", sgd_opt.temperature, "Surrogate temperature")
      ->capture_default_str();
  fitx->add_option("--max-epochs", sgd_opt.max_epochs, "Epoch cap")->capture_default_str();
  fitx->add_option("--rel-tol", sgd_opt.rel_tol, "Relative improvement stop threshold")
      ->capture_default_str();
  fitx->add_option("--seed", sgd_opt.seed, "Shuffle seed")->capture_default_str();

  // fit-implicit
  auto* fiti = app.add_subcommand("fit-implicit", "Fit the MLP scorer");
  std::string fiti_data, fiti_format = "auto", fiti_out = "model.json", fiti_trace;
  std::string fiti_activation = "tanh";
  revrank::ImplicitFitOptions imp_opt;
  fiti->add_option("--data", fiti_data, "Auction log path")->required();
  fiti->add_option("--format", fiti_format, "Log format: auto, csv or jsonl")
      ->capture_default_str();
  fiti->add_option("--out", fiti_out, "Where to write the fitted model JSON")
      ->capture_default_str();
  fiti->add_option("--trace", fiti_trace, "Optional fit trace CSV path");
  fiti->add_option("--hidden", imp_opt.hidden, "Hidden layer widths (exactly three)")
      ->delimiter(',')
      ->capture_default_str();
  fiti->add_option("--activation", fiti_activation, "Hidden activation: tanh or identity")
      ->capture_default_str();
  fiti->add_option("--lr", imp_opt.learning_rate, "AdaGrad learning rate")->capture_default_str();
  fiti->add_option("--temperature", imp_opt.temperature, "Surrogate temperature")
      ->capture_default_str();
  fiti->add_option("--batch-size", imp_opt.batch_size, "Mini-batch size")->capture_default_str();
  fiti->add_option("--max-epochs", imp_opt.max_epochs, "Epoch cap")->capture_default_str();
  fiti->add_option("--rel-tol", imp_opt.rel_tol, "Relative improvement stop threshold")
      ->capture_default_str();
  fiti->add_option("--epsilon", imp_opt.epsilon, "AdaGrad denominator floor")
      ->capture_default_str();
  fiti->add_option("--seed", imp_opt.seed, "Init and shuffle seed")->capture_default_str();

  // replay
  auto* rep = app.add_subcommand("replay", "Re-run logged auctions under a scorer");
  std::string rep_data, rep_format = "auto", rep_truth, rep_params, rep_model;
  int rep_slots = 1;
  std::uint64_t rep_seed = 1;
  rep->add_option("--data", rep_data, "Auction log path")->required();
  rep->add_option("--format", rep_format, "Log format: auto, csv or jsonl")->capture_default_str();
  rep->add_option("--truth", rep_truth, "Latent truth JSONL path")->required();
  rep->add_option("--params", rep_params, "Explicit scorer parameter JSON");
  rep->add_option("--model", rep_model, "MLP scorer model JSON");
  rep->add_option("--slots", rep_slots, "Ads shown per auction")->capture_default_str();
  rep->add_option("--seed", rep_seed, "Click draw seed")->capture_default_str();

  // confusion
  auto* conf = app.add_subcommand("confusion", "Offline/online agreement experiment");
  SimFlags conf_flags;
  conf_flags.cfg.n_impressions = 300;
  int conf_trials = 1120, conf_calib_knots = 6;
  std::string conf_metrics = "auc_r";
  double conf_beta_min = 0.7, conf_beta_max = 1.3, conf_beta_jitter = 0.25, conf_calib_jitter = 0.0;
  double conf_temperature = 1.0;
  std::uint64_t conf_seed = 1;
  conf->add_option("--trials", conf_trials, "Number of paired trials")->capture_default_str();
  conf->add_option("--metrics", conf_metrics, "Comma-separated offline metrics")
      ->capture_default_str();
  conf->add_option("--beta-base-min", conf_beta_min, "Baseline beta range low")
      ->capture_default_str();
  conf->add_option("--beta-base-max", conf_beta_max, "Baseline beta range high")
      ->capture_default_str();
  conf->add_option("--beta-jitter", conf_beta_jitter, "Candidate beta perturbation sigma")
      ->capture_default_str();
  conf->add_option("--calib-jitter", conf_calib_jitter, "Candidate calibration log perturbation")
      ->capture_default_str();
  conf->add_option("--calib-knots", conf_calib_knots, "Knots of the perturbed calibration")
      ->capture_default_str();
  conf->add_option("--temperature", conf_temperature, "sauc temperature")->capture_default_str();
  conf->add_option("--experiment-seed", conf_seed, "Trial stream seed")->capture_default_str();
  conf_flags.attach(conf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (threads < 1) throw revrank::ValidationError("--threads must be >= 1");
    revrank::set_max_threads(threads);
    if (gen->parsed()) return run_gen(gen_flags, gen_out, gen_truth, gen_format, threads);
    if (eval->parsed()) {
      return run_eval(eval_data, eval_format, eval_params, eval_model, eval_metric,
                      eval_temperature, eval_per_impression, threads);
    }
    if (fitx->parsed()) {
      return run_fit_explicit(fitx_data, fitx_format, fitx_mode, fitx_out, fitx_trace,
                              fitx_init_params, fitx_init_beta, fitx_knots, grid_opt, sgd_opt,
                              threads);
    }
    if (fiti->parsed()) {
      return run_fit_implicit(fiti_data, fiti_format, fiti_out, fiti_trace, fiti_activation,
                              imp_opt, threads);
    }
    if (rep->parsed()) {
      return run_replay(rep_data, rep_format, rep_truth, rep_params, rep_model, rep_slots,
                        rep_seed, threads);
    }
    if (conf->parsed()) {
      return run_confusion(conf_flags, conf_trials, conf_metrics, conf_beta_min, conf_beta_max,
                           conf_beta_jitter, conf_calib_jitter, conf_calib_knots, conf_temperature,
                           conf_seed, threads);
    }
    std::cerr << "error: no subcommand given\n";
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const revrank::DegenerateMetricError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const revrank::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const revrank::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const revrank::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const revrank::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
