#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

// End-to-end checks against the installed binary: every process boundary
// (flags, files, streams, exit codes) rather than library internals.

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "revrank_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out_path = work_dir() / ("stdout_" + std::to_string(counter) + ".txt");
  const fs::path err_path = work_dir() / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = std::string(REVRANK_CLI_PATH) + " " + args + " >" + out_path.string() +
                          " 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

json first_json_line(const std::string& text) {
  const auto nl = text.find('\n');
  REQUIRE(nl != std::string::npos);
  return json::parse(text.substr(0, nl));
}

// Shared 20x4 log generated once through the binary itself.
const fs::path& shared_log() {
  static const fs::path path = [] {
    const fs::path p = work_dir() / "log.csv";
    const RunResult r =
        run_cli("gen --out " + p.string() + " --impressions 20 --ads 4 --seed 7");
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

fs::path shared_truth() { return shared_log().string() + ".truth.jsonl"; }

}  // namespace

TEST_CASE("gen writes the log plus its truth file and reports counts") {
  const RunResult r = run_cli("gen --out " + (work_dir() / "g1.csv").string() +
                              " --impressions 12 --ads 3 --seed 9");
  REQUIRE(r.code == 0);

  const json cfg = first_json_line(r.err);
  REQUIRE(cfg["command"] == "gen");
  REQUIRE(cfg["sim"]["seed"] == 9);
  REQUIRE(cfg["sim"]["slots"] == 1);
  REQUIRE(cfg["sim"]["bias"]["kind"] == "identity");

  const json res = first_json_line(r.out);
  REQUIRE(res["n_records"] == 36);
  REQUIRE(res["n_impressions"] == 12);
  REQUIRE(res["truth"] == (work_dir() / "g1.csv").string() + ".truth.jsonl");

  const std::string log_text = slurp(work_dir() / "g1.csv");
  REQUIRE(log_text.rfind("impression_id,ectr,bid,click\n", 0) == 0);
  const std::string truth_text = slurp(res["truth"].get<std::string>());
  const json truth_row = first_json_line(truth_text);
  REQUIRE(truth_row["index"] == 0);
  REQUIRE(truth_row["true_ctr"].get<double>() > 0.0);
  REQUIRE(truth_row["true_ctr"].get<double>() < 1.0);
}

TEST_CASE("gen infers jsonl output from the extension") {
  const fs::path p = work_dir() / "g2.jsonl";
  const RunResult r = run_cli("gen --out " + p.string() + " --impressions 5 --ads 3 --seed 1");
  REQUIRE(r.code == 0);
  const json row = first_json_line(slurp(p));
  REQUIRE(row["impression_id"] == "0");
  REQUIRE(row["ectr"].get<double>() > 0.0);
  REQUIRE(row["bid"].get<double>() > 0.0);
  REQUIRE((row["click"] == 0 || row["click"] == 1));
}

TEST_CASE("eval reports the pooled metric with its accounting") {
  const RunResult r = run_cli("eval --data " + shared_log().string() + " --metric auc_r");
  REQUIRE(r.code == 0);
  const json res = first_json_line(r.out);
  REQUIRE(res["n_records"] == 80);
  REQUIRE(res["metric"]["name"] == "auc_r");
  const double v = res["metric"]["value"].get<double>();
  REQUIRE(v >= -1.0);
  REQUIRE(v <= 1.0);
  REQUIRE(res["metric"]["normalizer_z"].get<double>() > 0.0);
  REQUIRE(res["metric"]["n_pairs"].get<std::int64_t>() > 0);

  const json cfg = first_json_line(r.err);
  REQUIRE(cfg["command"] == "eval");
  REQUIRE(cfg["scorer"]["kind"] == "explicit");
  REQUIRE(cfg["scorer"]["beta"] == 1.0);
}

TEST_CASE("eval covers every metric name and the temperature flag") {
  for (const std::string name : {"auc", "auc_r", "auc_r_asym", "sauc"}) {
    const RunResult r = run_cli("eval --data " + shared_log().string() + " --metric " + name +
                                " --temperature 0.7");
    REQUIRE(r.code == 0);
    const json res = first_json_line(r.out);
    REQUIRE(res["metric"]["name"] == name);
    REQUIRE(first_json_line(r.err)["temperature"] == 0.7);
  }
}

TEST_CASE("per-impression evaluation averages where the metric is defined") {
  const RunResult r =
      run_cli("eval --data " + shared_log().string() + " --metric auc_r --per-impression");
  REQUIRE(r.code == 0);
  const json m = first_json_line(r.out)["metric"];
  REQUIRE(m["aggregation"] == "mean_per_impression");
  REQUIRE(m["n_impressions_used"].get<int>() + m["n_impressions_skipped"].get<int>() == 20);
  REQUIRE(m["n_impressions_used"].get<int>() > 0);
  const double v = m["value"].get<double>();
  REQUIRE(v >= -1.0);
  REQUIRE(v <= 1.0);
}

TEST_CASE("grid fit writes parameters and a trace usable downstream") {
  const fs::path params = work_dir() / "grid_params.json";
  const fs::path trace = work_dir() / "grid_trace.csv";
  const RunResult r = run_cli("fit-explicit --data " + shared_log().string() +
                              " --mode grid --knots 0 --out " + params.string() + " --trace " +
                              trace.string() + " --beta-min 0.5 --beta-max 1.5 --beta-step 0.25");
  REQUIRE(r.code == 0);
  const json res = first_json_line(r.out);
  REQUIRE(res["mode"] == "grid");
  REQUIRE(res["n_trace_points"] == 5);
  const double beta = res["params"]["beta"].get<double>();
  REQUIRE(beta >= 0.5);
  REQUIRE(beta <= 1.5);

  const json reloaded = json::parse(slurp(params));
  REQUIRE(reloaded["beta"].get<double>() == beta);
  REQUIRE(reloaded.contains("knots_x"));

  const std::string trace_text = slurp(trace);
  REQUIRE(trace_text.rfind("step,param,objective,metric\n", 0) == 0);
  REQUIRE(std::count(trace_text.begin(), trace_text.end(), '\n') == 6);

  const RunResult reuse =
      run_cli("eval --data " + shared_log().string() + " --params " + params.string());
  REQUIRE(reuse.code == 0);
  REQUIRE(first_json_line(reuse.err)["scorer"]["path"] == params.string());
}

TEST_CASE("sgd fit runs to completion and records its trace") {
  const fs::path params = work_dir() / "sgd_params.json";
  const fs::path trace = work_dir() / "sgd_trace.csv";
  const RunResult r = run_cli("fit-explicit --data " + shared_log().string() +
                              " --mode sgd --knots 0 --out " + params.string() + " --trace " +
                              trace.string() +
                              " --max-epochs 3 --batch-size 50 --lr 0.1 --temperature 0.5");
  REQUIRE(r.code == 0);
  const json res = first_json_line(r.out);
  const int n_points = res["n_trace_points"].get<int>();
  REQUIRE(n_points >= 2);
  REQUIRE(n_points <= 8);
  REQUIRE(std::isfinite(res["sauc"].get<double>()));
  REQUIRE(slurp(trace).rfind("step,param,objective,metric\n", 0) == 0);
}

TEST_CASE("staged fit tunes the calibration then sweeps beta") {
  const fs::path params = work_dir() / "staged_params.json";
  const RunResult r = run_cli("fit-explicit --data " + shared_log().string() +
                              " --mode staged --knots 3 --out " + params.string() +
                              " --max-epochs 2 --batch-size 64 --lr 0.1 --temperature 0.5" +
                              " --beta-min 0.6 --beta-max 1.4 --beta-step 0.2");
  REQUIRE(r.code == 0);
  const json res = first_json_line(r.out);
  const double beta = res["params"]["beta"].get<double>();
  REQUIRE(beta >= 0.6);
  REQUIRE(beta <= 1.4);
  REQUIRE(res["n_trace_points"].get<int>() >= 7);
  REQUIRE(json::parse(slurp(params))["knots_x"].size() >= 2);
}

TEST_CASE("implicit fit writes a model the other commands accept") {
  const fs::path model = work_dir() / "model.json";
  const RunResult r = run_cli("fit-implicit --data " + shared_log().string() +
                              " --hidden 4,3,2 --max-epochs 2 --batch-size 50 --out " +
                              model.string());
  REQUIRE(r.code == 0);
  const json stored = json::parse(slurp(model));
  REQUIRE(stored["layer_dims"] == json::array({2, 4, 3, 2, 1}));
  REQUIRE(stored["activation"] == "tanh");

  const RunResult ev =
      run_cli("eval --data " + shared_log().string() + " --model " + model.string());
  REQUIRE(ev.code == 0);
  REQUIRE(first_json_line(ev.err)["scorer"]["kind"] == "mlp");

  const RunResult rp = run_cli("replay --data " + shared_log().string() + " --truth " +
                               shared_truth().string() + " --model " + model.string());
  REQUIRE(rp.code == 0);
}

TEST_CASE("replay reports consistent revenue accounting") {
  const RunResult r = run_cli("replay --data " + shared_log().string() + " --truth " +
                              shared_truth().string() + " --slots 2 --seed 5");
  REQUIRE(r.code == 0);
  const json res = first_json_line(r.out);
  REQUIRE(res["n_impressions"] == 20);
  REQUIRE(res["n_shown"] == 40);
  const double revenue = res["revenue"].get<double>();
  REQUIRE(res["rpm"].get<double>() == 1000.0 * revenue / 20.0);
  REQUIRE(res["scorer"]["kind"] == "explicit");
}

TEST_CASE("confusion summarizes agreement for each requested metric") {
  const RunResult r = run_cli(
      "confusion --trials 3 --metrics auc_r,auc --impressions 60 --ads 4 --experiment-seed 3");
  REQUIRE(r.code == 0);
  const json res = first_json_line(r.out);
  REQUIRE(res["trials"] == 3);
  REQUIRE(res["results"].size() == 2);
  REQUIRE(res["results"][0]["metric"] == "auc_r");
  REQUIRE(res["results"][1]["metric"] == "auc");
  const json m = res["results"][0]["matrix"];
  const int total = m["on_pos_off_pos"].get<int>() + m["on_pos_off_neg"].get<int>() +
                    m["on_neg_off_pos"].get<int>() + m["on_neg_off_neg"].get<int>();
  REQUIRE(total == 3);
}

TEST_CASE("usage problems exit with code 2 and help with 0") {
  REQUIRE(run_cli("gen --impressions 5").code == 2);           // missing required --out
  REQUIRE(run_cli("eval --data x.csv --bogus-flag 1").code == 2);
  REQUIRE(run_cli("not-a-command").code == 2);
  REQUIRE(run_cli("--help").code == 0);
  REQUIRE(run_cli("eval --data " + shared_log().string() + " --params a.json --model b.json").code ==
          2);
}

TEST_CASE("input problems map to distinct exit codes") {
  // Missing file: I/O failure.
  REQUIRE(run_cli("eval --data " + (work_dir() / "absent.csv").string()).code == 5);

  // Malformed row: parse failure.
  const fs::path bad = work_dir() / "bad.csv";
  spit(bad, "impression_id,ectr,bid,click\nimp1,0.5,2.0\n");
  const RunResult pr = run_cli("eval --data " + bad.string());
  REQUIRE(pr.code == 3);
  REQUIRE(pr.err.find("error:") != std::string::npos);

  // Unknown metric name: invalid input.
  REQUIRE(run_cli("eval --data " + shared_log().string() + " --metric bogus").code == 3);

  // All labels equal: the metric is undefined, its own exit code.
  const fs::path flat = work_dir() / "flat.csv";
  spit(flat, "impression_id,ectr,bid,click\na,0.5,2.0,0\na,0.4,1.0,0\nb,0.3,1.5,0\n");
  REQUIRE(run_cli("eval --data " + flat.string()).code == 4);

  // Corrupt params file: parse failure, not I/O.
  const fs::path junk = work_dir() / "junk.json";
  spit(junk, "not json");
  REQUIRE(run_cli("eval --data " + shared_log().string() + " --params " + junk.string()).code ==
          3);
}

TEST_CASE("explicit format overrides the extension") {
  const fs::path p = work_dir() / "odd.dat";
  const RunResult g = run_cli("gen --out " + p.string() +
                              " --format csv --impressions 4 --ads 2 --seed 2");
  REQUIRE(g.code == 0);
  REQUIRE(slurp(p).rfind("impression_id,", 0) == 0);
  REQUIRE(run_cli("eval --data " + p.string() + " --format csv").code == 0);
}

TEST_CASE("reruns are byte-identical, including across thread counts") {
  const std::string eval_args = "eval --data " + shared_log().string() + " --metric sauc";
  const RunResult a = run_cli(eval_args);
  const RunResult b = run_cli(eval_args);
  REQUIRE(a.code == 0);
  REQUIRE(a.out == b.out);
  REQUIRE(a.err == b.err);

  const RunResult t1 = run_cli("--threads 1 " + eval_args);
  const RunResult t4 = run_cli("--threads 4 " + eval_args);
  REQUIRE(t1.code == 0);
  REQUIRE(t4.code == 0);
  REQUIRE(t1.out == t4.out);

  const std::string conf_args =
      "confusion --trials 2 --impressions 60 --ads 4 --experiment-seed 5";
  const RunResult c1 = run_cli("--threads 1 " + conf_args);
  const RunResult c4 = run_cli("--threads 4 " + conf_args);
  REQUIRE(c1.code == 0);
  REQUIRE(c1.out == c4.out);

  const fs::path ga = work_dir() / "rep_a.csv";
  const fs::path gb = work_dir() / "rep_b.csv";
  REQUIRE(run_cli("gen --out " + ga.string() + " --impressions 8 --ads 3 --seed 4").code == 0);
  REQUIRE(run_cli("gen --out " + gb.string() + " --impressions 8 --ads 3 --seed 4").code == 0);
  REQUIRE(slurp(ga) == slurp(gb));
  REQUIRE(slurp(ga.string() + ".truth.jsonl") == slurp(gb.string() + ".truth.jsonl"));
}
