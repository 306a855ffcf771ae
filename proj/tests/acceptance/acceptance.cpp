// One line per acceptance criterion; exit status is the number of failures.
// usage: acceptance <pidaudit binary> <scratch dir>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pidaudit/config.hpp"
#include "pidaudit/error.hpp"
#include "pidaudit/log.hpp"
#include "pidaudit/pid.hpp"
#include "pidaudit/pipeline.hpp"
#include "pidaudit/report.hpp"
#include "pidaudit/selftest.hpp"
#include "pidaudit/synth.hpp"

namespace fs = std::filesystem;
using namespace pidaudit;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "\"" + cli + "\" -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small model shared by the synthetic-ground-truth criteria.
PipelineConfig desk_config(std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.seed = seed;
  cfg.model.embed_dim = 32;
  cfg.model.heads = 4;
  cfg.model.layers = 2;
  cfg.model.context = 16;
  cfg.model.dropout = 0.0;
  cfg.train.epochs = 4;
  cfg.train.window_stride = 2;
  cfg.train.batch = 16;
  cfg.train.adam.lr = 3e-3;
  return cfg;
}

std::size_t index_of(const DailyEiSeries& s, const std::string& name) {
  for (std::size_t i = 0; i < s.sources.size(); ++i)
    if (s.sources[i] == name) return i;
  throw std::runtime_error("no source " + name);
}

// Audit runs collected for the invariant check.
std::vector<ConditionResult> g_runs;

Outcome gradient() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = selftest::tiny_model_gradcheck();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.max_rel_error <= 1e-4 && secs < 60.0,
          "max rel error " + fmt(r.max_rel_error) + " over " + std::to_string(r.coordinates) + " coordinates, " + fmt(secs) + " s"};
}

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  CounterRng rng(2024);
  double worst = 0.0;
  const int systems = 20;
  for (int i = 0; i < systems; ++i) {
    const auto sys = oracle::random_binary_system(rng);
    const double got = union_information(SourceChannelSet::from_joints(sys.joints()), {}).value;
    worst = std::max(worst, std::abs(got - oracle::grid_union(sys)));
  }
  const double copy = selftest::copy_system_union();
  const double x = selftest::xor_system_union();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = worst <= 1e-3 && std::abs(copy - 1.0) <= 1e-3 && std::abs(x) <= 1e-3 && secs < 300.0;
  return {ok, std::to_string(systems) + " systems max |dU| " + fmt(worst) + " bits, copy " + fmt(copy) + ", xor " +
                  fmt(x) + ", " + fmt(secs) + " s"};
}

Outcome rope() {
  const double e = selftest::rope_shift_error(1000);
  return {e <= 1e-9, "max shift error " + fmt(e) + " over 1000 draws"};
}

Outcome reliance() {
  const auto t0 = std::chrono::steady_clock::now();
  int hits = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    SynthSpec spec;
    spec.seed = 500 + static_cast<std::uint64_t>(s);
    const auto market = synth_market(spec);
    const auto cfg = desk_config(spec.seed);
    const auto panel = prepare_panel(market.prices, cfg);
    const Model model = train_model(panel, cfg);
    auto res = run_audit(model, panel, market.iv, cfg);
    const std::size_t informative = index_of(res.series, spec.supports[0]);
    bool lowest = true;
    for (std::size_t k = 1; k < spec.supports.size(); ++k)
      lowest = lowest && res.mean_ei[informative] < res.mean_ei[index_of(res.series, spec.supports[k])];
    hits += lowest ? 1 : 0;
    g_runs.push_back(std::move(res));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {hits >= 19 && secs < 1800.0,
          "informative support lowest in " + std::to_string(hits) + "/" + std::to_string(seeds) + " runs, " + fmt(secs) + " s"};
}

Outcome frequency_trend() {
  int hits = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    SynthSpec spec;
    spec.seed = 800 + static_cast<std::uint64_t>(s);
    spec.weights = {0.5, 0.5, 0.5, 0.5};
    spec.hf_noise = {0.01, 0.01, 0.01, 0.01};
    const auto market = synth_market(spec);
    auto cfg = desk_config(spec.seed);
    cfg.ablation.multipliers = {1, 5};
    auto report = run_ablation(market.prices, market.iv, cfg);
    const auto& base = report.conditions[0];
    const auto& held = report.conditions[1];
    int lower = 0;
    for (const auto& name : spec.supports) {
      const std::size_t i = index_of(base.series, name);
      lower += held.mean_ei[i] <= base.mean_ei[i] ? 1 : 0;
    }
    hits += 2 * lower > static_cast<int>(spec.supports.size()) ? 1 : 0;
    for (auto& c : report.conditions) g_runs.push_back(std::move(c));
  }
  return {hits >= 15, "5x EI <= 1x EI for most supports in " + std::to_string(hits) + "/" + std::to_string(seeds) + " seeds"};
}

Outcome learning() {
  SynthSpec spec;
  spec.seed = 77;
  spec.weights = {0.5, 0.0, 0.0, 0.0};
  spec.target_ar = 0.5;
  const auto market = synth_market(spec);
  const auto cfg = desk_config(spec.seed);
  const auto panel = prepare_panel(market.prices, cfg);
  TrainResult tr;
  Model model = train_model(panel, cfg, &tr);
  const double val = tr.history.back().val_loss;

  for (auto& p : model.params())
    if (p.name == "head.w" || p.name == "head.b")
      for (double& v : p.value.data()) v = 0.0;
  const auto N = static_cast<std::size_t>(cfg.model.context);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + N + 1 <= panel.rows(); s += 7) starts.push_back(s);
  const double uniform = evaluate_loss(model, panel, starts, cfg.quantizer);
  const double ln64 = std::log(64.0);
  const bool ok = val <= 0.9 * ln64 && std::abs(uniform - ln64) <= 1e-6;
  return {ok, "val CE " + fmt(val) + " (limit " + fmt(0.9 * ln64) + "), uniform " + std::to_string(uniform)};
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  if (run_cli(cli, "synth --seed 31 --out \"" + dir.string() + "\"") != 0) return {false, "synth failed"};
  const std::string cfg = "--config \"" + (dir / "synth.ini").string() + "\"";
  std::vector<std::string> csv, json;
  for (int run = 0; run < 2; ++run) {
    if (run_cli(cli, "train " + cfg) != 0 || run_cli(cli, "audit " + cfg) != 0)
      return {false, "train/audit failed on run " + std::to_string(run + 1)};
    csv.push_back(slurp(dir / "run" / "ei_daily.csv"));
    json.push_back(slurp(dir / "run" / "report.json"));
  }
  const bool ok = !csv[0].empty() && !json[0].empty() && csv[0] == csv[1] && json[0] == json[1];
  return {ok, std::string("ei_daily.csv ") + (csv[0] == csv[1] ? "identical" : "differs") + ", report.json " +
                  (json[0] == json[1] ? "identical" : "differs")};
}

Outcome invariants(const std::string& cli, const fs::path& work) {
  // An exact-solver audit joins the surrogate runs collected above.
  {
    SynthSpec spec;
    spec.seed = 41;
    spec.days = 10;
    const auto market = synth_market(spec);
    auto cfg = desk_config(spec.seed);
    cfg.train.epochs = 2;
    cfg.joint.source_bins = 2;
    cfg.pid.method = UnionMethod::kExact;
    cfg.pid.restarts = 2;
    cfg.pid.tolerance = 1e-5;
    cfg.pid.max_iterations = 3000;
    const auto panel = prepare_panel(market.prices, cfg);
    g_runs.push_back(run_audit(train_model(panel, cfg), panel, market.iv, cfg));
  }
  std::size_t days = 0, bad = 0;
  for (const auto& run : g_runs)
    for (const auto& d : run.series.days) {
      ++days;
      double max_i = 0.0;
      for (double m : d.mi) max_i = std::max(max_i, m);
      bool ok = d.union_info >= max_i - 1e-6 && d.union_info <= d.joint_info + 1e-6;
      for (double e : d.ei) ok = ok && e >= 0.0;
      bad += ok ? 0 : 1;
    }

  bool aborts = false;
  try {
    (void)excluded_information(0.1, 0.2);
  } catch (const NumericalError&) {
    aborts = true;
  }

  // Infeasible solver through the CLI must exit 3.
  const fs::path dir = work / "infeasible";
  fs::remove_all(dir);
  int code = -1;
  if (run_cli(cli, "synth --seed 3 --out \"" + dir.string() + "\"") == 0) {
    RunConfig rc = load_run_config(dir / "synth.ini");
    rc.pipeline.train.epochs = 1;
    rc.pipeline.joint.source_bins = 2;
    rc.pipeline.pid.method = UnionMethod::kExact;
    rc.pipeline.pid.tolerance = 1e-300;
    rc.pipeline.pid.max_iterations = 1;
    rc.pipeline.pid.restarts = 1;
    std::ofstream(dir / "bad.ini") << to_ini(rc);
    const std::string cfg = "--config \"" + (dir / "bad.ini").string() + "\"";
    if (run_cli(cli, "train " + cfg) == 0) code = run_cli(cli, "audit " + cfg);
  }
  const bool ok = days > 0 && bad == 0 && aborts && code == 3;
  return {ok, std::to_string(bad) + " violations over " + std::to_string(days) + " audited days in " +
                  std::to_string(g_runs.size()) + " runs, infeasible solver exit " + std::to_string(code)};
}

Outcome quantizer() {
  const QuantizerSpec q;
  const double e = selftest::quantizer_roundtrip_error(q, 100000);
  const bool clamps = selftest::quantizer_clamps(q);
  return {e <= 0.002 && clamps, "max error " + fmt(e) + ", clamps " + (clamps ? "ok" : "broken")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: acceptance <pidaudit binary> <scratch dir>\n";
    return 64;
  }
  const std::string cli = argv[1];
  const fs::path work = argv[2];
  fs::create_directories(work);
  log::set_quiet(true);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient check", gradient},
      {"union oracle", oracle_equivalence},
      // 3 runs last: it audits every run collected by 5 and 6.
      {"rope shift", rope},
      {"reliance detection", reliance},
      {"frequency trend", frequency_trend},
      {"learning", learning},
      {"determinism", [&] { return determinism(cli, work); }},
      {"quantizer", quantizer},
      {"pid invariants", [&] { return invariants(cli, work); }},
  };
  const int number[] = {1, 2, 4, 5, 6, 7, 8, 9, 3};

  int failures = 0;
  std::vector<std::string> lines(10);
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.passed ? 0 : 1;
    const std::string line = std::string(o.passed ? "PASS" : "FAIL") + " criterion " + std::to_string(number[i]) +
                             " (" + criteria[i].first + "): " + o.detail;
    std::cout << line << std::endl;
    lines[static_cast<std::size_t>(number[i])] = line;
  }
  std::cout << "\nsummary\n";
  for (std::size_t n = 1; n <= 9; ++n) std::cout << lines[n] << "\n";
  std::cout << (9 - failures) << "/9 criteria passed\n";
  return failures;
}
