#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "pidaudit/checkpoint.hpp"
#include "pidaudit/config.hpp"
#include "pidaudit/error.hpp"
#include "pidaudit/kernels.hpp"
#include "pidaudit/log.hpp"
#include "pidaudit/report.hpp"
#include "pidaudit/selftest.hpp"
#include "pidaudit/synth.hpp"

namespace fs = std::filesystem;
using namespace pidaudit;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<int> multipliers;
  std::optional<int> bins;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Options& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "INI run configuration");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "Seed for init, shuffling, dropout and solver restarts");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--multiplier", o.multipliers, "Ablation timestep multiplier (repeatable)");
  cmd->add_option("--bins", o.bins, "Return quantizer bins");
}

RunConfig resolve_config(const Options& o, bool need_data) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  Overrides ov;
  ov.seed = o.seed;
  if (!o.out.empty()) ov.out = fs::path(o.out);
  ov.multipliers = o.multipliers;
  ov.bins = o.bins;
  apply_overrides(cfg, ov);
  cfg.validate(need_data);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw DataError("cannot write " + path.string());
}

int cmd_ingest(const Options& o) {
  const auto cfg = resolve_config(o, true);
  const auto prices = load_prices(cfg);
  std::vector<ReturnSeries> rets;
  std::set<Timestamp> all;
  for (const auto& p : prices) {
    rets.push_back(compute_returns(p, cfg.pipeline.denominator));
    for (const auto& b : p.bars) all.insert(b.timestamp);
  }
  for (const auto& p : prices) {
    std::cout << p.symbol << ": " << p.bars.size() << " bars";
    if (!p.bars.empty())
      std::cout << ", " << format_timestamp(p.bars.front().timestamp) << " .. "
                << format_timestamp(p.bars.back().timestamp);
    std::cout << ", missing " << all.size() - p.bars.size() << " of " << all.size() << " timestamps\n";
  }
  const auto panel = align(rets);
  std::map<Date, int> per_day;
  for (const auto& t : panel.timestamps) ++per_day[date_of(t)];
  int full = 0;
  for (const auto& [d, n] : per_day) full = std::max(full, n);
  std::cout << "aligned: " << panel.rows() << " rows over " << per_day.size() << " days";
  if (!per_day.empty())
    std::cout << " (" << format_date(per_day.begin()->first) << " .. " << format_date(per_day.rbegin()->first) << ")";
  std::cout << "\n";
  std::size_t short_days = 0;
  for (const auto& [d, n] : per_day)
    if (n < full) {
      ++short_days;
      std::cout << "gap: " << format_date(d) << " has " << n << " of " << full << " bars\n";
    }
  std::cout << "days with gaps: " << short_days << "\n";
  for (const auto& iv : load_iv(cfg)) {
    std::cout << "iv " << iv.symbol << ": " << iv.points.size() << " days";
    if (!iv.points.empty())
      std::cout << " (" << format_date(iv.points.front().date) << " .. " << format_date(iv.points.back().date) << ")";
    std::cout << "\n";
  }
  const auto need = static_cast<std::size_t>(cfg.pipeline.model.context) + 1;
  if (panel.rows() < need)
    throw DataError("aligned panel has " + std::to_string(panel.rows()) + " rows, need " + std::to_string(need));
  return 0;
}

int cmd_train(const Options& o) {
  const auto cfg = resolve_config(o, true);
  fs::create_directories(cfg.out);
  const auto panel = prepare_panel(load_prices(cfg), cfg.pipeline);
  log::info("train", std::to_string(panel.rows()) + " rows x " + std::to_string(panel.cols()) + " series");
  TrainResult tr;
  const Model model = train_model(panel, cfg.pipeline, &tr);
  save_checkpoint(model, cfg.out / "model.ckpt");
  write_loss_history(cfg.out / "loss_history.csv", tr);
  write_text(cfg.out / "config.ini", to_ini(cfg));
  log::info("train", "wrote " + (cfg.out / "model.ckpt").string());
  return 0;
}

int cmd_audit(const Options& o) {
  const auto cfg = resolve_config(o, true);
  const fs::path ckpt = o.checkpoint.empty() ? cfg.out / "model.ckpt" : fs::path(o.checkpoint);
  const auto loaded = load_checkpoint(ckpt);
  const auto panel = prepare_panel(load_prices(cfg), cfg.pipeline);
  AuditReport report;
  report.iv = load_iv(cfg);
  report.config_snapshot = config_snapshot(cfg);
  report.conditions.push_back(run_audit(loaded.model, panel, report.iv, cfg.pipeline));
  emit_report(report, cfg.out);
  log::info("audit", "wrote report to " + cfg.out.string());
  return 0;
}

int cmd_ablate(const Options& o) {
  const auto cfg = resolve_config(o, true);
  auto report = run_ablation(load_prices(cfg), load_iv(cfg), cfg.pipeline);
  report.config_snapshot = config_snapshot(cfg);
  emit_report(report, cfg.out);
  log::info("ablate", "wrote report to " + cfg.out.string());
  return 0;
}

int cmd_synth(const Options& o) {
  auto cfg = resolve_config(o, false);
  const auto& spec = cfg.synth;
  const auto market = synth_market(spec);
  fs::create_directories(cfg.out / "prices");
  fs::create_directories(cfg.out / "iv");
  for (const auto& p : market.prices) write_price_csv(cfg.out / "prices" / (p.symbol + ".csv"), p);
  for (const auto& iv : market.iv) write_iv_csv(cfg.out / "iv" / (iv.symbol + ".csv"), iv);
  write_text(cfg.out / "truth.json", synth_truth_json(spec));

  // A runnable config for the generated panel, sized for a desktop CPU.
  RunConfig run = cfg;
  run.data.target = spec.target;
  run.data.supports = spec.supports;
  run.data.price_dir = "prices";
  run.data.iv_dir = fs::path("iv");
  run.out = "run";
  if (o.config.empty()) {
    auto& m = run.pipeline.model;
    m.embed_dim = 32;
    m.heads = 4;
    m.layers = 2;
    m.context = 16;
    run.pipeline.train.epochs = 4;
    run.pipeline.train.window_stride = 2;
    run.pipeline.train.adam.lr = 1e-3;
  }
  write_text(cfg.out / "synth.ini", to_ini(run));
  log::info("synth", std::to_string(market.panel.rows()) + " rows written to " + cfg.out.string());
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& c : selftest::run_all()) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    ok = ok && c.passed;
  }
  std::cout << (ok ? "selftest passed\n" : "selftest FAILED\n");
  return ok ? 0 : static_cast<int>(ExitCode::kNumerical);
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("AUDIT_THREADS")) {
    const int n = std::atoi(t);
    if (n < 1) {
      std::cerr << "error: AUDIT_THREADS must be a positive integer\n";
      return static_cast<int>(ExitCode::kUsage);
    }
    kernels::set_max_threads(n);
  }

  CLI::App app{"Influence audit of support series in a transformer return forecaster"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress logs");

  Options o;
  auto* ingest = app.add_subcommand("ingest", "Validate and align the input panel");
  add_common(ingest, o, true);
  auto* train = app.add_subcommand("train", "Train a model; writes model.ckpt and loss_history.csv");
  add_common(train, o, true);
  auto* audit = app.add_subcommand("audit", "Audit a trained checkpoint");
  add_common(audit, o, true);
  audit->add_option("--checkpoint", o.checkpoint, "Checkpoint file (default <out>/model.ckpt)");
  auto* ablate = app.add_subcommand("ablate", "Retrain and audit at each support timestep multiplier");
  add_common(ablate, o, true);
  auto* synth = app.add_subcommand("synth", "Write a synthetic panel with known reliance");
  add_common(synth, o, false);
  auto* self = app.add_subcommand("selftest", "Gradient, PID, RoPE and quantizer checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }
  log::set_quiet(quiet);

  try {
    if (*ingest) return cmd_ingest(o);
    if (*train) return cmd_train(o);
    if (*audit) return cmd_audit(o);
    if (*ablate) return cmd_ablate(o);
    if (*synth) return cmd_synth(o);
    if (*self) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumerical);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumerical);
  }
  return 0;
}
