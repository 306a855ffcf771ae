#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pidaudit/config.hpp"
#include "pidaudit/error.hpp"

using namespace pidaudit;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text, const fs::path& base = "/data") {
  std::istringstream in(text);
  return parse_run_config(in, base, "test.ini");
}

const char* kSample = R"([data]
target = NVDA
supports = AMD, MU ,TSM,INTC
price_dir = prices
iv_dir = /abs/iv
start_date = 2025-01-02
return_denominator = previous

[model]
embed_dim = 64
heads = 4
ffn = false

[train]
lr = 0.001
epochs = 3

[audit]
source_bins = 6
binning = fixed
include_target = false

[pid]
method = exact

[ablation]
multipliers = 1, 2
filter = ma

[run]
seed = 9
out = results
)";

}  // namespace

TEST_CASE("parses every section") {
  const auto cfg = parse(kSample);
  CHECK(cfg.data.target == "NVDA");
  CHECK(cfg.data.supports == std::vector<std::string>{"AMD", "MU", "TSM", "INTC"});
  CHECK(cfg.data.price_dir == fs::path("/data/prices"));
  CHECK(*cfg.data.iv_dir == fs::path("/abs/iv"));
  CHECK(cfg.price_file("AMD") == fs::path("/data/prices/AMD.csv"));
  CHECK(format_date(*cfg.data.start_date) == "2025-01-02");
  CHECK(!cfg.data.end_date);
  const auto& p = cfg.pipeline;
  CHECK(p.denominator == ReturnDenominator::kPrevious);
  CHECK(p.model.embed_dim == 64);
  CHECK(p.model.heads == 4);
  CHECK(!p.model.ffn_enabled);
  CHECK(p.model.layers == 4);
  CHECK(p.train.adam.lr == 0.001);
  CHECK(p.train.epochs == 3);
  CHECK(p.joint.source_bins == 6);
  CHECK(p.joint.binning == SourceBinning::kFixed);
  CHECK(!p.joint.include_target);
  CHECK(p.pid.method == UnionMethod::kExact);
  CHECK(p.ablation.multipliers == std::vector<int>{1, 2});
  CHECK(p.ablation.filter == AblationFilter::kMovingAverage);
  CHECK(p.seed == 9);
  CHECK(p.pid.seed == 9);
  CHECK(cfg.out == fs::path("/data/results"));
}

TEST_CASE("defaults") {
  const auto cfg = parse("");
  CHECK(cfg.pipeline.quantizer.bins == 64);
  CHECK(cfg.pipeline.model == ModelConfig{});
  CHECK(cfg.pipeline.pid.method == UnionMethod::kSurrogate);
  CHECK(cfg.pipeline.ablation.multipliers == std::vector<int>{1, 3, 5});
  CHECK(cfg.pipeline.joint.source_bins == 8);
  CHECK(cfg.pipeline.joint.alpha == 1.0);
}

TEST_CASE("rejects bad input") {
  CHECK_THROWS_WITH_AS(parse("[model]\nembedding = 3\n"), doctest::Contains("unknown key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("[models]\nheads = 2\n"), doctest::Contains("unknown section"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("[model]\nheads = four\n"), doctest::Contains("heads"), ConfigError);
  CHECK_THROWS_AS(parse("[pid]\nmethod = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse("[ablation]\nmultipliers = 1, x\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nseed = -1\n"), ConfigError);
}

TEST_CASE("overrides take precedence over the file") {
  auto cfg = parse(kSample);
  Overrides o;
  o.seed = 123;
  o.out = fs::path("elsewhere");
  o.multipliers = {5};
  o.bins = 32;
  apply_overrides(cfg, o);
  CHECK(cfg.pipeline.seed == 123);
  CHECK(cfg.synth.seed == 123);
  CHECK(cfg.out == fs::path("elsewhere"));
  CHECK(cfg.pipeline.ablation.multipliers == std::vector<int>{5});
  CHECK(cfg.pipeline.quantizer.bins == 32);

  auto kept = parse(kSample);
  apply_overrides(kept, Overrides{});
  CHECK(kept.pipeline.seed == 9);
}

TEST_CASE("validation") {
  const auto dir = fs::temp_directory_path() / "pidaudit_cfg";
  fs::create_directories(dir / "prices");
  for (const char* s : {"A", "B"}) std::ofstream(dir / "prices" / (std::string(s) + ".csv")) << "timestamp,close\n";

  auto cfg = parse("[data]\ntarget = A\nsupports = B\nprice_dir = prices\n", dir);
  CHECK_NOTHROW(cfg.validate(true));
  cfg.data.supports = {"B", "A"};
  CHECK_THROWS_WITH_AS(cfg.validate(true), doctest::Contains("also listed"), ConfigError);
  cfg.data.supports = {"B", "C"};
  CHECK_THROWS_WITH_AS(cfg.validate(true), doctest::Contains("C.csv"), ConfigError);
  cfg.data.supports = {"B"};
  cfg.data.iv_dir = dir / "iv";
  CHECK_THROWS_WITH_AS(cfg.validate(true), doctest::Contains("IV file"), ConfigError);
  CHECK_NOTHROW(parse("").validate(false));
  CHECK_THROWS_AS(parse("").validate(true), ConfigError);
  auto bad = parse("[model]\nembed_dim = 30\nheads = 4\n");
  CHECK_THROWS_AS(bad.validate(false), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("snapshot reproduces the configuration") {
  const auto cfg = parse(kSample);
  const auto again = parse(to_ini(cfg), "/elsewhere");
  CHECK(config_snapshot(again) == config_snapshot(cfg));
}
