#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pidaudit/pipeline.hpp"
#include "pidaudit/synth.hpp"

namespace pidaudit {

struct DataConfig {
  std::string target;
  std::vector<std::string> supports;
  std::filesystem::path price_dir;           // <price_dir>/<SYMBOL>.csv
  std::optional<std::filesystem::path> iv_dir;  // <iv_dir>/<SYMBOL>.csv per support
  std::optional<Date> start_date;
  std::optional<Date> end_date;
};

struct RunConfig {
  DataConfig data;
  PipelineConfig pipeline;
  SynthSpec synth;
  std::filesystem::path out = "out";

  [[nodiscard]] std::vector<std::string> symbols() const;  // target first
  [[nodiscard]] std::filesystem::path price_file(const std::string& symbol) const;
  [[nodiscard]] std::optional<std::filesystem::path> iv_file(const std::string& symbol) const;

  /// `need_data` also requires the [data] section and checks every file exists.
  void validate(bool need_data) const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::vector<int> multipliers;
  std::optional<int> bins;
};

/// Relative paths in the file resolve against `base_dir`.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir,
                           std::string_view source = "<stream>");
RunConfig load_run_config(const std::filesystem::path& path);
void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Every effective setting as ("section.key", value), in schema order.
std::vector<std::pair<std::string, std::string>> config_snapshot(const RunConfig& cfg);
std::string to_ini(const RunConfig& cfg);

std::vector<PriceSeries> load_prices(const RunConfig& cfg);  // target first, date-restricted
std::vector<IvSeries> load_iv(const RunConfig& cfg);         // supports with an IV file

}  // namespace pidaudit
