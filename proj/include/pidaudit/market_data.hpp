#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pidaudit/distribution.hpp"

namespace pidaudit {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

/// Parses `YYYY-MM-DDTHH:MM[:SS][Z]` (a space separator is also accepted).
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);
Date parse_date(std::string_view text);
std::string format_date(Date d);
inline Date date_of(Timestamp ts) { return std::chrono::floor<std::chrono::days>(ts); }

struct PriceBar {
  Timestamp timestamp;
  double close = 0.0;
};

struct PriceSeries {
  std::string symbol;
  std::vector<PriceBar> bars;
};

struct ReturnPoint {
  Timestamp timestamp;
  double pr = 0.0;
};

struct ReturnSeries {
  std::string symbol;
  std::vector<ReturnPoint> points;
};

struct IvPoint {
  Date date;
  double iv = 0.0;
};

struct IvSeries {
  std::string symbol;
  std::vector<IvPoint> points;
};

/// Equal-width bins over [lo, hi); out-of-range values clamp to the edge bins.
struct QuantizerSpec {
  double lo = -0.128;
  double hi = 0.128;
  int bins = 64;

  [[nodiscard]] double width() const { return (hi - lo) / bins; }
  void validate() const;
};

/// Returns on a shared clock. Column 0 is the target, then supports.
struct AlignedPanel {
  std::vector<Timestamp> timestamps;
  std::vector<std::string> symbols;
  std::vector<double> returns;  // row-major [T x S]

  [[nodiscard]] std::size_t rows() const { return timestamps.size(); }
  [[nodiscard]] std::size_t cols() const { return symbols.size(); }
  [[nodiscard]] double at(std::size_t t, std::size_t s) const { return returns[t * cols() + s]; }
  [[nodiscard]] std::vector<double> column(std::size_t s) const;
};

enum class ReturnDenominator { kCurrent, kPrevious };

PriceSeries load_price_csv(const std::filesystem::path& path, std::string symbol = {});
PriceSeries read_price_csv(std::istream& in, std::string symbol, std::string_view source = "<stream>");
void write_price_csv(const std::filesystem::path& path, const PriceSeries& series);

IvSeries load_iv_csv(const std::filesystem::path& path, std::string symbol = {});
IvSeries read_iv_csv(std::istream& in, std::string symbol, std::string_view source = "<stream>");
void write_iv_csv(const std::filesystem::path& path, const IvSeries& series);

/// pr(t) = (price(t) - price(t-1)) / price(t) by default.
ReturnSeries compute_returns(const PriceSeries& series,
                             ReturnDenominator denom = ReturnDenominator::kCurrent);

/// Zero-order hold on k-bar blocks anchored at the first bar; timestamps unchanged.
PriceSeries resample_hold(const PriceSeries& series, int k);

/// Trailing moving average over k bars; the head uses the samples available.
PriceSeries lowpass_ma(const PriceSeries& series, int k);

int quantize(double pr, const QuantizerSpec& spec);
double dequantize(int bin, const QuantizerSpec& spec);

/// Laplace-style smoothed histogram: (count + alpha) / (T + alpha * bins).
DiscreteDistribution histogram(const ReturnSeries& returns, const QuantizerSpec& spec, double alpha);

/// Intersects timestamps across series; column order follows the input.
/// Throws DataError if fewer than `min_rows` shared timestamps remain.
AlignedPanel align(std::span<const ReturnSeries> series, std::size_t min_rows = 0);

/// Keeps bars whose calendar date lies in [from, to].
PriceSeries restrict_dates(const PriceSeries& series, Date from, Date to);

}  // namespace pidaudit
