#include "pidaudit/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pidaudit/error.hpp"

namespace pidaudit {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_int(std::string_view s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool try_parse_date(std::string_view s, Date& out) {
  int y = 0, m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), m) || !parse_int(s.substr(8, 2), d))
    return false;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return false;
  out = Date{ymd};
  return true;
}

bool try_parse_timestamp(std::string_view s, Timestamp& out) {
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
  if (s.size() < 16 || (s[10] != 'T' && s[10] != ' ')) return false;
  Date d;
  if (!try_parse_date(s.substr(0, 10), d)) return false;
  int hh = 0, mm = 0, ss = 0;
  if (s[13] != ':' || !parse_int(s.substr(11, 2), hh) || !parse_int(s.substr(14, 2), mm)) return false;
  if (s.size() == 19) {
    if (s[16] != ':' || !parse_int(s.substr(17, 2), ss)) return false;
  } else if (s.size() != 16) {
    return false;
  }
  if (hh > 23 || mm > 59 || ss > 60) return false;
  out = Timestamp{d} + std::chrono::hours{hh} + std::chrono::minutes{mm} + std::chrono::seconds{ss};
  return true;
}

std::string symbol_from_path(const std::filesystem::path& path) { return path.stem().string(); }

// Splits a two-column CSV row; returns false on wrong arity.
bool split2(std::string_view line, std::string_view& a, std::string_view& b) {
  const auto comma = line.find(',');
  if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) return false;
  a = trim(line.substr(0, comma));
  b = trim(line.substr(comma + 1));
  return true;
}

std::string where(std::string_view source, std::size_t line_no) {
  return std::string(source) + ":" + std::to_string(line_no);
}

void expect_header(std::istream& in, std::string_view source, std::string_view c0, std::string_view c1) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(std::string(source) + ": empty file");
  std::string_view a, b;
  if (!split2(trim(line), a, b) || a != c0 || b != c1) {
    throw DataError(where(source, 1) + ": expected header '" + std::string(c0) + "," + std::string(c1) + "'");
  }
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  Timestamp ts;
  if (!try_parse_timestamp(trim(text), ts)) throw DataError("unparseable timestamp '" + std::string(text) + "'");
  return ts;
}

std::string format_timestamp(Timestamp ts) {
  const auto day = date_of(ts);
  const std::chrono::hh_mm_ss hms{ts - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(day).c_str(), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return buf;
}

Date parse_date(std::string_view text) {
  Date d;
  if (!try_parse_date(trim(text), d)) throw DataError("unparseable date '" + std::string(text) + "'");
  return d;
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

void QuantizerSpec::validate() const {
  if (!(lo < hi)) throw ConfigError("quantizer: lo must be < hi");
  if (bins < 2) throw ConfigError("quantizer: bins must be >= 2");
}

std::vector<double> AlignedPanel::column(std::size_t s) const {
  std::vector<double> out(rows());
  for (std::size_t t = 0; t < rows(); ++t) out[t] = at(t, s);
  return out;
}

PriceSeries read_price_csv(std::istream& in, std::string symbol, std::string_view source) {
  expect_header(in, source, "timestamp", "close");
  PriceSeries series{std::move(symbol), {}};
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    std::string_view a, b;
    PriceBar bar;
    if (!split2(row, a, b) || !try_parse_timestamp(a, bar.timestamp) || !parse_double(b, bar.close) ||
        !std::isfinite(bar.close)) {
      throw DataError(where(source, line_no) + ": malformed row '" + std::string(row) + "'");
    }
    if (bar.close <= 0.0) throw DataError(where(source, line_no) + ": non-positive price");
    series.bars.push_back(bar);
  }
  std::stable_sort(series.bars.begin(), series.bars.end(),
                   [](const PriceBar& x, const PriceBar& y) { return x.timestamp < y.timestamp; });
  for (std::size_t i = 1; i < series.bars.size(); ++i) {
    if (series.bars[i].timestamp == series.bars[i - 1].timestamp) {
      throw DataError(std::string(source) + ": duplicate timestamp " + format_timestamp(series.bars[i].timestamp));
    }
  }
  return series;
}

PriceSeries load_price_csv(const std::filesystem::path& path, std::string symbol) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open price file " + path.string());
  if (symbol.empty()) symbol = symbol_from_path(path);
  return read_price_csv(in, std::move(symbol), path.string());
}

void write_price_csv(const std::filesystem::path& path, const PriceSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestamp,close\n";
  char buf[64];
  for (const auto& bar : series.bars) {
    std::snprintf(buf, sizeof buf, "%.10g", bar.close);
    out << format_timestamp(bar.timestamp) << ',' << buf << '\n';
  }
}

IvSeries read_iv_csv(std::istream& in, std::string symbol, std::string_view source) {
  expect_header(in, source, "date", "iv");
  IvSeries series{std::move(symbol), {}};
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    std::string_view a, b;
    IvPoint pt;
    if (!split2(row, a, b) || !try_parse_date(a, pt.date) || !parse_double(b, pt.iv) || !std::isfinite(pt.iv)) {
      throw DataError(where(source, line_no) + ": malformed row '" + std::string(row) + "'");
    }
    if (pt.iv < 0.0) throw DataError(where(source, line_no) + ": negative iv");
    series.points.push_back(pt);
  }
  std::stable_sort(series.points.begin(), series.points.end(),
                   [](const IvPoint& x, const IvPoint& y) { return x.date < y.date; });
  for (std::size_t i = 1; i < series.points.size(); ++i) {
    if (series.points[i].date == series.points[i - 1].date) {
      throw DataError(std::string(source) + ": duplicate date " + format_date(series.points[i].date));
    }
  }
  return series;
}

IvSeries load_iv_csv(const std::filesystem::path& path, std::string symbol) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open iv file " + path.string());
  if (symbol.empty()) symbol = symbol_from_path(path);
  return read_iv_csv(in, std::move(symbol), path.string());
}

void write_iv_csv(const std::filesystem::path& path, const IvSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date,iv\n";
  char buf[64];
  for (const auto& pt : series.points) {
    std::snprintf(buf, sizeof buf, "%.8g", pt.iv);
    out << format_date(pt.date) << ',' << buf << '\n';
  }
}

ReturnSeries compute_returns(const PriceSeries& series, ReturnDenominator denom) {
  if (series.bars.size() < 2) throw DataError(series.symbol + ": need at least 2 bars to compute returns");
  ReturnSeries out{series.symbol, {}};
  out.points.reserve(series.bars.size() - 1);
  for (std::size_t t = 1; t < series.bars.size(); ++t) {
    const double now = series.bars[t].close;
    const double prev = series.bars[t - 1].close;
    if (!(now > 0.0) || !(prev > 0.0)) throw DataError(series.symbol + ": non-positive price");
    const double base = denom == ReturnDenominator::kCurrent ? now : prev;
    out.points.push_back({series.bars[t].timestamp, (now - prev) / base});
  }
  return out;
}

PriceSeries resample_hold(const PriceSeries& series, int k) {
  if (k < 1) throw ConfigError("resample_hold: k must be >= 1");
  PriceSeries out = series;
  const auto block = static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < out.bars.size(); ++i) out.bars[i].close = series.bars[block * (i / block)].close;
  return out;
}

PriceSeries lowpass_ma(const PriceSeries& series, int k) {
  if (k < 1) throw ConfigError("lowpass_ma: k must be >= 1");
  PriceSeries out = series;
  if (k == 1) return out;
  const auto window = static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < out.bars.size(); ++i) {
    const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = first; j <= i; ++j) sum += series.bars[j].close;
    out.bars[i].close = sum / static_cast<double>(i + 1 - first);
  }
  return out;
}

int quantize(double pr, const QuantizerSpec& spec) {
  if (!std::isfinite(pr)) throw DataError("quantize: non-finite input");
  const double pos = std::floor((pr - spec.lo) / spec.width());
  if (pos < 0.0) return 0;
  if (pos >= spec.bins - 1) return spec.bins - 1;
  return static_cast<int>(pos);
}

double dequantize(int bin, const QuantizerSpec& spec) {
  if (bin < 0 || bin >= spec.bins) throw std::out_of_range("dequantize: bin " + std::to_string(bin) + " out of range");
  return spec.lo + (bin + 0.5) * spec.width();
}

DiscreteDistribution histogram(const ReturnSeries& returns, const QuantizerSpec& spec, double alpha) {
  if (returns.points.empty()) throw DataError("histogram: empty series");
  if (!(alpha >= 0.0)) throw ConfigError("histogram: alpha must be >= 0");
  std::vector<double> counts(static_cast<std::size_t>(spec.bins), 0.0);
  for (const auto& pt : returns.points) counts[static_cast<std::size_t>(quantize(pt.pr, spec))] += 1.0;
  const double denom = static_cast<double>(returns.points.size()) + alpha * spec.bins;
  for (double& c : counts) c = (c + alpha) / denom;
  return DiscreteDistribution(std::move(counts));
}

AlignedPanel align(std::span<const ReturnSeries> series, std::size_t min_rows) {
  if (series.empty()) throw DataError("align: no series given");
  std::map<Timestamp, std::size_t> seen;
  for (const auto& s : series)
    for (const auto& pt : s.points) ++seen[pt.timestamp];

  AlignedPanel panel;
  for (const auto& s : series) panel.symbols.push_back(s.symbol);
  for (const auto& [ts, n] : seen)
    if (n == series.size()) panel.timestamps.push_back(ts);
  if (panel.timestamps.size() < min_rows) {
    throw DataError("align: only " + std::to_string(panel.timestamps.size()) + " shared timestamps, need " +
                    std::to_string(min_rows));
  }

  const std::size_t cols = series.size();
  panel.returns.assign(panel.timestamps.size() * cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    std::size_t row = 0;
    for (const auto& pt : series[c].points) {
      if (row < panel.timestamps.size() && pt.timestamp == panel.timestamps[row]) {
        panel.returns[row * cols + c] = pt.pr;
        ++row;
      }
    }
  }
  return panel;
}

PriceSeries restrict_dates(const PriceSeries& series, Date from, Date to) {
  PriceSeries out{series.symbol, {}};
  for (const auto& bar : series.bars) {
    const auto d = date_of(bar.timestamp);
    if (d >= from && d <= to) out.bars.push_back(bar);
  }
  return out;
}

}  // namespace pidaudit
