#include "pidaudit/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pidaudit/error.hpp"

namespace pidaudit {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"data", {"target", "supports", "price_dir", "iv_dir", "start_date", "end_date", "return_denominator"}},
      {"quantizer", {"lo", "hi", "bins"}},
      {"model", {"embed_dim", "heads", "layers", "context", "dropout", "ffn", "ffn_mult", "rope_base"}},
      {"train",
       {"lr", "beta1", "beta2", "eps", "batch", "epochs", "val_fraction", "window_stride", "grad_clip", "max_steps"}},
      {"audit", {"source_bins", "alpha", "binning", "include_target"}},
      {"pid", {"method", "max_channel_states", "max_iterations", "tolerance", "restarts"}},
      {"ablation", {"multipliers", "filter"}},
      {"run", {"seed", "out"}},
      {"synth",
       {"days", "bars_per_day", "first_hour", "start_date", "target", "supports", "weights", "lag", "support_sigma",
        "target_noise", "target_ar", "hf_noise", "start_price"}},
  };
  return s;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {}

  template <class T>
  void get(const std::string& key, T& value) const {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return;
    try {
      value = convert<T>(trim(*v));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(source_ + ": invalid value for " + key + ": '" + *v + "'");
    }
  }

  [[nodiscard]] std::optional<std::string> raw(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (v) return trim(*v);
    return std::nullopt;
  }

 private:
  template <class T>
  static T convert(const std::string& s) {
    if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw std::invalid_argument("bool");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t pos = 0;
      const double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing");
      return static_cast<T>(d);
    } else {
      if (!s.empty() && s[0] == '-' && std::is_unsigned_v<T>) throw std::invalid_argument("negative");
      std::size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing");
      return static_cast<T>(v);
    }
  }

  const pt::ptree& tree_;
  std::string source_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

// Shortest of %.15g..%.17g that reads back as the same double.
std::string num(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, std::string>)
      s += xs[i];
    else if constexpr (std::is_floating_point_v<T>)
      s += num(xs[i]);
    else
      s += std::to_string(xs[i]);
  }
  return s;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v, std::string_view source) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    try {
      std::size_t pos = 0;
      if constexpr (std::is_floating_point_v<T>)
        out.push_back(std::stod(item, &pos));
      else
        out.push_back(static_cast<T>(std::stoll(item, &pos)));
      if (pos != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(std::string(source) + ": invalid list entry for " + key + ": '" + item + "'");
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> RunConfig::symbols() const {
  std::vector<std::string> s{data.target};
  s.insert(s.end(), data.supports.begin(), data.supports.end());
  return s;
}

fs::path RunConfig::price_file(const std::string& symbol) const { return data.price_dir / (symbol + ".csv"); }

std::optional<fs::path> RunConfig::iv_file(const std::string& symbol) const {
  if (!data.iv_dir) return std::nullopt;
  return *data.iv_dir / (symbol + ".csv");
}

RunConfig parse_run_config(std::istream& in, const fs::path& base_dir, std::string_view source) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string(source) + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError(std::string(source) + ": unknown section [" + section + "]");
    if (!body.data().empty() && body.empty())
      throw ConfigError(std::string(source) + ": key '" + section + "' outside any section");
    for (const auto& [key, value] : body)
      if (!it->second.count(key))
        throw ConfigError(std::string(source) + ": unknown key '" + key + "' in [" + section + "]");
  }

  const Reader r(tree, std::string(source));
  RunConfig cfg;
  auto& p = cfg.pipeline;

  r.get("data.target", cfg.data.target);
  if (auto v = r.raw("data.supports")) cfg.data.supports = split_list(*v);
  if (auto v = r.raw("data.price_dir")) cfg.data.price_dir = resolve(base_dir, *v);
  if (auto v = r.raw("data.iv_dir")) cfg.data.iv_dir = resolve(base_dir, *v);
  try {
    if (auto v = r.raw("data.start_date")) cfg.data.start_date = parse_date(*v);
    if (auto v = r.raw("data.end_date")) cfg.data.end_date = parse_date(*v);
  } catch (const std::exception& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  if (auto v = r.raw("data.return_denominator")) {
    if (*v == "current")
      p.denominator = ReturnDenominator::kCurrent;
    else if (*v == "previous")
      p.denominator = ReturnDenominator::kPrevious;
    else
      throw ConfigError(std::string(source) + ": return_denominator must be current|previous");
  }

  r.get("quantizer.lo", p.quantizer.lo);
  r.get("quantizer.hi", p.quantizer.hi);
  r.get("quantizer.bins", p.quantizer.bins);

  r.get("model.embed_dim", p.model.embed_dim);
  r.get("model.heads", p.model.heads);
  r.get("model.layers", p.model.layers);
  r.get("model.context", p.model.context);
  r.get("model.dropout", p.model.dropout);
  r.get("model.ffn", p.model.ffn_enabled);
  r.get("model.ffn_mult", p.model.ffn_mult);
  r.get("model.rope_base", p.model.rope_base);

  r.get("train.lr", p.train.adam.lr);
  r.get("train.beta1", p.train.adam.beta1);
  r.get("train.beta2", p.train.adam.beta2);
  r.get("train.eps", p.train.adam.eps);
  r.get("train.batch", p.train.batch);
  r.get("train.epochs", p.train.epochs);
  r.get("train.val_fraction", p.train.val_fraction);
  r.get("train.window_stride", p.train.window_stride);
  r.get("train.grad_clip", p.train.grad_clip);
  r.get("train.max_steps", p.train.max_steps);

  r.get("audit.source_bins", p.joint.source_bins);
  r.get("audit.alpha", p.joint.alpha);
  if (auto v = r.raw("audit.binning")) {
    if (*v == "quantile")
      p.joint.binning = SourceBinning::kQuantile;
    else if (*v == "fixed")
      p.joint.binning = SourceBinning::kFixed;
    else
      throw ConfigError(std::string(source) + ": binning must be quantile|fixed");
  }
  r.get("audit.include_target", p.joint.include_target);

  if (auto v = r.raw("pid.method")) {
    if (*v == "exact")
      p.pid.method = UnionMethod::kExact;
    else if (*v == "surrogate")
      p.pid.method = UnionMethod::kSurrogate;
    else
      throw ConfigError(std::string(source) + ": pid method must be exact|surrogate");
  }
  r.get("pid.max_channel_states", p.pid.max_channel_states);
  r.get("pid.max_iterations", p.pid.max_iterations);
  r.get("pid.tolerance", p.pid.tolerance);
  r.get("pid.restarts", p.pid.restarts);

  if (auto v = r.raw("ablation.multipliers")) p.ablation.multipliers = parse_list<int>("multipliers", *v, source);
  if (auto v = r.raw("ablation.filter")) {
    if (*v == "hold")
      p.ablation.filter = AblationFilter::kHold;
    else if (*v == "ma")
      p.ablation.filter = AblationFilter::kMovingAverage;
    else
      throw ConfigError(std::string(source) + ": ablation filter must be hold|ma");
  }

  std::uint64_t seed = 0;
  r.get("run.seed", seed);
  if (auto v = r.raw("run.out")) cfg.out = resolve(base_dir, *v);

  auto& s = cfg.synth;
  r.get("synth.days", s.days);
  r.get("synth.bars_per_day", s.bars_per_day);
  r.get("synth.first_hour", s.first_hour);
  r.get("synth.start_date", s.start_date);
  r.get("synth.target", s.target);
  if (auto v = r.raw("synth.supports")) s.supports = split_list(*v);
  if (auto v = r.raw("synth.weights")) s.weights = parse_list<double>("weights", *v, source);
  if (auto v = r.raw("synth.hf_noise")) s.hf_noise = parse_list<double>("hf_noise", *v, source);
  if (s.hf_noise.size() != s.supports.size() && !r.raw("synth.hf_noise")) s.hf_noise.assign(s.supports.size(), 0.0);
  r.get("synth.lag", s.lag);
  r.get("synth.support_sigma", s.support_sigma);
  r.get("synth.target_noise", s.target_noise);
  r.get("synth.target_ar", s.target_ar);
  r.get("synth.start_price", s.start_price);

  Overrides o;
  o.seed = seed;
  apply_overrides(cfg, o);
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_run_config(in, fs::absolute(path).parent_path(), path.string());
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.pipeline.seed = *o.seed;
    cfg.pipeline.pid.seed = *o.seed;
    cfg.synth.seed = *o.seed;
  }
  if (o.out) cfg.out = *o.out;
  if (!o.multipliers.empty()) cfg.pipeline.ablation.multipliers = o.multipliers;
  if (o.bins) cfg.pipeline.quantizer.bins = *o.bins;
}

void RunConfig::validate(bool need_data) const {
  const auto& p = pipeline;
  p.quantizer.validate();
  ModelConfig mc = p.model;
  mc.input_dim = need_data ? static_cast<int>(1 + data.supports.size()) : std::max(mc.input_dim, 1);
  mc.out_bins = p.quantizer.bins;
  mc.validate();
  const auto& t = p.train;
  if (!(t.adam.lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0) || !(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0))
    throw ConfigError("train: betas must lie in [0, 1)");
  if (!(t.adam.eps > 0.0)) throw ConfigError("train: eps must be > 0");
  if (t.batch < 1 || t.epochs < 1 || t.window_stride < 1) throw ConfigError("train: batch, epochs, window_stride must be >= 1");
  if (!(t.val_fraction > 0.0 && t.val_fraction < 1.0)) throw ConfigError("train: val_fraction must lie in (0, 1)");
  if (!(t.grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be >= 0");
  if (t.max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  p.joint.validate();
  if (p.pid.max_iterations < 1 || p.pid.restarts < 1) throw ConfigError("pid: max_iterations, restarts must be >= 1");
  if (!(p.pid.tolerance > 0.0)) throw ConfigError("pid: tolerance must be > 0");
  p.ablation.validate();
  if (!need_data) return;

  if (data.target.empty()) throw ConfigError("data: target is required");
  if (data.supports.empty()) throw ConfigError("data: at least one support is required");
  std::set<std::string> seen{data.target};
  for (const auto& s : data.supports) {
    if (s == data.target) throw ConfigError("data: target " + s + " also listed as a support");
    if (!seen.insert(s).second) throw ConfigError("data: duplicate support " + s);
  }
  if (data.price_dir.empty()) throw ConfigError("data: price_dir is required");
  if (data.start_date && data.end_date && *data.end_date < *data.start_date)
    throw ConfigError("data: end_date precedes start_date");
  for (const auto& sym : symbols())
    if (!fs::is_regular_file(price_file(sym))) throw ConfigError("data: missing price file " + price_file(sym).string());
  for (const auto& sym : data.supports)
    if (auto f = iv_file(sym); f && !fs::is_regular_file(*f)) throw ConfigError("data: missing IV file " + f->string());
}

std::vector<std::pair<std::string, std::string>> config_snapshot(const RunConfig& cfg) {
  const auto& p = cfg.pipeline;
  std::vector<std::pair<std::string, std::string>> s;
  auto add = [&](std::string k, std::string v) { s.emplace_back(std::move(k), std::move(v)); };
  add("data.target", cfg.data.target);
  add("data.supports", join(cfg.data.supports));
  add("data.price_dir", cfg.data.price_dir.string());
  if (cfg.data.iv_dir) add("data.iv_dir", cfg.data.iv_dir->string());
  if (cfg.data.start_date) add("data.start_date", format_date(*cfg.data.start_date));
  if (cfg.data.end_date) add("data.end_date", format_date(*cfg.data.end_date));
  add("data.return_denominator", p.denominator == ReturnDenominator::kCurrent ? "current" : "previous");
  add("quantizer.lo", num(p.quantizer.lo));
  add("quantizer.hi", num(p.quantizer.hi));
  add("quantizer.bins", std::to_string(p.quantizer.bins));
  add("model.embed_dim", std::to_string(p.model.embed_dim));
  add("model.heads", std::to_string(p.model.heads));
  add("model.layers", std::to_string(p.model.layers));
  add("model.context", std::to_string(p.model.context));
  add("model.dropout", num(p.model.dropout));
  add("model.ffn", p.model.ffn_enabled ? "true" : "false");
  add("model.ffn_mult", std::to_string(p.model.ffn_mult));
  add("model.rope_base", num(p.model.rope_base));
  add("train.lr", num(p.train.adam.lr));
  add("train.beta1", num(p.train.adam.beta1));
  add("train.beta2", num(p.train.adam.beta2));
  add("train.eps", num(p.train.adam.eps));
  add("train.batch", std::to_string(p.train.batch));
  add("train.epochs", std::to_string(p.train.epochs));
  add("train.val_fraction", num(p.train.val_fraction));
  add("train.window_stride", std::to_string(p.train.window_stride));
  add("train.grad_clip", num(p.train.grad_clip));
  add("train.max_steps", std::to_string(p.train.max_steps));
  add("audit.source_bins", std::to_string(p.joint.source_bins));
  add("audit.alpha", num(p.joint.alpha));
  add("audit.binning", to_string(p.joint.binning));
  add("audit.include_target", p.joint.include_target ? "true" : "false");
  add("pid.method", to_string(p.pid.method));
  add("pid.max_channel_states", std::to_string(p.pid.max_channel_states));
  add("pid.max_iterations", std::to_string(p.pid.max_iterations));
  add("pid.tolerance", num(p.pid.tolerance));
  add("pid.restarts", std::to_string(p.pid.restarts));
  add("ablation.multipliers", join(p.ablation.multipliers));
  add("ablation.filter", p.ablation.filter == AblationFilter::kHold ? "hold" : "ma");
  add("run.seed", std::to_string(p.seed));
  add("run.out", cfg.out.string());
  return s;
}

std::string to_ini(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& [key, value] : config_snapshot(cfg)) {
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

std::vector<PriceSeries> load_prices(const RunConfig& cfg) {
  std::vector<PriceSeries> out;
  for (const auto& sym : cfg.symbols()) {
    auto ps = load_price_csv(cfg.price_file(sym), sym);
    if (cfg.data.start_date || cfg.data.end_date)
      ps = restrict_dates(ps, cfg.data.start_date.value_or(Date::min()), cfg.data.end_date.value_or(Date::max()));
    out.push_back(std::move(ps));
  }
  return out;
}

std::vector<IvSeries> load_iv(const RunConfig& cfg) {
  std::vector<IvSeries> out;
  for (const auto& sym : cfg.data.supports)
    if (auto f = cfg.iv_file(sym)) out.push_back(load_iv_csv(*f, sym));
  return out;
}

}  // namespace pidaudit
