#include "pidaudit/synth.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include "json.hpp"

#include "pidaudit/error.hpp"
#include "pidaudit/rng.hpp"

namespace pidaudit {

void SynthSpec::validate() const {
  if (days < 1 || bars_per_day < 1) throw ConfigError("synth: days and bars_per_day must be >= 1");
  if (first_hour < 0 || first_hour + bars_per_day > 24) throw ConfigError("synth: bars must fit inside one day");
  if (supports.empty()) throw ConfigError("synth: need at least one support");
  if (weights.size() != supports.size()) throw ConfigError("synth: one weight per support required");
  if (hf_noise.size() != supports.size()) throw ConfigError("synth: one hf_noise level per support required");
  if (lag < 1) throw ConfigError("synth: lag must be >= 1");
  if (!(support_sigma >= 0.0) || !(target_noise >= 0.0)) throw ConfigError("synth: noise levels must be >= 0");
  for (double h : hf_noise)
    if (!(h >= 0.0)) throw ConfigError("synth: hf_noise must be >= 0");
  if (!(std::abs(target_ar) < 1.0)) throw ConfigError("synth: |target_ar| must be < 1");
  if (!(start_price > 0.0)) throw ConfigError("synth: start_price must be > 0");
  for (const auto& s : supports)
    if (s == target) throw ConfigError("synth: support symbol equals the target");
  parse_date(start_date);
}

namespace {

double round_price(double p) { return std::max(1e-4, std::round(p * 1e4) / 1e4); }

// Keeps a return strictly inside (-0.5, 0.5) so prices stay positive.
double clamp_return(double r) { return std::clamp(r, -0.5, 0.5); }

std::vector<std::chrono::sys_days> trading_days(std::chrono::sys_days start, int n) {
  using namespace std::chrono;
  std::vector<sys_days> out;
  for (sys_days d = start; static_cast<int>(out.size()) < n; d += days{1}) {
    const weekday wd{d};
    if (wd != Saturday && wd != Sunday) out.push_back(d);
  }
  return out;
}

}  // namespace

SynthMarket synth_market(const SynthSpec& spec) {
  spec.validate();
  using namespace std::chrono;
  const auto days = trading_days(parse_date(spec.start_date), spec.days);
  std::vector<Timestamp> stamps;
  for (const auto d : days)
    for (int h = 0; h < spec.bars_per_day; ++h) stamps.push_back(d + hours{spec.first_hour + h});
  const std::size_t B = stamps.size();
  const std::size_t S = spec.supports.size();
  const CounterRng root(spec.seed);

  SynthMarket m;
  std::vector<std::vector<double>> true_ret(S, std::vector<double>(B, 0.0));
  for (std::size_t i = 0; i < S; ++i) {
    const CounterRng ret_rng = root.split(10 + i);
    const CounterRng hf_rng = root.split(100 + i);
    PriceSeries ps{spec.supports[i], {}};
    double latent = spec.start_price;
    for (std::size_t b = 0; b < B; ++b) {
      if (b > 0) {
        true_ret[i][b] = clamp_return(spec.support_sigma * ret_rng.normal_at(b));
        latent /= 1.0 - true_ret[i][b];
      }
      const double observed = latent * std::exp(spec.hf_noise[i] * hf_rng.normal_at(b));
      ps.bars.push_back({stamps[b], round_price(observed)});
    }
    m.prices.push_back(std::move(ps));
  }

  PriceSeries target{spec.target, {}};
  const CounterRng eps_rng = root.split(1);
  double price = spec.start_price;
  double prev_pr = 0.0;
  target.bars.push_back({stamps[0], round_price(price)});
  price = target.bars[0].close;
  for (std::size_t b = 1; b < B; ++b) {
    double pr = spec.target_ar * prev_pr + spec.target_noise * eps_rng.normal_at(b);
    if (b >= static_cast<std::size_t>(spec.lag))
      for (std::size_t i = 0; i < S; ++i) pr += spec.weights[i] * true_ret[i][b - spec.lag];
    pr = clamp_return(pr);
    const double next = round_price(price / (1.0 - pr));
    prev_pr = (next - price) / next;
    price = next;
    target.bars.push_back({stamps[b], price});
  }
  m.prices.insert(m.prices.begin(), std::move(target));

  // Daily implied vol: log-AR(1) around a per-support level, unrelated to the
  // return dynamics.
  for (std::size_t i = 0; i < S; ++i) {
    const CounterRng iv_rng = root.split(1000 + i);
    const double base = std::log(0.3 + 0.1 * static_cast<double>(i));
    double level = base;
    IvSeries ivs{spec.supports[i], {}};
    for (std::size_t d = 0; d < days.size(); ++d) {
      level = base + 0.9 * (level - base) + 0.1 * iv_rng.normal_at(d);
      ivs.points.push_back({days[d], std::round(std::exp(level) * 1e6) / 1e6});
    }
    m.iv.push_back(std::move(ivs));
  }

  std::vector<ReturnSeries> rets;
  for (const auto& p : m.prices) rets.push_back(compute_returns(p));
  m.panel = align(rets);
  return m;
}

std::string synth_truth_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["seed"] = spec.seed;
  j["target"] = spec.target;
  j["supports"] = spec.supports;
  j["weights"] = spec.weights;
  j["lag"] = spec.lag;
  j["support_sigma"] = spec.support_sigma;
  j["target_noise"] = spec.target_noise;
  j["target_ar"] = spec.target_ar;
  j["hf_noise"] = spec.hf_noise;
  j["days"] = spec.days;
  j["bars_per_day"] = spec.bars_per_day;
  j["start_date"] = spec.start_date;
  return j.dump(2) + "\n";
}

}  // namespace pidaudit
