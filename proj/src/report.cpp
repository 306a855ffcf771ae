#include "pidaudit/report.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "pidaudit/error.hpp"

namespace pidaudit {

namespace {

using Json = nlohmann::ordered_json;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

Json solver_json(const UnionResult& r) {
  Json j;
  j["method"] = to_string(r.method);
  j["iterations"] = r.iterations;
  j["gap_estimate"] = r.gap_estimate;
  j["residual"] = r.residual;
  j["best_restart"] = r.best_restart;
  j["channel_states"] = r.channel_states;
  return j;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

void write_predictions(const std::filesystem::path& path, const ConditionResult& c) {
  auto out = open_out(path);
  out << "timestamp,actual_pr,expected_pr\n";
  for (const auto& p : c.predictions)
    out << format_timestamp(p.timestamp) << ',' << num(p.actual) << ',' << num(p.expected) << '\n';
}

}  // namespace

std::string report_json(const AuditReport& report) {
  Json j;
  j["deterministic"] = report.deterministic;
  Json cfg = Json::object();
  for (const auto& [k, v] : report.config_snapshot) cfg[k] = v;
  j["config"] = cfg;
  Json conds = Json::array();
  for (const auto& c : report.conditions) {
    Json cj;
    cj["condition"] = c.label;
    cj["multiplier"] = c.multiplier;
    cj["sources"] = c.series.sources;
    Json mean = Json::object(), corr = Json::object();
    for (std::size_t s = 0; s < c.series.sources.size(); ++s) {
      mean[c.series.sources[s]] = c.mean_ei[s];
      corr[c.series.sources[s]] = optional_json(c.pearson[s]);
    }
    cj["mean_ei"] = mean;
    cj["pearson_r"] = corr;
    if (c.training) {
      Json tj;
      tj["train_windows"] = c.training->train_windows;
      tj["val_windows"] = c.training->val_windows;
      Json hist = Json::array();
      for (const auto& e : c.training->history)
        hist.push_back(Json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
      tj["history"] = hist;
      cj["training"] = tj;
    }
    Json days = Json::array();
    for (const auto& d : c.series.days) {
      Json dj;
      dj["date"] = format_date(d.date);
      dj["windows"] = d.windows;
      Json mi = Json::object(), ei = Json::object();
      for (std::size_t s = 0; s < c.series.sources.size(); ++s) {
        mi[c.series.sources[s]] = d.mi[s];
        ei[c.series.sources[s]] = d.ei[s];
      }
      dj["I"] = mi;
      dj["EI"] = ei;
      dj["U"] = d.union_info;
      dj["I_joint"] = d.joint_info;
      dj["solver"] = solver_json(d.solver);
      days.push_back(dj);
    }
    cj["days"] = days;
    conds.push_back(cj);
  }
  j["conditions"] = conds;
  Json iv = Json::object();
  for (const auto& s : report.iv) {
    Json pts = Json::array();
    for (const auto& p : s.points) pts.push_back(Json{{"date", format_date(p.date)}, {"iv", p.iv}});
    iv[s.symbol] = pts;
  }
  j["iv"] = iv;
  return j.dump(2) + "\n";
}

void emit_report(const AuditReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  {
    auto out = open_out(out_dir / "ei_daily.csv");
    out << "date,support,condition,EI,I,U\n";
    for (const auto& c : report.conditions)
      for (const auto& d : c.series.days)
        for (std::size_t s = 0; s < c.series.sources.size(); ++s)
          out << format_date(d.date) << ',' << c.series.sources[s] << ',' << c.label << ',' << num(d.ei[s]) << ','
              << num(d.mi[s]) << ',' << num(d.union_info) << '\n';
  }
  {
    auto out = open_out(out_dir / "correlations.csv");
    out << "support,condition,pearson_r\n";
    for (const auto& c : report.conditions)
      for (std::size_t s = 0; s < c.series.sources.size(); ++s)
        out << c.series.sources[s] << ',' << c.label << ',' << (c.pearson[s] ? num(*c.pearson[s]) : "undefined")
            << '\n';
  }
  {
    auto out = open_out(out_dir / "report.json");
    out << report_json(report);
  }
  for (std::size_t i = 0; i < report.conditions.size(); ++i) {
    const auto& c = report.conditions[i];
    write_predictions(out_dir / (i == 0 ? std::string("prediction.csv") : "prediction_" + c.label + ".csv"), c);
  }
}

void write_loss_history(const std::filesystem::path& path, const TrainResult& result) {
  auto out = open_out(path);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : result.history) out << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_loss) << '\n';
}

}  // namespace pidaudit
