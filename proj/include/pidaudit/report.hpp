#pragma once

#include <filesystem>
#include <string>

#include "pidaudit/pipeline.hpp"

namespace pidaudit {

/// Writes ei_daily.csv, correlations.csv, report.json and prediction.csv
/// (plus prediction_<label>.csv for every condition after the first).
void emit_report(const AuditReport& report, const std::filesystem::path& out_dir);

/// report.json content; deterministic for a given report.
std::string report_json(const AuditReport& report);

/// epoch,train_loss,val_loss
void write_loss_history(const std::filesystem::path& path, const TrainResult& result);

}  // namespace pidaudit
