#pragma once
// Result tables, JSON export and SVG training curves.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "congrpo/eval.hpp"

namespace congrpo {

inline constexpr int kReportSchemaVersion = 1;

// Percent with two decimals: "85.15 ± 1.19".
std::string format_mean_std(const Stat& s);

// One row per entry, columns per task axis plus overall, format rate and the
// consistency diagnostic.
std::string render_table(const std::vector<AggregateRow>& rows);

nlohmann::json eval_report_to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);  // throws InputError

nlohmann::json report_to_json(const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> report_from_json(const nlohmann::json& j);  // throws InputError

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series);

// Reads one numeric field per step from a metrics log.
Series metrics_series(const std::filesystem::path& metrics_log, const std::string& field,
                      std::string label);

struct ReportOutputs {
  std::filesystem::path table;
  std::filesystem::path json;
  std::vector<std::filesystem::path> plots;
};

// Writes report.txt and report.json into out_dir. With metrics logs given as
// (label, rl_metrics.jsonl) pairs, also writes reward_curve.svg and
// accuracy_curve.svg.
ReportOutputs write_report(
    const std::vector<AggregateRow>& rows, const std::filesystem::path& out_dir,
    const std::vector<std::pair<std::string, std::filesystem::path>>& metrics_logs = {});

}  // namespace congrpo
