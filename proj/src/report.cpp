#include "congrpo/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "congrpo/checkpoint.hpp"
#include "congrpo/errors.hpp"

namespace congrpo {

using json = nlohmann::json;

std::string format_mean_std(const Stat& s) {
  return fmt::format("{:.2f} ± {:.2f}", 100.0 * s.mean, 100.0 * s.std);
}

namespace {

// Display width, counting each UTF-8 code point once.
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  const std::size_t w = display_width(s);
  const std::string fill(width > w ? width - w : 0, ' ');
  return right ? fill + s : s + fill;
}

std::string short_axis(TaskAxis a) {
  switch (a) {
    case TaskAxis::kAnatomyIdentification: return "Anatomy";
    case TaskAxis::kModalityClassification: return "Modality";
    case TaskAxis::kAnomalyDetection: return "Anomaly";
    case TaskAxis::kPathologyCharacterization: return "Pathology";
    case TaskAxis::kLesionLocalization: return "Localization";
  }
  return "?";
}

}  // namespace

std::string render_table(const std::vector<AggregateRow>& rows) {
  std::vector<std::string> header{"Method"};
  for (TaskAxis a : kAllAxes) header.push_back(short_axis(a));
  header.insert(header.end(), {"Overall", "Format", "Consistency*", "Seeds"});

  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::string> line{row.label};
    if (row.runs.empty()) {
      for (std::size_t i = 1; i + 1 < header.size(); ++i) line.push_back("FAILED");
      line.push_back("0");
    } else {
      for (TaskAxis a : kAllAxes) line.push_back(format_mean_std(row.axis(a)));
      line.push_back(format_mean_std(row.overall()));
      line.push_back(format_mean_std(row.format_rate()));
      line.push_back(format_mean_std(row.consistency_rate()));
      line.push_back(std::to_string(row.runs.size()) + (row.failure ? " (partial)" : ""));
    }
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = display_width(header[c]);
    for (const auto& line : cells) width[c] = std::max(width[c], display_width(line[c]));
  }
  const auto emit = [&](const std::vector<std::string>& line) {
    std::string out;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out += "  ";
      out += pad(line[c], width[c], c > 0);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& line : cells) out += emit(line);
  out += "Accuracies in percent, mean ± sample std over seeds.\n";
  out += "* Consistency: share of well-formed outputs whose thought lets the evaluator deduce the "
         "emitted answer (engine diagnostic).\n";
  for (const auto& row : rows) {
    if (row.failure) out += fmt::format("! {}: {}\n", row.label, *row.failure);
  }
  return out;
}

json eval_report_to_json(const EvalReport& r) {
  json axes = json::object();
  for (TaskAxis a : kAllAxes) {
    const auto& c = r.per_axis[static_cast<std::size_t>(axis_index(a))];
    axes[std::string(axis_name(a))] = {{"correct", c.correct}, {"total", c.total},
                                       {"accuracy", r.axis_accuracy(a)}};
  }
  return json{{"checkpoint_id", r.checkpoint_id},
              {"seeds", r.seeds},
              {"per_axis", axes},
              {"total", r.total},
              {"correct", r.correct},
              {"well_formed", r.well_formed},
              {"consistent", r.consistent},
              {"undecodable", r.undecodable},
              {"overall_accuracy", r.overall()},
              {"format_rate", r.format_rate()},
              {"consistency_rate_diagnostic", r.consistency_rate()}};
}

EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (TaskAxis a : kAllAxes) {
      const auto& c = j.at("per_axis").at(std::string(axis_name(a)));
      auto& slot = r.per_axis[static_cast<std::size_t>(axis_index(a))];
      slot.correct = c.at("correct").get<long>();
      slot.total = c.at("total").get<long>();
    }
    r.total = j.at("total").get<long>();
    r.correct = j.at("correct").get<long>();
    r.well_formed = j.at("well_formed").get<long>();
    r.consistent = j.at("consistent").get<long>();
    r.undecodable = j.at("undecodable").get<long>();
    return r;
  } catch (const json::exception& e) {
    throw InputError(fmt::format("report: malformed eval record: {}", e.what()));
  }
}

json report_to_json(const std::vector<AggregateRow>& rows) {
  json out{{"schema", "congrpo-report"}, {"schema_version", kReportSchemaVersion}};
  json arr = json::array();
  for (const auto& row : rows) {
    json runs = json::array();
    for (const auto& r : row.runs) runs.push_back(eval_report_to_json(r));
    const auto stat = [](const Stat& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
    json summary = json::object();
    if (!row.runs.empty()) {
      summary["overall"] = stat(row.overall());
      summary["format_rate"] = stat(row.format_rate());
      summary["consistency_rate_diagnostic"] = stat(row.consistency_rate());
      for (TaskAxis a : kAllAxes) summary[std::string(axis_name(a))] = stat(row.axis(a));
    }
    arr.push_back({{"label", row.label},
                   {"failure", row.failure ? json(*row.failure) : json(nullptr)},
                   {"runs", runs},
                   {"summary", summary}});
  }
  out["rows"] = arr;
  return out;
}

std::vector<AggregateRow> report_from_json(const json& j) {
  if (j.value("schema", "") != "congrpo-report") throw InputError("report: not a report file");
  if (j.value("schema_version", -1) != kReportSchemaVersion) {
    throw InputError(fmt::format("report: schema_version {} unsupported (expects {})",
                                 j.value("schema_version", -1), kReportSchemaVersion));
  }
  std::vector<AggregateRow> rows;
  try {
    for (const auto& r : j.at("rows")) {
      AggregateRow row;
      row.label = r.at("label").get<std::string>();
      if (!r.at("failure").is_null()) row.failure = r.at("failure").get<std::string>();
      for (const auto& e : r.at("runs")) row.runs.push_back(eval_report_from_json(e));
      rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("report: malformed row: {}", e.what()));
  }
  return rows;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 160, kTop = 40, kBottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!any) {
        x0 = x1 = x;
        y0 = y1 = y;
        any = true;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{3}</text>\n",
      kW, kH, kLeft + pw / 2, xml_escape(title));
  out += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", kLeft,
      kTop, pw, ph);
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double xv = x0 + (x1 - x0) * i / 4.0;
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3g}</text>\n",
        kLeft - 6, py(yv) + 4, yv);
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.4g}</text>\n",
        px(xv), kTop + ph + 16, xv);
  }
  out += fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
      kLeft + pw / 2, kH - 12, xml_escape(x_label));
  out += fmt::format(
      "<text x=\"16\" y=\"{0}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 16 {0})\">{1}</text>\n",
      kTop + ph / 2, xml_escape(y_label));
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (auto [x, y] : series[i].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      pts += fmt::format("{:.2f},{:.2f} ", px(x), py(y));
    }
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                       color, pts);
    const double ly = kTop + 14 + 18.0 * static_cast<double>(i);
    out += fmt::format(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n"
        "<text x=\"{4}\" y=\"{5}\" font-family=\"sans-serif\" font-size=\"11\">{6}</text>\n",
        kW - kRight + 10, ly, kW - kRight + 30, color, kW - kRight + 36, ly + 4,
        xml_escape(series[i].label));
  }
  out += "</svg>\n";
  return out;
}

Series metrics_series(const std::filesystem::path& metrics_log, const std::string& field,
                      std::string label) {
  std::ifstream in(metrics_log);
  if (!in) throw IoError(fmt::format("cannot open metrics log '{}'", metrics_log.string()));
  Series s{std::move(label), {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step") || !j.contains(field)) {
      throw InputError(fmt::format("metrics log '{}' line {}: missing step or '{}'",
                                   metrics_log.string(), lineno, field));
    }
    s.points.emplace_back(j.at("step").get<double>(), j.at(field).get<double>());
  }
  return s;
}

ReportOutputs write_report(
    const std::vector<AggregateRow>& rows, const std::filesystem::path& out_dir,
    const std::vector<std::pair<std::string, std::filesystem::path>>& metrics_logs) {
  if (rows.empty()) throw InputError("report: nothing to report");
  ReportOutputs out{out_dir / "report.txt", out_dir / "report.json", {}};
  write_file_atomic(out.table, render_table(rows));
  write_file_atomic(out.json, report_to_json(rows).dump(2) + "\n");
  if (!metrics_logs.empty()) {
    std::vector<Series> reward, accuracy;
    for (const auto& [label, path] : metrics_logs) {
      reward.push_back(metrics_series(path, "mean_reward", label));
      accuracy.push_back(metrics_series(path, "r_acc_rate", label));
    }
    out.plots = {out_dir / "reward_curve.svg", out_dir / "accuracy_curve.svg"};
    write_file_atomic(out.plots[0], svg_line_plot("Mean reward", "step", "reward", reward));
    write_file_atomic(out.plots[1],
                      svg_line_plot("Training accuracy reward", "step", "accuracy rate", accuracy));
  }
  return out;
}

}  // namespace congrpo
