#pragma once

#include <scraps/evaluation.hpp>

#include <json.hpp>

#include <cstdio>
#include <sstream>
#include <string>

namespace scraps {

enum class ReportFormat { kJson, kCsv, kTsvPlot };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "tsv-plot") return ReportFormat::kTsvPlot;
  throw ConfigError("unknown report format '" + s + "' (expected json, csv or tsv-plot)");
}

inline nlohmann::ordered_json record_to_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["amount"] = r.amount;
  auto put = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  put("drop_pct", r.drop_pct);
  put("drop_ci", r.drop_ci);
  put("lift_pct", r.lift_pct);
  put("lift_ci", r.lift_ci);
  put("auc", r.auc);
  put("auc_ci", r.auc_ci);
  put("eer", r.eer);
  j["n"] = r.n;
  return j;
}

inline EvalRecord record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.method = j.at("method").get<std::string>();
  r.amount = j.at("amount").get<double>();
  auto get = [&](const char* key, std::optional<double>& v) {
    if (j.contains(key) && !j.at(key).is_null()) v = j.at(key).get<double>();
  };
  get("drop_pct", r.drop_pct);
  get("drop_ci", r.drop_ci);
  get("lift_pct", r.lift_pct);
  get("lift_ci", r.lift_ci);
  get("auc", r.auc);
  get("auc_ci", r.auc_ci);
  get("eer", r.eer);
  r.n = j.at("n").get<std::size_t>();
  return r;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["metadata"] = nlohmann::ordered_json::parse(report.metadata.dump());  // keys sorted
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) j["records"].push_back(record_to_json(r));
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport report;
  try {
    if (j.contains("metadata")) report.metadata = j.at("metadata");
    for (const auto& r : j.at("records")) report.records.push_back(record_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
  return report;
}

namespace detail {

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); }

}  // namespace detail

inline std::string format_report(const EvalReport& report, ReportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::kJson:
      os << report_to_json(report).dump(2) << '\n';
      break;
    case ReportFormat::kCsv:
      os << "method,amount,drop_pct,drop_ci,lift_pct,lift_ci,auc,eer,n\n";
      for (const auto& r : report.records)
        os << r.method << ',' << detail::fmt_num(r.amount) << ',' << detail::fmt_opt(r.drop_pct) << ','
           << detail::fmt_opt(r.drop_ci) << ',' << detail::fmt_opt(r.lift_pct) << ',' << detail::fmt_opt(r.lift_ci)
           << ',' << detail::fmt_opt(r.auc) << ',' << detail::fmt_opt(r.eer) << ',' << r.n << '\n';
      break;
    case ReportFormat::kTsvPlot:
      os << "amount\tseries\tvalue\tci\n";
      for (const auto& r : report.records) {
        auto row = [&](const char* metric, const std::optional<double>& v, const std::optional<double>& ci) {
          if (v)
            os << detail::fmt_num(r.amount) << '\t' << r.method << '/' << metric << '\t' << detail::fmt_num(*v) << '\t'
               << detail::fmt_opt(ci) << '\n';
        };
        row("drop_pct", r.drop_pct, r.drop_ci);
        row("lift_pct", r.lift_pct, r.lift_ci);
        row("auc", r.auc, r.auc_ci);
        row("eer", r.eer, std::nullopt);
      }
      break;
  }
  return os.str();
}

inline void emit_report(const EvalReport& report, ReportFormat format, const std::string& path) {
  detail::spit(path, format_report(report, format));
}

inline void emit_report(const EvalReport& report, const std::string& format, const std::string& path) {
  emit_report(report, parse_report_format(format), path);
}

}  // namespace scraps
