#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stabcheck/error.hpp"
#include "stabcheck/sim.hpp"

namespace stabcheck {

inline constexpr const char* kToolName = "stabcheck";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum class ReportFormat { Json, Csv, Text };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "text") return ReportFormat::Text;
  throw Error(ErrorKind::InvalidArgument, "unknown format '" + std::string(s) + "' (json, csv, text)");
}

/// Exit codes. Verdict-bearing outcomes use 0/1/2; everything else is an error.
namespace exit_code {
inline constexpr int kHolds = 0;
inline constexpr int kViolated = 1;
inline constexpr int kInconclusive = 2;
inline constexpr int kUsage = 64;
inline constexpr int kModel = 65;
inline constexpr int kEngine = 70;
inline constexpr int kCantCreate = 73;
}  // namespace exit_code

/// Maps an engine outcome name to its exit code; unknown names are engine
/// errors.
inline int exit_code_for(std::string_view verdict) {
  static const std::pair<std::string_view, int> table[] = {
      {"PropertyHolds", exit_code::kHolds},     {"AllHold", exit_code::kHolds},
      {"NotFalsified", exit_code::kHolds},      {"Simulated", exit_code::kHolds},
      {"CertificateFound", exit_code::kHolds},  {"TablePass", exit_code::kHolds},
      {"CounterexamplePath", exit_code::kViolated}, {"ViolatedAtStep", exit_code::kViolated},
      {"Falsified", exit_code::kViolated},      {"NoCertificate", exit_code::kViolated},
      {"TableFail", exit_code::kViolated},      {"OverflowReached", exit_code::kInconclusive},
      {"OverflowAtStep", exit_code::kInconclusive}, {"Inconclusive", exit_code::kInconclusive},
      {"Marginal", exit_code::kInconclusive},
  };
  for (const auto& [name, code] : table)
    if (name == verdict) return code;
  return exit_code::kEngine;
}

struct Timing {
  double parse_ms = 0.0;
  double build_ms = 0.0;
  double check_ms = 0.0;
};

struct Report {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::string verdict;
  nlohmann::json diagnostics = nlohmann::json::object();
  std::optional<Trace> witness;
  Timing timing;
  std::string text;  // extra human-readable body for the text format

  int exit_code() const { return exit_code_for(verdict); }
};

inline nlohmann::json to_json(const Report& r) {
  nlohmann::json j{{"schema_version", kReportSchemaVersion},
                   {"tool", kToolName},
                   {"version", kToolVersion},
                   {"command", r.command},
                   {"config", r.config},
                   {"verdict", r.verdict},
                   {"exit_code", r.exit_code()},
                   {"diagnostics", r.diagnostics},
                   {"timing", {{"parse_ms", r.timing.parse_ms}, {"build_ms", r.timing.build_ms}, {"check_ms", r.timing.check_ms}}}};
  j["witness"] = r.witness ? trace_to_json(*r.witness) : nlohmann::json(nullptr);
  return j;
}

/// Serializes a report. JSON keys are sorted; CSV is the witness trace in the
/// simulator's schema (empty when there is none); text starts with the
/// verdict line.
inline std::string emit_report(const Report& r, ReportFormat f) {
  switch (f) {
    case ReportFormat::Json: return to_json(r).dump(2) + "\n";
    case ReportFormat::Csv: return r.witness ? trace_to_csv(*r.witness) : std::string();
    case ReportFormat::Text: {
      std::string s = "VERDICT: " + r.verdict + "\n";
      s += "command: " + r.command + "\n";
      for (const auto& [k, v] : r.diagnostics.items()) {
        if (v.is_array() && v.size() > 8) {
          s += k + ": [" + std::to_string(v.size()) + " entries]\n";
          continue;
        }
        s += k + ": " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
      }
      if (!r.text.empty()) s += "\n" + r.text;
      if (r.witness) s += "\nwitness:\n" + trace_to_csv(*r.witness);
      return s;
    }
  }
  return {};
}

/// One-line structured diagnostic for the error stream.
inline std::string render_error(const Error& e) {
  nlohmann::json j{{"kind", to_string(e.kind())}, {"message", e.message()}};
  if (e.line() > 0) j["line"] = e.line();
  if (e.column() > 0) j["column"] = e.column();
  return nlohmann::json{{"error", j}}.dump() + "\n";
}

}  // namespace stabcheck
