#pragma once

#include "igsaft/pipeline.hpp"
#include "igsaft/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace igsaft {

inline constexpr int kReportSchemaVersion = 1;

/// Replay information attached to every CLI run.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  nlohmann::json input_hashes = nlohmann::json::object();
  std::string version;
  double wall_seconds = 0.0;
};

std::string software_version();

/// FNV-1a 64-bit hash of a file's bytes, as 16 hex digits.
std::string fnv1a_file(const std::string& path);

/// 1-based index lists, one per moment.
nlohmann::json spec_to_json(const MomentSpec& spec);
nlohmann::json screen_to_json(const ScreenResult& screen, const MomentSpec& candidates);
nlohmann::json test_to_json(const TestResult& test);
nlohmann::json manifest_to_json(const RunManifest& manifest);

/// Full fit report; `candidates` is the unscreened moment spec.
nlohmann::json fit_report_json(const FitReport& report, const MomentSpec& candidates, const FitConfig& config);

/// Relevance and overidentification results only.
nlohmann::json diagnose_report_json(const FitReport& report);

nlohmann::json mc_summary_json(const McSummary& summary, const SimConfig& sim, const FitConfig& fit);

/// Method,Bias,SD,SE,CP table; undefined entries print as NA.
std::string mc_table_csv(const McSummary& summary);

}  // namespace igsaft
