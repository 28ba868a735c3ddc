#pragma once

// Check pipeline for lowered programs and the JSON / CSV report formats.

#include "monoflow/dsl.hpp"
#include "monoflow/scenarios.hpp"
#include "monoflow/verify.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace monoflow {

/// Command-line overrides applied on top of a check's own options.
struct RunOptions {
    std::optional<double> tol;
    std::optional<int> grid;
    std::optional<std::pair<double, double>> box;
    std::optional<double> tmin, tmax;
    std::optional<int> tsteps;
    int threads = 1;
    unsigned long long seed = 0;
    int spacePoints = 128;
    int pointTimes = 16;
};

struct CheckReport {
    std::string name;
    std::string programHash;
    std::optional<Certificate> certificate;
    std::optional<std::string> rejection;  // "rule: condition (at path)"
    std::optional<std::string> rejectedRule;
    PointCheckSummary points;
    std::optional<FunctionalTrace> trace;
    std::string csvPath;
    Outcome verdict = Outcome::Fail;
};

CheckReport runCheck(const dsl::CheckJob& job, const std::string& programHash, const RunOptions& opts);

/// Header t,F,delta,truncation_estimate; 17 significant digits; first delta empty.
std::string traceCsv(const FunctionalTrace& tr);

nlohmann::ordered_json matrixJson(const SymMatrix& m);
nlohmann::ordered_json certificateJson(const Certificate& c);
nlohmann::ordered_json checkJson(const CheckReport& r);
/// {"reports": [...], "verdict": ...}
nlohmann::ordered_json programJson(const std::vector<CheckReport>& reports);
nlohmann::ordered_json scenarioJson(const ScenarioResult& r, const std::string& summary);

/// Worst outcome: reject over fail over pass.
Outcome combine(const std::vector<Outcome>& outcomes);

/// CSV path for check i of n: the path itself when n == 1, otherwise
/// "stem.i.ext".
std::string indexedPath(const std::string& path, std::size_t i, std::size_t n);

}  // namespace monoflow
