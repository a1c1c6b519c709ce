#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace danalab {

enum class Scenario {
    DanaDiscrete,
    DanaContinuous,
    DanaRobust,
    Discrn,
    NnnQuality,
    NnnTraj2d,
    DispatchFullday
};

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);
std::vector<Scenario> all_scenarios();

// Bad scenario name, unknown override key, wrong value type, unreadable file.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::DanaDiscrete;
    std::uint64_t seed = 1;
    nlohmann::json overrides = nlohmann::json::object();
    std::string output_dir;  // empty: nothing is written

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

// Default parameters of each scenario.
nlohmann::json preset_parameters(Scenario s);
// Preset merged with the overrides. Keys must exist in the preset and keep
// their JSON type (any number may replace any number; "auto" may replace alpha).
nlohmann::json resolve_parameters(const ExperimentConfig& cfg);

struct CompareRow {
    std::string method;
    long iterations = -1;  // to the scenario's tolerance, -1 if never reached
    double final_cost = 0.0;
    double runtime_s = 0.0;  // negative: not measured
};

struct CompareTable {
    std::string text;
    std::string csv;
};

// Rows sorted by final cost ascending (stable). Throws std::invalid_argument
// when empty.
CompareTable compare_table(std::vector<CompareRow> rows);

struct RunResult {
    ExperimentConfig config;
    nlohmann::json params;   // resolved
    std::string series_csv;
    nlohmann::json summary;  // never holds wall-clock values
    std::vector<CompareRow> table;
    bool converged = true;
};

// Runs the scenario in memory.
RunResult run_experiment(const ExperimentConfig& cfg);
// run_experiment, then config.json, series.csv and summary.json in
// cfg.output_dir when it is set.
RunResult run_preset(const ExperimentConfig& cfg);
void write_artifacts(const RunResult& r, const std::string& dir);

// Runs each job once on `width` worker threads; results keep the input order.
// The first exception thrown by a job is rethrown after all workers stop.
std::vector<RunResult> run_queue(const std::vector<ExperimentConfig>& jobs, int width,
                                 const std::function<RunResult(const ExperimentConfig&)>& fn =
                                     run_preset);

}  // namespace danalab
