#ifndef DRA_IO_HPP
#define DRA_IO_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dra/control_variable.hpp"
#include "dra/data_model.hpp"
#include "dra/estimators.hpp"
#include "dra/simulation.hpp"

namespace dra {

// Dataset CSV: header subject_id,dose_arm,dose_value,exposure,outcome then
// zero or more covariate_<name> columns; '.' decimal, UTF-8.  outcome_kind
// is inferred (all outcomes in {0,1} -> binary) unless overridden.
TrialDataset parse_dataset(const std::string& path,
                           std::optional<OutcomeKind> outcome_override = std::nullopt);
TrialDataset parse_dataset_text(const std::string& text, const std::string& name,
                                std::optional<OutcomeKind> outcome_override = std::nullopt);

// Canonical emission: subjects sorted by (arm, id), shortest round-trip
// number formatting. parse_dataset(write_dataset_csv(ds)) == ds.
std::string write_dataset_csv(const TrialDataset& dataset);

struct AnalysisConfig {
    DEModelSpec de_spec;
    WorkingModelSpec working;
    std::vector<EstimatorMethod> methods;
    double ci_level = 0.95;  // fixed
    std::optional<int> bootstrap;
    std::optional<OutcomeKind> outcome_override;
};

AnalysisConfig parse_analysis_config(const std::string& path);
AnalysisConfig parse_analysis_config_text(const std::string& text);

// A scenario file holds one JSON object or an array of them.
std::vector<ScenarioConfig> parse_scenarios(const std::string& path);
std::vector<ScenarioConfig> parse_scenarios_text(const std::string& text);

struct CliOptions {
    std::optional<std::uint64_t> seed;  // overrides scenario seeds / bootstrap seed
    int threads = 1;
    std::string out_dir = ".";
};

// Exit codes: 0 success, 2 data/validation/config problems, 3 numerical
// failures. Output files land in options.out_dir.
int cmd_analyze(const std::string& dataset_path, const std::string& config_path,
                const CliOptions& options);
int cmd_diagnose(const std::string& dataset_path, const std::string& config_path,
                 const CliOptions& options);
int cmd_simulate(const std::string& scenario_path, const CliOptions& options);
int cmd_true_means(const std::string& scenario_path, const CliOptions& options);

}  // namespace dra

#endif
