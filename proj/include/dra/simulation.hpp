#ifndef DRA_SIMULATION_HPP
#define DRA_SIMULATION_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dra/data_model.hpp"
#include "dra/estimators.hpp"

namespace dra {

// Fixed doses {1,2,3} with 1:1:1 block allocation. The data-generating
// models are
//   C = D + V,                       V ~ N(0,1)
//   Y = C + b1 exp(C + b2 V) + 0.5 V + U,   U ~ N(0,1)      (normal)
//   Y ~ Bernoulli(p),  p = 1 / (1 + exp(0.5 - C - b1 exp(C + b2 V) - 0.5 V + U))
struct ScenarioConfig {
    int n = 60;
    double b1 = 0.0;
    double b2 = 0.0;
    OutcomeKind outcome_kind = OutcomeKind::continuous;
    WorkingFamily working_family = WorkingFamily::linear;
    WorkingStructure structure = WorkingStructure::ancova2;
    int runs = 2000;
    int truth_sample = 100000;
    std::uint64_t seed = 0;
    bool include_cv = true;      // off makes the adjusted estimator collapse to the unadjusted
    bool absolute_bias = false;  // report 10*(mean - mu) instead of 10*(mean - mu)/|mu|
};

// Throws ConfigError on invalid combinations.
void validate_scenario(const ScenarioConfig& config);

std::vector<DoseLevel> scenario_dose_levels();

struct GeneratedTrial {
    TrialDataset dataset;
    Eigen::VectorXd v_true;  // hidden truth, diagnostics only
    Eigen::VectorXd u_true;
};

// Deterministic in (config.seed, run_index): doses are assigned by cycling
// 1,2,3 over a seeded permutation of subjects, then per-subject noise is
// drawn from a run-specific stream.
GeneratedTrial generate_dataset(const ScenarioConfig& config, int run_index);

struct TrueMeans {
    std::vector<double> mu;     // per arm
    std::vector<double> mc_se;  // Monte Carlo standard error of each mean
};

// Marginal mean response at each dose from truth_sample independent draws
// per dose (no common random numbers across arms).
TrueMeans true_means(const ScenarioConfig& config);

struct SimulationArmReport {
    double true_mu = 0.0;
    double rel_bias_x10_unadjusted = 0.0;
    double rel_bias_x10_adjusted = 0.0;
    double var_ratio = 0.0;  // adjusted / unadjusted
    double mc_se_bias_unadjusted = 0.0;  // same x10 scale as the bias columns
    double mc_se_bias_adjusted = 0.0;
    double sd_unadjusted = 0.0;  // empirical SD of the estimates across runs
    double sd_adjusted = 0.0;
    double rms_sandwich_se = 0.0;  // sqrt(mean of squared stacked-EE SEs)
};

struct SimulationReport {
    ScenarioConfig config;
    std::vector<SimulationArmReport> arms;
    int runs_completed = 0;
    int runs_failed = 0;   // separation / convergence failures, excluded
    int se_failures = 0;   // runs whose SE came back non-finite
};

// Runs the full scenario. Per-run streams depend only on (seed, run_index),
// and aggregation walks runs in index order, so any thread count produces
// bit-identical reports. Throws TooManyFailuresError when more than 5% of
// runs fail.
SimulationReport run_monte_carlo(const ScenarioConfig& config, int threads = 1);

// CSV rows in the layout of the paper-style summary: n, b1, b2, three
// unadjusted bias columns, three adjusted bias columns, three variance
// ratios. Header included. Throws std::invalid_argument on an empty list.
std::string report_table(const std::vector<SimulationReport>& reports);

// Full per-arm detail (truth, MC errors, SD, sandwich SE, failure counts).
std::string report_details(const std::vector<SimulationReport>& reports);

}  // namespace dra

#endif
