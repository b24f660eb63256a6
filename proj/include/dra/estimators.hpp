#ifndef DRA_ESTIMATORS_HPP
#define DRA_ESTIMATORS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dra/control_variable.hpp"
#include "dra/data_model.hpp"
#include "dra/regression.hpp"

namespace dra {

enum class WorkingFamily { linear, logistic };
enum class WorkingStructure { ancova1, ancova2 };

// ancova1: one model with arm indicators and shared control-variable /
// covariate coefficients.  ancova2: a separate model per arm.
struct WorkingModelSpec {
    WorkingFamily family = WorkingFamily::linear;
    WorkingStructure structure = WorkingStructure::ancova2;
    bool include_covariates = false;
    bool include_cv = true;
};

enum class EstimatorMethod {
    unadjusted,
    ancova1,
    ancova2,
    residual_inclusion,
    composite_de_er,
};

std::string estimator_method_name(EstimatorMethod m);

struct ArmEstimate {
    int arm_index = 0;
    double mu_hat = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct ContrastEstimate {
    int arm_j = 0;
    int arm_k = 0;
    double delta = 0.0;  // mu_j - mu_k
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct DoseEstimates {
    EstimatorMethod method = EstimatorMethod::unadjusted;
    std::vector<ArmEstimate> arms;
    std::vector<ContrastEstimate> contrasts;  // all ordered pairs j != k
    Eigen::MatrixXd mu_covariance;            // K x K joint covariance
};

// Diagnostics for the adjusted estimator: the three-term assembly
// ybar_k + mu_k^a - mu_k and the plug-in average it degenerates to under a
// canonical link.  Exposed so tests can check the identity directly.
struct AncovaDetail {
    std::vector<double> ybar;
    std::vector<double> mu_three_term;
    std::vector<double> mu_plug_in;
};

// Arm means with sample-SD standard errors. DegenerateArmError when an arm
// has fewer than two subjects.
DoseEstimates unadjusted_means(const TrialDataset& dataset);

// Control-variable adjusted means.  Point estimates use the plug-in
// (g-computation) form; the three-term form is computed alongside and the
// two must agree to 1e-8, since both structures carry per-arm intercepts.
// Standard errors come from the stacked estimating-equation sandwich over
// (gamma, beta, mu), so first-stage uncertainty is propagated.
DoseEstimates ancova_adjusted(const TrialDataset& dataset, const ControlVariableSet& cv,
                              const WorkingModelSpec& spec, AncovaDetail* detail = nullptr);

struct ResidualInclusionFit {
    double beta_exposure = 0.0;
    double se = 0.0;
    FitResult fit;  // outcome on (1, C, V_hat), family-appropriate
};

// Model-sensitive baseline: regression of the outcome on exposure plus the
// control variable. Robust (single-stage) standard errors.
ResidualInclusionFit residual_inclusion(const TrialDataset& dataset, const ControlVariableSet& cv);

struct LinearDRFit {
    double intercept = 0.0;
    double beta_d = 0.0;
    double beta_v = 0.0;
    double se_d = 0.0;
    double se_v = 0.0;
    Eigen::MatrixXd robust_covariance;  // 3x3, order (intercept, dose, cv)
};

// OLS of the outcome on (1, D, V_hat) with robust standard errors.
LinearDRFit linear_dr_fit(const TrialDataset& dataset, const ControlVariableSet& cv);

// Composite dose-exposure-response slope: fits the exposure-response model
// Y ~ (1, C, V_hat), then reports beta_d* = beta_c * gamma and
// beta_v* = beta_c + beta_v, with delta-method SEs from the stacked
// covariance of (gamma, beta). Requires a proportional DE fit.
LinearDRFit composite_de_er(const TrialDataset& dataset, const ControlVariableSet& cv);

// Difference mu_j - mu_k with SE from the joint covariance.
ContrastEstimate contrast(const DoseEstimates& estimates, int arm_j, int arm_k);

// Subject-level nonparametric bootstrap (resampling within arm) of the
// adjusted estimator; returns per-arm standard deviations of the estimates.
std::vector<double> bootstrap_se_ancova(const TrialDataset& dataset, const DEModelSpec& de_spec,
                                        const WorkingModelSpec& working, int draws,
                                        std::uint64_t seed);

}  // namespace dra

#endif
