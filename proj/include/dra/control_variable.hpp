#ifndef DRA_CONTROL_VARIABLE_HPP
#define DRA_CONTROL_VARIABLE_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dra/data_model.hpp"
#include "dra/regression.hpp"

namespace dra {

// Separable dose-exposure model forms, all linear in the parameters.
enum class DEForm {
    anova,                        // per-arm means (arm indicator columns)
    proportional,                 // C = gamma * D + eta, no intercept
    proportional_with_covariates, // C = (g0 + gx' X) D + eta
    linear_in_dose_and_covariates // C = g0 + gd D + gx' X + eta
};

struct DEModelSpec {
    DEForm form = DEForm::proportional;
};

std::string de_form_name(DEForm form);

struct ControlVariableSet {
    Eigen::VectorXd gamma_hat;
    Eigen::VectorXd residuals;  // V_hat, aligned with dataset.subjects
    FitResult de_fit;
    DesignMatrix de_design;     // rows are dh/dgamma, reused by the stacked sandwich
    DEModelSpec spec;
};

// Builds the design implied by the spec (arm indicators, dose, dose-by-covariate
// products, or intercept + dose + covariates).
DesignMatrix de_design_matrix(const TrialDataset& dataset, const DEModelSpec& spec);

// Least-squares fit of the separable DE model; residuals are the control
// variables. Robust covariance of gamma_hat rides along in de_fit.
ControlVariableSet fit_de_model(const TrialDataset& dataset, const DEModelSpec& spec);

struct ArmBalance {
    int arm_index = 0;
    int n = 0;
    double mean = 0.0;
    double sd = 0.0;
};

struct PairBalance {
    int arm_j = 0;
    int arm_k = 0;
    double ks = 0.0;  // two-sample Kolmogorov-Smirnov statistic
    double t = 0.0;   // Welch mean-difference t statistic
};

// Descriptive only: no accept/reject verdict is attached.
struct BalanceReport {
    std::vector<ArmBalance> arms;
    std::vector<std::vector<double>> arm_residuals;  // sorted, per arm
    std::vector<double> ecdf_grid;                   // pooled sorted residuals
    std::vector<std::vector<double>> ecdf_values;    // per arm, on ecdf_grid
    std::vector<PairBalance> pairs;
};

BalanceReport balance_diagnostic(const ControlVariableSet& cv, const TrialDataset& dataset);

struct DensityTable {
    double bandwidth = 0.0;
    std::vector<double> grid;                     // 256 common points
    std::vector<std::vector<double>> densities;   // per arm
};

// Gaussian KDE on a 256-point common grid spanning all residuals plus three
// bandwidths. bandwidth <= 0 selects Silverman's rule per arm, then the
// maximum across arms so every curve is smoothed equally.
DensityTable export_density_data(const BalanceReport& report, double bandwidth = 0.0);

}  // namespace dra

#endif
