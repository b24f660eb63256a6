#ifndef DRA_REGRESSION_HPP
#define DRA_REGRESSION_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dra/errors.hpp"

namespace dra {

struct DesignMatrix {
    Eigen::MatrixXd entries;  // n x p, n >= p, finite
    std::vector<std::string> column_labels;

    Eigen::Index rows() const { return entries.rows(); }
    Eigen::Index cols() const { return entries.cols(); }
};

// Throws std::invalid_argument on shape/finiteness problems.
DesignMatrix make_design(Eigen::MatrixXd entries, std::vector<std::string> labels);

enum class SandwichKind { hc0, hc1 };

struct FitResult {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;         // y - fitted (response scale)
    Eigen::MatrixXd model_covariance;  // classical, model-based
    Eigen::MatrixXd robust_covariance; // sandwich
    bool converged = true;
    int iterations = 0;
};

// Least squares via column-pivoted Householder QR.  Rank tolerance is
// 1e-10 times the largest |R| diagonal; a pivot below it raises
// RankDeficientError naming the offending column.
FitResult ols_fit(const DesignMatrix& design, const Eigen::VectorXd& response,
                  SandwichKind sandwich = SandwichKind::hc0);

// Bernoulli maximum likelihood with logit link, Newton-Raphson with
// step-halving (at most 10 halvings per iteration).  converged means
// max |score| <= 1e-8 within 50 iterations.  SeparationError when any
// coefficient passes 30 in magnitude, or on convergence failure with a
// fitted probability within 1e-10 of 0 or 1.
FitResult logistic_fit(const DesignMatrix& design, const Eigen::VectorXd& response,
                       SandwichKind sandwich = SandwichKind::hc0);

// bread^{-1} (sum_i s_i s_i^T) bread^{-T}, symmetrized.  scores is n x p.
Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& score_contributions,
                                    const Eigen::MatrixXd& bread);

// Joint sandwich for a two-stage estimating system
//   sum_i psi1(o_i; t1) = 0,  sum_i psi2(o_i; t1, t2) = 0.
// Breads are negative Jacobians of the summed equations w.r.t. their own
// parameters; cross_derivative is the negative Jacobian of the stage-2
// equations w.r.t. the stage-1 parameters (p2 x p1).  Returns the
// (p1+p2) x (p1+p2) covariance of (t1_hat, t2_hat).
Eigen::MatrixXd stacked_ee_covariance(const Eigen::MatrixXd& stage1_scores,
                                      const Eigen::MatrixXd& stage1_bread,
                                      const Eigen::MatrixXd& stage2_scores,
                                      const Eigen::MatrixXd& stage2_bread,
                                      const Eigen::MatrixXd& cross_derivative);

inline double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace dra

#endif
