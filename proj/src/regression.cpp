#include "dra/regression.hpp"

#include <cmath>
#include <stdexcept>

namespace dra {

namespace {

constexpr double kRankTol = 1e-10;
constexpr double kScoreTol = 1e-8;
constexpr int kMaxNewton = 50;
constexpr int kMaxHalvings = 10;
constexpr double kCoefBound = 30.0;

// Checks the pivoted R diagonal against the rank tolerance and reports the
// first original column that fails.
void check_rank(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                const std::vector<std::string>& labels) {
    const Eigen::MatrixXd& r = qr.matrixR();
    const Eigen::Index p = qr.cols();
    const double top = std::abs(r(0, 0));
    if (!(top > 0.0)) {
        const int orig = qr.colsPermutation().indices()(0);
        throw RankDeficientError(labels.empty() ? "col" + std::to_string(orig)
                                                : labels[static_cast<std::size_t>(orig)]);
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        if (std::abs(r(j, j)) < kRankTol * top) {
            const int orig = qr.colsPermutation().indices()(j);
            throw RankDeficientError(labels.empty() ? "col" + std::to_string(orig)
                                                    : labels[static_cast<std::size_t>(orig)]);
        }
    }
}

// (X^T X)^{-1} from the pivoted QR factors.
Eigen::MatrixXd xtx_inverse(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    const Eigen::Index p = qr.cols();
    Eigen::MatrixXd rinv = qr.matrixR()
                               .topLeftCorner(p, p)
                               .triangularView<Eigen::Upper>()
                               .solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd inv = rinv * rinv.transpose();
    const auto perm = qr.colsPermutation();
    return perm * inv * perm.transpose();
}

Eigen::MatrixXd robust_from(const Eigen::MatrixXd& xtx_inv, const Eigen::MatrixXd& design,
                            const Eigen::VectorXd& residuals, SandwichKind kind) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    Eigen::MatrixXd scores = design.array().colwise() * residuals.array();
    Eigen::MatrixXd meat = scores.transpose() * scores;
    Eigen::MatrixXd cov = xtx_inv * meat * xtx_inv;
    if (kind == SandwichKind::hc1 && n > p)
        cov *= static_cast<double>(n) / static_cast<double>(n - p);
    return 0.5 * (cov + cov.transpose());
}

double bernoulli_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double e = eta(i);
        // y*eta - log(1+exp(eta)), computed without overflow
        const double log1pe = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y(i) * e - log1pe;
    }
    return ll;
}

}  // namespace

DesignMatrix make_design(Eigen::MatrixXd entries, std::vector<std::string> labels) {
    if (entries.rows() < entries.cols())
        throw std::invalid_argument("design must have n >= p");
    if (!entries.allFinite())
        throw std::invalid_argument("design contains non-finite entries");
    if (labels.empty()) {
        labels.reserve(static_cast<std::size_t>(entries.cols()));
        for (Eigen::Index j = 0; j < entries.cols(); ++j) labels.push_back("col" + std::to_string(j));
    } else if (static_cast<Eigen::Index>(labels.size()) != entries.cols()) {
        throw std::invalid_argument("column_labels size differs from design columns");
    }
    return DesignMatrix{std::move(entries), std::move(labels)};
}

FitResult ols_fit(const DesignMatrix& design, const Eigen::VectorXd& response, SandwichKind sandwich) {
    const Eigen::MatrixXd& x = design.entries;
    if (response.size() != x.rows()) throw std::invalid_argument("response length mismatch");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    check_rank(qr, design.column_labels);

    FitResult fit;
    fit.coefficients = qr.solve(response);
    fit.residuals = response - x * fit.coefficients;
    fit.converged = true;
    fit.iterations = 0;

    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    Eigen::MatrixXd inv = xtx_inverse(qr);
    const double dof = static_cast<double>(n - p);
    const double sigma2 = dof > 0.0 ? fit.residuals.squaredNorm() / dof : 0.0;
    fit.model_covariance = sigma2 * inv;
    fit.robust_covariance = robust_from(inv, x, fit.residuals, sandwich);
    return fit;
}

FitResult logistic_fit(const DesignMatrix& design, const Eigen::VectorXd& response,
                       SandwichKind sandwich) {
    const Eigen::MatrixXd& x = design.entries;
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (response.size() != n) throw std::invalid_argument("response length mismatch");
    for (Eigen::Index i = 0; i < n; ++i)
        if (response(i) != 0.0 && response(i) != 1.0)
            throw std::invalid_argument("logistic response must be 0/1");

    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
        check_rank(qr, design.column_labels);
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd prob(n), w(n);
    double ll = bernoulli_loglik(eta, response);
    bool converged = false;
    int iterations = 0;

    for (int iter = 0; iter < kMaxNewton; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            prob(i) = expit(eta(i));
            w(i) = prob(i) * (1.0 - prob(i));
        }
        Eigen::VectorXd score = x.transpose() * (response - prob);
        if (score.lpNorm<Eigen::Infinity>() <= kScoreTol) {
            converged = true;
            iterations = iter;
            break;
        }
        Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success) {
            iterations = iter;
            break;  // information matrix collapsed; diagnose below
        }
        Eigen::VectorXd delta = ldlt.solve(score);
        if (!delta.allFinite()) {
            iterations = iter;
            break;
        }

        double step = 1.0;
        Eigen::VectorXd beta_try, eta_try;
        double ll_try = 0.0;
        for (int h = 0; h <= kMaxHalvings; ++h) {
            beta_try = beta + step * delta;
            eta_try = x * beta_try;
            ll_try = bernoulli_loglik(eta_try, response);
            if (ll_try >= ll || h == kMaxHalvings) break;
            step *= 0.5;
        }
        beta = beta_try;
        eta = eta_try;
        ll = ll_try;
        iterations = iter + 1;

        if (beta.lpNorm<Eigen::Infinity>() > kCoefBound)
            throw SeparationError("coefficient magnitude exceeded " + std::to_string(kCoefBound));
    }

    for (Eigen::Index i = 0; i < n; ++i) prob(i) = expit(eta(i));
    if (!converged) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (prob(i) <= 1e-10 || prob(i) >= 1.0 - 1e-10)
                throw SeparationError("fitted probability saturated without convergence");
    }
    if (beta.lpNorm<Eigen::Infinity>() > kCoefBound)
        throw SeparationError("coefficient magnitude exceeded " + std::to_string(kCoefBound));

    FitResult fit;
    fit.coefficients = beta;
    fit.residuals = response - prob;
    fit.converged = converged;
    fit.iterations = iterations;

    for (Eigen::Index i = 0; i < n; ++i) w(i) = prob(i) * (1.0 - prob(i));
    Eigen::MatrixXd bread = x.transpose() * w.asDiagonal() * x;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
    if (!lu.isInvertible()) throw SeparationError("information matrix singular at solution");
    Eigen::MatrixXd bread_inv = lu.inverse();
    fit.model_covariance = 0.5 * (bread_inv + bread_inv.transpose());
    fit.robust_covariance = robust_from(bread_inv, x, fit.residuals, sandwich);
    return fit;
}

Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& score_contributions,
                                    const Eigen::MatrixXd& bread) {
    if (bread.rows() != bread.cols() || bread.rows() != score_contributions.cols())
        throw std::invalid_argument("sandwich dimensions do not conform");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
    if (!lu.isInvertible()) throw SingularBreadError();
    Eigen::MatrixXd inv = lu.inverse();
    Eigen::MatrixXd meat = score_contributions.transpose() * score_contributions;
    Eigen::MatrixXd cov = inv * meat * inv.transpose();
    return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd stacked_ee_covariance(const Eigen::MatrixXd& stage1_scores,
                                      const Eigen::MatrixXd& stage1_bread,
                                      const Eigen::MatrixXd& stage2_scores,
                                      const Eigen::MatrixXd& stage2_bread,
                                      const Eigen::MatrixXd& cross_derivative) {
    const Eigen::Index n = stage1_scores.rows();
    const Eigen::Index p1 = stage1_bread.rows();
    const Eigen::Index p2 = stage2_bread.rows();
    if (stage2_scores.rows() != n) throw std::invalid_argument("score row counts differ");
    if (stage1_scores.cols() != p1 || stage2_scores.cols() != p2 ||
        cross_derivative.rows() != p2 || cross_derivative.cols() != p1)
        throw std::invalid_argument("stacked dimensions do not conform");

    Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(p1 + p2, p1 + p2);
    bread.topLeftCorner(p1, p1) = stage1_bread;
    bread.bottomLeftCorner(p2, p1) = cross_derivative;
    bread.bottomRightCorner(p2, p2) = stage2_bread;

    Eigen::MatrixXd scores(n, p1 + p2);
    scores.leftCols(p1) = stage1_scores;
    scores.rightCols(p2) = stage2_scores;
    return sandwich_covariance(scores, bread);
}

}  // namespace dra
