#include "dra/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "dra/rng.hpp"

namespace dra {

namespace {

double ci_z() {
    static const double z = inverse_normal_cdf(0.975);
    return z;
}

ArmEstimate make_arm_estimate(int arm, double mu, double var) {
    const double se = std::isnan(var) ? var : (var > 0.0 ? std::sqrt(var) : 0.0);
    return {arm, mu, se, mu - ci_z() * se, mu + ci_z() * se};
}

void fill_contrasts(DoseEstimates& est) {
    est.contrasts.clear();
    const int k = static_cast<int>(est.arms.size());
    for (int j = 0; j < k; ++j)
        for (int l = 0; l < k; ++l)
            if (j != l) est.contrasts.push_back(contrast(est, j, l));
}

struct WorkingDesign {
    Eigen::MatrixXd own;                  // n x p, subject's own arm encoding
    std::vector<Eigen::MatrixXd> at_arm;  // n x p with the arm forced to k
    std::vector<std::string> labels;
    int v_col = -1;
};

WorkingDesign build_working_design(const TrialDataset& dataset, const ControlVariableSet& cv,
                                   const WorkingModelSpec& spec) {
    const int n = dataset.n_subjects();
    const int k = dataset.n_arms();
    const int ncov = spec.include_covariates ? dataset.n_covariates() : 0;
    const bool dummies = spec.structure == WorkingStructure::ancova1;

    WorkingDesign wd;
    const int p = 1 + (dummies ? k - 1 : 0) + (spec.include_cv ? 1 : 0) + ncov;
    wd.own = Eigen::MatrixXd::Zero(n, p);
    wd.labels.push_back("intercept");
    if (dummies)
        for (int a = 1; a < k; ++a) wd.labels.push_back("arm" + std::to_string(a));
    if (spec.include_cv) {
        wd.v_col = 1 + (dummies ? k - 1 : 0);
        wd.labels.push_back("cv");
    }
    for (int j = 0; j < ncov; ++j)
        wd.labels.push_back(j < static_cast<int>(dataset.covariate_names.size())
                                ? dataset.covariate_names[j]
                                : "x" + std::to_string(j));

    for (int i = 0; i < n; ++i) {
        int c = 0;
        wd.own(i, c++) = 1.0;
        if (dummies)
            for (int a = 1; a < k; ++a)
                wd.own(i, c++) = dataset.subjects[i].arm_index == a ? 1.0 : 0.0;
        if (spec.include_cv) wd.own(i, c++) = cv.residuals(i);
        for (int j = 0; j < ncov; ++j) wd.own(i, c++) = dataset.subjects[i].covariates[j];
    }

    wd.at_arm.reserve(k);
    for (int a = 0; a < k; ++a) {
        Eigen::MatrixXd m = wd.own;
        if (dummies)
            for (int b = 1; b < k; ++b) m.col(b).setConstant(b == a ? 1.0 : 0.0);
        wd.at_arm.push_back(std::move(m));
    }
    return wd;
}

FitResult fit_family(const DesignMatrix& design, const Eigen::VectorXd& y, WorkingFamily family) {
    if (family == WorkingFamily::linear) return ols_fit(design, y);
    FitResult fit = logistic_fit(design, y);
    if (!fit.converged) throw std::runtime_error("working model fit did not converge");
    return fit;
}

inline double family_mean(double eta, WorkingFamily family) {
    return family == WorkingFamily::linear ? eta : expit(eta);
}

inline double family_mean_prime(double eta, WorkingFamily family) {
    if (family == WorkingFamily::linear) return 1.0;
    const double p = expit(eta);
    return p * (1.0 - p);
}

}  // namespace

std::string estimator_method_name(EstimatorMethod m) {
    switch (m) {
        case EstimatorMethod::unadjusted: return "unadjusted";
        case EstimatorMethod::ancova1: return "ancova1";
        case EstimatorMethod::ancova2: return "ancova2";
        case EstimatorMethod::residual_inclusion: return "residual_inclusion";
        case EstimatorMethod::composite_de_er: return "composite_de_er";
    }
    return "?";
}

DoseEstimates unadjusted_means(const TrialDataset& dataset) {
    const auto partition = arm_partition(dataset);
    DoseEstimates est;
    est.method = EstimatorMethod::unadjusted;
    const int k = dataset.n_arms();
    est.mu_covariance = Eigen::MatrixXd::Zero(k, k);
    for (int a = 0; a < k; ++a) {
        const auto& idx = partition[a];
        const int nk = static_cast<int>(idx.size());
        if (nk < 2) throw DegenerateArmError(a, "needs at least 2 subjects for a standard error");
        double mean = 0.0;
        for (int i : idx) mean += dataset.subjects[i].outcome;
        mean /= nk;
        double ss = 0.0;
        for (int i : idx) {
            const double d = dataset.subjects[i].outcome - mean;
            ss += d * d;
        }
        const double var = ss / (nk - 1) / nk;  // (sample SD / sqrt(n_k))^2
        est.mu_covariance(a, a) = var;
        est.arms.push_back(make_arm_estimate(a, mean, var));
    }
    fill_contrasts(est);
    return est;
}

DoseEstimates ancova_adjusted(const TrialDataset& dataset, const ControlVariableSet& cv,
                              const WorkingModelSpec& spec, AncovaDetail* detail) {
    const int n = dataset.n_subjects();
    const int k = dataset.n_arms();
    if (cv.residuals.size() != n) throw std::invalid_argument("control variables not aligned");
    if (spec.family == WorkingFamily::logistic && dataset.outcome_kind != OutcomeKind::binary)
        throw std::invalid_argument("logistic working model requires a binary outcome");

    const auto partition = arm_partition(dataset);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = dataset.subjects[i].outcome;

    const WorkingDesign wd = build_working_design(dataset, cv, spec);
    const int p = static_cast<int>(wd.own.cols());
    const bool per_arm = spec.structure == WorkingStructure::ancova2;

    std::vector<FitResult> fits;
    if (per_arm) {
        for (int a = 0; a < k; ++a) {
            const auto& idx = partition[a];
            const int nk = static_cast<int>(idx.size());
            if (nk < p + 2)
                throw DegenerateArmError(
                    a, "n_k = " + std::to_string(nk) + " < p + 2 = " + std::to_string(p + 2));
            Eigen::MatrixXd xa(nk, p);
            Eigen::VectorXd ya(nk);
            for (int r = 0; r < nk; ++r) {
                xa.row(r) = wd.own.row(idx[r]);
                ya(r) = y(idx[r]);
            }
            fits.push_back(fit_family(make_design(std::move(xa), wd.labels), ya, spec.family));
        }
    } else {
        fits.push_back(fit_family(make_design(wd.own, wd.labels), y, spec.family));
    }

    auto beta_for_arm = [&](int a) -> const Eigen::VectorXd& {
        return fits[per_arm ? a : 0].coefficients;
    };

    // Every subject predicted at every arm, with link derivatives.
    std::vector<Eigen::VectorXd> ghat(k), gprime(k);
    for (int a = 0; a < k; ++a) {
        Eigen::VectorXd eta = wd.at_arm[a] * beta_for_arm(a);
        Eigen::VectorXd g(n), gp(n);
        for (int i = 0; i < n; ++i) {
            g(i) = family_mean(eta(i), spec.family);
            gp(i) = family_mean_prime(eta(i), spec.family);
        }
        ghat[a] = std::move(g);
        gprime[a] = std::move(gp);
    }

    Eigen::VectorXd resid(n), gprime_own(n);
    for (int i = 0; i < n; ++i) {
        const int a = dataset.subjects[i].arm_index;
        resid(i) = y(i) - ghat[a](i);
        gprime_own(i) = gprime[a](i);
    }

    std::vector<double> ybar(k), mu_own(k), mu_all(k);
    Eigen::VectorXd mu(k);
    for (int a = 0; a < k; ++a) {
        const auto& idx = partition[a];
        double yb = 0.0, go = 0.0;
        for (int i : idx) {
            yb += y(i);
            go += ghat[a](i);
        }
        yb /= static_cast<double>(idx.size());
        go /= static_cast<double>(idx.size());
        const double ga = ghat[a].mean();
        ybar[a] = yb;
        mu_own[a] = go;
        mu_all[a] = ga;
        // Canonical link with per-arm intercepts: the three-term estimator
        // collapses to the plug-in average. Asserted, then the plug-in is used.
        const double three_term = yb + ga - go;
        if (std::abs(three_term - ga) > 1e-8)
            throw std::runtime_error("canonical-link identity violated for arm " +
                                     std::to_string(a));
        mu(a) = ga;
    }
    if (detail) {
        detail->ybar = ybar;
        detail->mu_plug_in = mu_all;
        detail->mu_three_term.resize(k);
        for (int a = 0; a < k; ++a)
            detail->mu_three_term[a] = ybar[a] + mu_all[a] - mu_own[a];
    }

    // Stacked estimating-equation sandwich over (gamma, beta, mu).
    const int p_gamma = static_cast<int>(cv.de_design.cols());
    const int n_blocks = per_arm ? k : 1;
    const int p2 = n_blocks * p + k;
    const Eigen::MatrixXd& w = cv.de_design.entries;

    Eigen::MatrixXd s1 = w.array().colwise() * cv.residuals.array();
    Eigen::MatrixXd a11 = w.transpose() * w;

    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(n, p2);
    Eigen::MatrixXd a2 = Eigen::MatrixXd::Zero(p2, p2);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(p2, p_gamma);

    std::vector<double> nk(k);
    for (int a = 0; a < k; ++a) nk[a] = static_cast<double>(partition[a].size());

    for (int i = 0; i < n; ++i) {
        const int ai = dataset.subjects[i].arm_index;
        const int off = (per_arm ? ai : 0) * p;
        const Eigen::RowVectorXd zi = wd.own.row(i);

        s2.block(i, off, 1, p) = zi * resid(i);
        a2.block(off, off, p, p) += gprime_own(i) * zi.transpose() * zi;

        if (wd.v_col >= 0) {
            const double beta_v = beta_for_arm(ai)(wd.v_col);
            Eigen::VectorXd col = -zi.transpose() * (gprime_own(i) * beta_v);
            col(wd.v_col) += resid(i);
            cross.block(off, 0, p, p_gamma) += col * w.row(i);
        }

        for (int a = 0; a < k; ++a) {
            const double c_ik = (ai == a) ? static_cast<double>(n) / nk[a] : 0.0;
            const double g = ghat[a](i);
            const int mu_row = n_blocks * p + a;
            s2(i, mu_row) = c_ik * (y(i) - g) + g - mu(a);

            const double weight = 1.0 - c_ik;
            a2.block(mu_row, (per_arm ? a : 0) * p, 1, p) -=
                weight * gprime[a](i) * wd.at_arm[a].row(i);
            if (wd.v_col >= 0) {
                const double beta_v = beta_for_arm(a)(wd.v_col);
                cross.block(mu_row, 0, 1, p_gamma) += weight * gprime[a](i) * beta_v * w.row(i);
            }
        }
    }
    for (int a = 0; a < k; ++a) a2(n_blocks * p + a, n_blocks * p + a) = static_cast<double>(n);

    // A singular stacked bread (e.g. a fully saturated logistic arm) loses the
    // standard errors but not the point estimates.
    Eigen::MatrixXd mu_cov;
    try {
        Eigen::MatrixXd full = stacked_ee_covariance(s1, a11, s2, a2, cross);
        mu_cov = full.bottomRightCorner(k, k);
        if (!mu_cov.allFinite())
            mu_cov.setConstant(k, k, std::numeric_limits<double>::quiet_NaN());
    } catch (const SingularBreadError&) {
        mu_cov.setConstant(k, k, std::numeric_limits<double>::quiet_NaN());
    }

    DoseEstimates est;
    est.method = per_arm ? EstimatorMethod::ancova2 : EstimatorMethod::ancova1;
    est.mu_covariance = mu_cov;
    for (int a = 0; a < k; ++a) est.arms.push_back(make_arm_estimate(a, mu(a), mu_cov(a, a)));
    fill_contrasts(est);
    return est;
}

ResidualInclusionFit residual_inclusion(const TrialDataset& dataset, const ControlVariableSet& cv) {
    const int n = dataset.n_subjects();
    if (cv.residuals.size() != n) throw std::invalid_argument("control variables not aligned");
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = dataset.subjects[i].exposure;
        x(i, 2) = cv.residuals(i);
        y(i) = dataset.subjects[i].outcome;
    }
    DesignMatrix design = make_design(std::move(x), {"intercept", "exposure", "cv"});
    FitResult fit = dataset.outcome_kind == OutcomeKind::binary ? logistic_fit(design, y)
                                                                : ols_fit(design, y);
    ResidualInclusionFit out;
    out.beta_exposure = fit.coefficients(1);
    out.se = std::sqrt(fit.robust_covariance(1, 1));
    out.fit = std::move(fit);
    return out;
}

LinearDRFit linear_dr_fit(const TrialDataset& dataset, const ControlVariableSet& cv) {
    const int n = dataset.n_subjects();
    if (cv.residuals.size() != n) throw std::invalid_argument("control variables not aligned");
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = dataset.dose_levels[dataset.subjects[i].arm_index].dose_value;
        x(i, 2) = cv.residuals(i);
        y(i) = dataset.subjects[i].outcome;
    }
    FitResult fit = ols_fit(make_design(std::move(x), {"intercept", "dose", "cv"}), y);
    LinearDRFit out;
    out.intercept = fit.coefficients(0);
    out.beta_d = fit.coefficients(1);
    out.beta_v = fit.coefficients(2);
    out.se_d = std::sqrt(fit.robust_covariance(1, 1));
    out.se_v = std::sqrt(fit.robust_covariance(2, 2));
    out.robust_covariance = fit.robust_covariance;
    return out;
}

LinearDRFit composite_de_er(const TrialDataset& dataset, const ControlVariableSet& cv) {
    if (cv.spec.form != DEForm::proportional)
        throw std::invalid_argument("composite DE-ER requires a proportional DE fit");
    const int n = dataset.n_subjects();
    const double gamma = cv.gamma_hat(0);

    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = dataset.subjects[i].exposure;
        x(i, 2) = cv.residuals(i);
        y(i) = dataset.subjects[i].outcome;
    }
    FitResult er = ols_fit(make_design(x, {"intercept", "exposure", "cv"}), y);
    const double beta_c = er.coefficients(1);
    const double beta_v = er.coefficients(2);

    // Joint covariance of (gamma, intercept, beta_c, beta_v); the ER design
    // depends on gamma only through the V_hat column.
    const Eigen::MatrixXd& w = cv.de_design.entries;  // n x 1, the dose column
    Eigen::MatrixXd s1 = w.array().colwise() * cv.residuals.array();
    Eigen::MatrixXd a11 = w.transpose() * w;
    Eigen::MatrixXd s2 = x.array().colwise() * er.residuals.array();
    Eigen::MatrixXd a2 = x.transpose() * x;
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(3, 1);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd col = -x.row(i).transpose() * beta_v;
        col(2) += er.residuals(i);
        cross += col * w.row(i);
    }
    Eigen::MatrixXd joint = stacked_ee_covariance(s1, a11, s2, a2, cross);

    // Delta method, rows (intercept, beta_d* = beta_c*gamma, beta_v* = beta_c + beta_v).
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(3, 4);
    grad(0, 1) = 1.0;
    grad(1, 0) = beta_c;
    grad(1, 2) = gamma;
    grad(2, 2) = 1.0;
    grad(2, 3) = 1.0;
    Eigen::MatrixXd cov = grad * joint * grad.transpose();

    LinearDRFit out;
    out.intercept = er.coefficients(0);
    out.beta_d = beta_c * gamma;
    out.beta_v = beta_c + beta_v;
    out.se_d = std::sqrt(cov(1, 1));
    out.se_v = std::sqrt(cov(2, 2));
    out.robust_covariance = 0.5 * (cov + cov.transpose());
    return out;
}

ContrastEstimate contrast(const DoseEstimates& estimates, int arm_j, int arm_k) {
    const int k = static_cast<int>(estimates.arms.size());
    if (arm_j < 0 || arm_j >= k || arm_k < 0 || arm_k >= k)
        throw std::invalid_argument("contrast arm out of range");
    const double delta = estimates.arms[arm_j].mu_hat - estimates.arms[arm_k].mu_hat;
    double var = 0.0;
    if (arm_j != arm_k)
        var = estimates.mu_covariance(arm_j, arm_j) + estimates.mu_covariance(arm_k, arm_k) -
              2.0 * estimates.mu_covariance(arm_j, arm_k);
    const double se = var > 0.0 ? std::sqrt(var) : 0.0;
    return {arm_j, arm_k, delta, se, delta - ci_z() * se, delta + ci_z() * se};
}

std::vector<double> bootstrap_se_ancova(const TrialDataset& dataset, const DEModelSpec& de_spec,
                                        const WorkingModelSpec& working, int draws,
                                        std::uint64_t seed) {
    const auto partition = arm_partition(dataset);
    const int k = dataset.n_arms();
    std::vector<std::vector<double>> mus(k);
    int failures = 0;

    for (int d = 0; d < draws; ++d) {
        Philox rng(seed, make_stream(StreamPurpose::bootstrap, d));
        TrialDataset resampled;
        resampled.dose_levels = dataset.dose_levels;
        resampled.outcome_kind = dataset.outcome_kind;
        resampled.covariate_names = dataset.covariate_names;
        int counter = 0;
        for (int a = 0; a < k; ++a) {
            const auto& idx = partition[a];
            const std::size_t nk = idx.size();
            for (std::size_t r = 0; r < nk; ++r) {
                auto pick = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(nk));
                SubjectRecord s = dataset.subjects[idx[std::min(pick, nk - 1)]];
                char buf[16];
                std::snprintf(buf, sizeof(buf), "b%06d", counter++);
                s.subject_id = buf;
                resampled.subjects.push_back(std::move(s));
            }
        }
        canonicalize(resampled);
        try {
            ControlVariableSet cv = fit_de_model(resampled, de_spec);
            DoseEstimates est = ancova_adjusted(resampled, cv, working);
            for (int a = 0; a < k; ++a) mus[a].push_back(est.arms[a].mu_hat);
        } catch (const std::exception&) {
            ++failures;
        }
    }
    if (failures > draws / 2)
        throw std::runtime_error("bootstrap failed on more than half the resamples");

    std::vector<double> se(k, 0.0);
    for (int a = 0; a < k; ++a) {
        const auto& v = mus[a];
        if (v.size() < 2) continue;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        se[a] = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return se;
}

}  // namespace dra
