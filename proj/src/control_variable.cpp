#include "dra/control_variable.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dra {

namespace {

double sample_sd(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Linear-interpolation quantile on a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double idx = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(idx));
    const auto hi = static_cast<std::size_t>(std::ceil(idx));
    const double frac = idx - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Exact two-sample KS statistic from sorted samples.
double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double silverman_bandwidth(const std::vector<double>& sorted, double mean) {
    const double sd = sample_sd(sorted, mean);
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread;
    if (sd > 0.0 && iqr > 0.0)
        spread = std::min(sd, iqr / 1.34);
    else
        spread = std::max(sd, iqr / 1.34);
    return 0.9 * spread * std::pow(static_cast<double>(sorted.size()), -0.2);
}

}  // namespace

std::string de_form_name(DEForm form) {
    switch (form) {
        case DEForm::anova: return "anova";
        case DEForm::proportional: return "proportional";
        case DEForm::proportional_with_covariates: return "proportional_with_covariates";
        case DEForm::linear_in_dose_and_covariates: return "linear_in_dose_and_covariates";
    }
    return "?";
}

DesignMatrix de_design_matrix(const TrialDataset& dataset, const DEModelSpec& spec) {
    const int n = dataset.n_subjects();
    const int k = dataset.n_arms();
    const int ncov = dataset.n_covariates();
    auto cov_name = [&dataset](int j) {
        return j < static_cast<int>(dataset.covariate_names.size())
                   ? dataset.covariate_names[static_cast<std::size_t>(j)]
                   : "x" + std::to_string(j);
    };

    Eigen::MatrixXd m;
    std::vector<std::string> labels;
    switch (spec.form) {
        case DEForm::anova: {
            m = Eigen::MatrixXd::Zero(n, k);
            for (int i = 0; i < n; ++i) m(i, dataset.subjects[i].arm_index) = 1.0;
            for (int a = 0; a < k; ++a) labels.push_back("arm" + std::to_string(a));
            break;
        }
        case DEForm::proportional: {
            m.resize(n, 1);
            for (int i = 0; i < n; ++i)
                m(i, 0) = dataset.dose_levels[dataset.subjects[i].arm_index].dose_value;
            labels = {"dose"};
            break;
        }
        case DEForm::proportional_with_covariates: {
            if (ncov < 1)
                throw std::invalid_argument(
                    "proportional_with_covariates requires at least one covariate");
            m.resize(n, 1 + ncov);
            for (int i = 0; i < n; ++i) {
                const double d = dataset.dose_levels[dataset.subjects[i].arm_index].dose_value;
                m(i, 0) = d;
                for (int j = 0; j < ncov; ++j)
                    m(i, 1 + j) = dataset.subjects[i].covariates[static_cast<std::size_t>(j)] * d;
            }
            labels.push_back("dose");
            for (int j = 0; j < ncov; ++j) labels.push_back("dose:" + cov_name(j));
            break;
        }
        case DEForm::linear_in_dose_and_covariates: {
            m.resize(n, 2 + ncov);
            for (int i = 0; i < n; ++i) {
                m(i, 0) = 1.0;
                m(i, 1) = dataset.dose_levels[dataset.subjects[i].arm_index].dose_value;
                for (int j = 0; j < ncov; ++j)
                    m(i, 2 + j) = dataset.subjects[i].covariates[static_cast<std::size_t>(j)];
            }
            labels.push_back("intercept");
            labels.push_back("dose");
            for (int j = 0; j < ncov; ++j) labels.push_back(cov_name(j));
            break;
        }
    }
    return make_design(std::move(m), std::move(labels));
}

ControlVariableSet fit_de_model(const TrialDataset& dataset, const DEModelSpec& spec) {
    DesignMatrix design = de_design_matrix(dataset, spec);
    Eigen::VectorXd exposure(dataset.n_subjects());
    for (int i = 0; i < dataset.n_subjects(); ++i) exposure(i) = dataset.subjects[i].exposure;

    FitResult fit = ols_fit(design, exposure);
    ControlVariableSet cv;
    cv.gamma_hat = fit.coefficients;
    cv.residuals = fit.residuals;
    cv.de_fit = std::move(fit);
    cv.de_design = std::move(design);
    cv.spec = spec;
    return cv;
}

BalanceReport balance_diagnostic(const ControlVariableSet& cv, const TrialDataset& dataset) {
    if (cv.residuals.size() != dataset.n_subjects())
        throw std::invalid_argument("control variables not aligned with dataset");

    BalanceReport report;
    const auto partition = arm_partition(dataset);
    for (std::size_t a = 0; a < partition.size(); ++a) {
        std::vector<double> vals;
        vals.reserve(partition[a].size());
        for (int idx : partition[a]) vals.push_back(cv.residuals(idx));
        std::sort(vals.begin(), vals.end());
        double mean = 0.0;
        for (double x : vals) mean += x;
        mean /= static_cast<double>(vals.size());
        report.arms.push_back({static_cast<int>(a), static_cast<int>(vals.size()), mean,
                               sample_sd(vals, mean)});
        report.arm_residuals.push_back(std::move(vals));
    }

    std::vector<double> pooled(cv.residuals.data(), cv.residuals.data() + cv.residuals.size());
    std::sort(pooled.begin(), pooled.end());
    report.ecdf_grid = pooled;
    for (const auto& vals : report.arm_residuals) {
        std::vector<double> ecdf(pooled.size());
        for (std::size_t g = 0; g < pooled.size(); ++g) {
            const auto count = std::upper_bound(vals.begin(), vals.end(), pooled[g]) - vals.begin();
            ecdf[g] = static_cast<double>(count) / static_cast<double>(vals.size());
        }
        report.ecdf_values.push_back(std::move(ecdf));
    }

    for (std::size_t j = 0; j < report.arms.size(); ++j) {
        for (std::size_t k2 = j + 1; k2 < report.arms.size(); ++k2) {
            const auto& aj = report.arms[j];
            const auto& ak = report.arms[k2];
            const double se2 = aj.sd * aj.sd / aj.n + ak.sd * ak.sd / ak.n;
            const double t = se2 > 0.0 ? (aj.mean - ak.mean) / std::sqrt(se2) : 0.0;
            report.pairs.push_back({aj.arm_index, ak.arm_index,
                                    ks_statistic(report.arm_residuals[j], report.arm_residuals[k2]),
                                    t});
        }
    }
    return report;
}

DensityTable export_density_data(const BalanceReport& report, double bandwidth) {
    if (report.arm_residuals.empty()) throw std::invalid_argument("empty balance report");

    double h = bandwidth;
    if (!(h > 0.0)) {
        for (std::size_t a = 0; a < report.arm_residuals.size(); ++a)
            h = std::max(h, silverman_bandwidth(report.arm_residuals[a], report.arms[a].mean));
        if (!(h > 0.0)) {
            double scale = 0.0;
            for (const auto& vals : report.arm_residuals)
                for (double x : vals) scale = std::max(scale, std::abs(x));
            h = 1e-6 * (1.0 + scale);
        }
    }

    double lo = report.ecdf_grid.front() - 3.0 * h;
    double hi = report.ecdf_grid.back() + 3.0 * h;

    DensityTable table;
    table.bandwidth = h;
    table.grid.resize(256);
    for (int g = 0; g < 256; ++g)
        table.grid[static_cast<std::size_t>(g)] = lo + (hi - lo) * g / 255.0;

    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (const auto& vals : report.arm_residuals) {
        std::vector<double> dens(256, 0.0);
        for (int g = 0; g < 256; ++g) {
            double sum = 0.0;
            for (double v : vals) {
                const double z = (table.grid[static_cast<std::size_t>(g)] - v) / h;
                sum += std::exp(-0.5 * z * z);
            }
            dens[static_cast<std::size_t>(g)] =
                norm * sum / (static_cast<double>(vals.size()) * h);
        }
        table.densities.push_back(std::move(dens));
    }
    return table;
}

}  // namespace dra
