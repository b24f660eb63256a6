#include "dra/simulation.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>

#include "dra/control_variable.hpp"
#include "dra/errors.hpp"
#include "dra/rng.hpp"

namespace dra {

namespace {

constexpr double kDoses[3] = {1.0, 2.0, 3.0};
constexpr int kArms = 3;
constexpr double kFailureBudget = 0.05;

double outcome_normal(double c, double v, double u, double b1, double b2) {
    return c + b1 * std::exp(c + b2 * v) + 0.5 * v + u;
}

double outcome_probability(double c, double v, double u, double b1, double b2) {
    return 1.0 / (1.0 + std::exp(0.5 - c - b1 * std::exp(c + b2 * v) - 0.5 * v + u));
}

std::string format_double(double x) {
    if (std::isnan(x)) return "NA";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

}  // namespace

void validate_scenario(const ScenarioConfig& config) {
    if (config.n < 6) throw ConfigError("n must be at least 6 (two per arm)");
    if (config.runs < 1) throw ConfigError("runs must be >= 1");
    if (config.truth_sample < 10000) throw ConfigError("truth_sample must be >= 10000");
    if (config.working_family == WorkingFamily::logistic &&
        config.outcome_kind != OutcomeKind::binary)
        throw ConfigError("logistic working family requires a binary outcome");
}

std::vector<DoseLevel> scenario_dose_levels() {
    return {{0, kDoses[0]}, {1, kDoses[1]}, {2, kDoses[2]}};
}

GeneratedTrial generate_dataset(const ScenarioConfig& config, int run_index) {
    const int n = config.n;

    // Block 1:1:1 allocation: cycle the arms over a seeded permutation.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Philox alloc(config.seed, make_stream(StreamPurpose::allocation, run_index));
    for (int i = n - 1; i > 0; --i) {
        auto j = static_cast<int>(alloc.uniform01() * (i + 1));
        std::swap(perm[i], perm[std::min(j, i)]);
    }
    std::vector<int> arm(n);
    for (int i = 0; i < n; ++i) arm[perm[i]] = i % kArms;

    Philox noise(config.seed, make_stream(StreamPurpose::subject_noise, run_index));
    std::vector<SubjectRecord> subjects(n);
    Eigen::VectorXd v_raw(n), u_raw(n);
    for (int i = 0; i < n; ++i) {
        const double v = noise.normal();
        const double u = noise.normal();
        const double c = kDoses[arm[i]] + v;
        double y;
        if (config.outcome_kind == OutcomeKind::binary) {
            const double p = outcome_probability(c, v, u, config.b1, config.b2);
            y = noise.uniform01() < p ? 1.0 : 0.0;
        } else {
            y = outcome_normal(c, v, u, config.b1, config.b2);
        }
        char id[16];
        std::snprintf(id, sizeof(id), "s%05d", i);
        subjects[i] = SubjectRecord{id, arm[i], c, {}, y};
        v_raw(i) = v;
        u_raw(i) = u;
    }

    // Canonical (arm, subject_id) order, with the hidden truth kept aligned.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (subjects[a].arm_index != subjects[b].arm_index)
            return subjects[a].arm_index < subjects[b].arm_index;
        return subjects[a].subject_id < subjects[b].subject_id;
    });

    GeneratedTrial trial;
    trial.dataset.dose_levels = scenario_dose_levels();
    trial.dataset.outcome_kind = config.outcome_kind;
    trial.dataset.subjects.reserve(n);
    trial.v_true.resize(n);
    trial.u_true.resize(n);
    for (int r = 0; r < n; ++r) {
        trial.dataset.subjects.push_back(subjects[order[r]]);
        trial.v_true(r) = v_raw(order[r]);
        trial.u_true(r) = u_raw(order[r]);
    }
    return trial;
}

TrueMeans true_means(const ScenarioConfig& config) {
    TrueMeans result;
    for (int a = 0; a < kArms; ++a) {
        Philox rng(config.seed, make_stream(StreamPurpose::truth, a));
        double sum = 0.0, sumsq = 0.0;
        const int m = config.truth_sample;
        for (int i = 0; i < m; ++i) {
            const double v = rng.normal();
            const double u = rng.normal();
            const double c = kDoses[a] + v;
            double y;
            if (config.outcome_kind == OutcomeKind::binary) {
                const double p = outcome_probability(c, v, u, config.b1, config.b2);
                y = rng.uniform01() < p ? 1.0 : 0.0;
            } else {
                y = outcome_normal(c, v, u, config.b1, config.b2);
            }
            sum += y;
            sumsq += y * y;
        }
        const double mean = sum / m;
        const double var = std::max(0.0, sumsq / m - mean * mean);
        result.mu.push_back(mean);
        result.mc_se.push_back(std::sqrt(var / m));
    }
    return result;
}

SimulationReport run_monte_carlo(const ScenarioConfig& config, int threads) {
    validate_scenario(config);
    const int runs = config.runs;

    const TrueMeans truth = true_means(config);

    std::vector<std::array<double, kArms>> unadj(runs), adj(runs), se(runs);
    std::vector<char> failed(runs, 0);

    WorkingModelSpec working;
    working.family = config.working_family;
    working.structure = config.structure;
    working.include_covariates = false;
    working.include_cv = config.include_cv;

    auto run_one = [&](int r) {
        GeneratedTrial trial = generate_dataset(config, r);
        try {
            ControlVariableSet cv = fit_de_model(trial.dataset, DEModelSpec{DEForm::proportional});
            DoseEstimates u = unadjusted_means(trial.dataset);
            DoseEstimates m = ancova_adjusted(trial.dataset, cv, working);
            for (int a = 0; a < kArms; ++a) {
                unadj[r][a] = u.arms[a].mu_hat;
                adj[r][a] = m.arms[a].mu_hat;
                se[r][a] = m.arms[a].se;
            }
        } catch (const std::exception&) {
            failed[r] = 1;
        }
    };

    const int workers = std::max(1, threads);
    if (workers == 1) {
        for (int r = 0; r < runs; ++r) run_one(r);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (runs + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
            const int lo = t * chunk;
            const int hi = std::min(runs, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back([&run_one, lo, hi] {
                for (int r = lo; r < hi; ++r) run_one(r);
            });
        }
        for (auto& th : pool) th.join();
    }

    int n_failed = 0;
    for (int r = 0; r < runs; ++r) n_failed += failed[r];
    if (n_failed > kFailureBudget * runs) throw TooManyFailuresError(n_failed, runs);
    const int completed = runs - n_failed;

    SimulationReport report;
    report.config = config;
    report.runs_completed = completed;
    report.runs_failed = n_failed;

    for (int r = 0; r < runs; ++r) {
        if (failed[r]) continue;
        bool bad = false;
        for (int a = 0; a < kArms; ++a) bad = bad || !std::isfinite(se[r][a]);
        if (bad) ++report.se_failures;
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int a = 0; a < kArms; ++a) {
        double mean_u = 0.0, mean_a = 0.0;
        for (int r = 0; r < runs; ++r) {
            if (failed[r]) continue;
            mean_u += unadj[r][a];
            mean_a += adj[r][a];
        }
        mean_u /= completed;
        mean_a /= completed;

        double ss_u = 0.0, ss_a = 0.0, ss_se = 0.0;
        int n_se = 0;
        for (int r = 0; r < runs; ++r) {
            if (failed[r]) continue;
            ss_u += (unadj[r][a] - mean_u) * (unadj[r][a] - mean_u);
            ss_a += (adj[r][a] - mean_a) * (adj[r][a] - mean_a);
            if (std::isfinite(se[r][a])) {
                ss_se += se[r][a] * se[r][a];
                ++n_se;
            }
        }
        const bool have_var = completed >= 2;
        const double var_u = have_var ? ss_u / (completed - 1) : nan;
        const double var_a = have_var ? ss_a / (completed - 1) : nan;

        const double denom = config.absolute_bias ? 1.0 : std::abs(truth.mu[a]);
        SimulationArmReport arm;
        arm.true_mu = truth.mu[a];
        arm.rel_bias_x10_unadjusted = 10.0 * (mean_u - truth.mu[a]) / denom;
        arm.rel_bias_x10_adjusted = 10.0 * (mean_a - truth.mu[a]) / denom;
        arm.var_ratio = have_var ? var_a / var_u : nan;
        arm.sd_unadjusted = have_var ? std::sqrt(var_u) : nan;
        arm.sd_adjusted = have_var ? std::sqrt(var_a) : nan;
        arm.mc_se_bias_unadjusted =
            have_var ? 10.0 * arm.sd_unadjusted / std::sqrt(double(completed)) / denom : nan;
        arm.mc_se_bias_adjusted =
            have_var ? 10.0 * arm.sd_adjusted / std::sqrt(double(completed)) / denom : nan;
        arm.rms_sandwich_se = n_se > 0 ? std::sqrt(ss_se / n_se) : nan;
        report.arms.push_back(arm);
    }
    return report;
}

std::string report_table(const std::vector<SimulationReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("no simulation reports");
    std::string out =
        "n,b1,b2,bias10_unadj_mu1,bias10_unadj_mu2,bias10_unadj_mu3,"
        "bias10_adj_mu1,bias10_adj_mu2,bias10_adj_mu3,"
        "var_ratio_mu1,var_ratio_mu2,var_ratio_mu3\n";
    for (const auto& rep : reports) {
        out += std::to_string(rep.config.n) + "," + format_double(rep.config.b1) + "," +
               format_double(rep.config.b2);
        for (const auto& arm : rep.arms) out += "," + format_double(arm.rel_bias_x10_unadjusted);
        for (const auto& arm : rep.arms) out += "," + format_double(arm.rel_bias_x10_adjusted);
        for (const auto& arm : rep.arms) out += "," + format_double(arm.var_ratio);
        out += "\n";
    }
    return out;
}

std::string report_details(const std::vector<SimulationReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("no simulation reports");
    std::string out =
        "n,b1,b2,arm,true_mu,bias10_unadj,mc_se_bias10_unadj,bias10_adj,mc_se_bias10_adj,"
        "var_ratio,sd_unadj,sd_adj,rms_sandwich_se,runs_completed,runs_failed\n";
    for (const auto& rep : reports) {
        for (std::size_t a = 0; a < rep.arms.size(); ++a) {
            const auto& arm = rep.arms[a];
            out += std::to_string(rep.config.n) + "," + format_double(rep.config.b1) + "," +
                   format_double(rep.config.b2) + "," + std::to_string(a) + "," +
                   format_double(arm.true_mu) + "," + format_double(arm.rel_bias_x10_unadjusted) +
                   "," + format_double(arm.mc_se_bias_unadjusted) + "," +
                   format_double(arm.rel_bias_x10_adjusted) + "," +
                   format_double(arm.mc_se_bias_adjusted) + "," + format_double(arm.var_ratio) +
                   "," + format_double(arm.sd_unadjusted) + "," + format_double(arm.sd_adjusted) +
                   "," + format_double(arm.rms_sandwich_se) + "," +
                   std::to_string(rep.runs_completed) + "," + std::to_string(rep.runs_failed) +
                   "\n";
        }
    }
    return out;
}

}  // namespace dra
