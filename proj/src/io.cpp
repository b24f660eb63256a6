#include "dra/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dra/errors.hpp"
#include "dra/rng.hpp"

namespace dra {

namespace {

using nlohmann::json;

constexpr std::uint64_t kDefaultAnalysisSeed = 20240901;

std::string format_double(double x) {
    if (std::isnan(x)) return "NA";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_number(const std::string& field, const std::string& file, long line) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError(file, line, "bad number '" + field + "'");
    return value;
}

long parse_int(const std::string& field, const std::string& file, long line) {
    long value = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError(file, line, "bad integer '" + field + "'");
    return value;
}

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

DEForm parse_de_form(const std::string& s) {
    if (s == "anova") return DEForm::anova;
    if (s == "proportional") return DEForm::proportional;
    if (s == "proportional_with_covariates") return DEForm::proportional_with_covariates;
    if (s == "linear_in_dose_and_covariates") return DEForm::linear_in_dose_and_covariates;
    throw ConfigError("unknown DE form '" + s + "'");
}

WorkingFamily parse_family(const std::string& s) {
    if (s == "linear") return WorkingFamily::linear;
    if (s == "logistic") return WorkingFamily::logistic;
    throw ConfigError("unknown working family '" + s + "'");
}

WorkingStructure parse_structure(const std::string& s) {
    if (s == "ancova1") return WorkingStructure::ancova1;
    if (s == "ancova2") return WorkingStructure::ancova2;
    throw ConfigError("unknown working structure '" + s + "'");
}

EstimatorMethod parse_method(const std::string& s) {
    if (s == "unadjusted") return EstimatorMethod::unadjusted;
    if (s == "ancova1") return EstimatorMethod::ancova1;
    if (s == "ancova2") return EstimatorMethod::ancova2;
    if (s == "residual_inclusion") return EstimatorMethod::residual_inclusion;
    if (s == "composite_de_er") return EstimatorMethod::composite_de_er;
    throw ConfigError("unknown method '" + s + "'");
}

OutcomeKind parse_outcome_kind(const std::string& s) {
    if (s == "continuous" || s == "normal") return OutcomeKind::continuous;
    if (s == "binary") return OutcomeKind::binary;
    throw ConfigError("unknown outcome_kind '" + s + "'");
}

json parse_json(const std::string& text, const std::string& name) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError(name, "invalid JSON");
    return j;
}

ScenarioConfig scenario_from_json(const json& j) {
    check_keys(j,
               {"n", "b1", "b2", "outcome_kind", "working_family", "structure", "runs",
                "truth_sample", "seed", "include_cv", "absolute_bias"},
               "scenario");
    for (const char* key : {"n", "b1", "b2", "outcome_kind", "working_family", "structure",
                            "runs", "seed"})
        if (!j.contains(key)) throw ConfigError(std::string("scenario missing '") + key + "'");

    ScenarioConfig cfg;
    cfg.n = j.at("n").get<int>();
    cfg.b1 = j.at("b1").get<double>();
    cfg.b2 = j.at("b2").get<double>();
    cfg.outcome_kind = parse_outcome_kind(j.at("outcome_kind").get<std::string>());
    cfg.working_family = parse_family(j.at("working_family").get<std::string>());
    cfg.structure = parse_structure(j.at("structure").get<std::string>());
    cfg.runs = j.at("runs").get<int>();
    cfg.truth_sample = j.value("truth_sample", 100000);
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.include_cv = j.value("include_cv", true);
    cfg.absolute_bias = j.value("absolute_bias", false);
    validate_scenario(cfg);
    return cfg;
}

struct EstimateRow {
    std::string method;
    std::string arm;  // arm index or a slope label
    double estimate;
    double se;
    double ci_low;
    double ci_high;
    double boot_se = std::numeric_limits<double>::quiet_NaN();
};

std::string estimates_csv(const std::vector<EstimateRow>& rows, bool with_bootstrap) {
    std::string out = "method,arm,estimate,se,ci_low,ci_high";
    if (with_bootstrap) out += ",boot_se";
    out += "\n";
    for (const auto& r : rows) {
        out += r.method + "," + r.arm + "," + format_double(r.estimate) + "," +
               format_double(r.se) + "," + format_double(r.ci_low) + "," +
               format_double(r.ci_high);
        if (with_bootstrap) out += "," + format_double(r.boot_se);
        out += "\n";
    }
    return out;
}

}  // namespace

TrialDataset parse_dataset_text(const std::string& text, const std::string& name,
                                std::optional<OutcomeKind> outcome_override) {
    std::vector<std::string> lines;
    {
        std::string cur;
        for (char ch : text) {
            if (ch == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!cur.empty()) lines.push_back(cur);
    }
    if (lines.empty()) throw ParseError(name, "empty file");

    const auto header = split_csv_line(lines[0]);
    const std::vector<std::string> fixed = {"subject_id", "dose_arm", "dose_value", "exposure",
                                            "outcome"};
    if (header.size() < fixed.size())
        throw ParseError(name, 1, "header needs at least the columns "
                                  "subject_id,dose_arm,dose_value,exposure,outcome");
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (header[i] != fixed[i])
            throw ParseError(name, 1, "expected column '" + fixed[i] + "', got '" + header[i] + "'");

    TrialDataset ds;
    for (std::size_t i = fixed.size(); i < header.size(); ++i) {
        if (header[i].rfind("covariate_", 0) != 0)
            throw ParseError(name, 1, "extra column '" + header[i] + "' must be covariate_<name>");
        ds.covariate_names.push_back(header[i].substr(10));
    }
    const std::size_t ncol = header.size();

    std::map<long, std::pair<double, long>> arm_dose;  // arm -> (dose_value, first line)
    bool all_binary = true;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty() || lines[li] == "\r") continue;
        const long line_no = static_cast<long>(li + 1);
        const auto fields = split_csv_line(lines[li]);
        if (fields.size() != ncol)
            throw ParseError(name, line_no,
                             "expected " + std::to_string(ncol) + " fields, got " +
                                 std::to_string(fields.size()));
        SubjectRecord s;
        s.subject_id = fields[0];
        if (s.subject_id.empty()) throw ParseError(name, line_no, "empty subject_id");
        s.arm_index = static_cast<int>(parse_int(fields[1], name, line_no));
        const double dose = parse_number(fields[2], name, line_no);
        s.exposure = parse_number(fields[3], name, line_no);
        s.outcome = parse_number(fields[4], name, line_no);
        for (std::size_t c = 5; c < ncol; ++c)
            s.covariates.push_back(parse_number(fields[c], name, line_no));

        auto [it, inserted] = arm_dose.emplace(s.arm_index, std::make_pair(dose, line_no));
        if (!inserted && it->second.first != dose)
            throw ParseError(name, line_no,
                             "dose_value " + fields[2] + " conflicts with line " +
                                 std::to_string(it->second.second) + " for arm " +
                                 std::to_string(s.arm_index));
        if (s.outcome != 0.0 && s.outcome != 1.0) all_binary = false;
        ds.subjects.push_back(std::move(s));
    }
    if (ds.subjects.empty()) throw ParseError(name, "no data rows");

    for (const auto& [arm, dose_line] : arm_dose)
        ds.dose_levels.push_back({static_cast<int>(arm), dose_line.first});
    std::sort(ds.dose_levels.begin(), ds.dose_levels.end(),
              [](const DoseLevel& a, const DoseLevel& b) { return a.arm_index < b.arm_index; });

    ds.outcome_kind = outcome_override.value_or(all_binary ? OutcomeKind::binary
                                                           : OutcomeKind::continuous);
    canonicalize(ds);
    return ds;
}

TrialDataset parse_dataset(const std::string& path, std::optional<OutcomeKind> outcome_override) {
    return parse_dataset_text(read_file(path), path, outcome_override);
}

std::string write_dataset_csv(const TrialDataset& dataset) {
    TrialDataset copy = dataset;
    canonicalize(copy);
    std::string out = "subject_id,dose_arm,dose_value,exposure,outcome";
    for (const auto& name : copy.covariate_names) out += ",covariate_" + name;
    for (int j = static_cast<int>(copy.covariate_names.size()); j < copy.n_covariates(); ++j)
        out += ",covariate_x" + std::to_string(j);
    out += "\n";
    for (const auto& s : copy.subjects) {
        out += s.subject_id + "," + std::to_string(s.arm_index) + "," +
               format_double(copy.dose_levels[s.arm_index].dose_value) + "," +
               format_double(s.exposure) + "," + format_double(s.outcome);
        for (double x : s.covariates) out += "," + format_double(x);
        out += "\n";
    }
    return out;
}

AnalysisConfig parse_analysis_config_text(const std::string& text) {
    json j = parse_json(text, "analysis config");
    check_keys(j, {"de_spec", "working", "methods", "ci_level", "bootstrap", "outcome_kind"},
               "analysis config");
    AnalysisConfig cfg;
    if (!j.contains("de_spec") || !j.contains("working") || !j.contains("methods"))
        throw ConfigError("analysis config needs de_spec, working and methods");

    const json& de = j.at("de_spec");
    check_keys(de, {"form"}, "de_spec");
    cfg.de_spec.form = parse_de_form(de.at("form").get<std::string>());

    const json& w = j.at("working");
    check_keys(w, {"family", "structure", "include_covariates", "include_cv"}, "working");
    cfg.working.family = parse_family(w.at("family").get<std::string>());
    cfg.working.structure = parse_structure(w.at("structure").get<std::string>());
    cfg.working.include_covariates = w.value("include_covariates", false);
    cfg.working.include_cv = w.value("include_cv", true);

    for (const auto& m : j.at("methods")) cfg.methods.push_back(parse_method(m.get<std::string>()));
    if (cfg.methods.empty()) throw ConfigError("methods must be nonempty");

    if (j.contains("ci_level")) {
        cfg.ci_level = j.at("ci_level").get<double>();
        if (cfg.ci_level != 0.95) throw ConfigError("ci_level is fixed at 0.95");
    }
    if (j.contains("bootstrap")) {
        cfg.bootstrap = j.at("bootstrap").get<int>();
        if (*cfg.bootstrap < 100) throw ConfigError("bootstrap must be >= 100");
    }
    if (j.contains("outcome_kind"))
        cfg.outcome_override = parse_outcome_kind(j.at("outcome_kind").get<std::string>());

    const bool wants_composite = std::find(cfg.methods.begin(), cfg.methods.end(),
                                           EstimatorMethod::composite_de_er) != cfg.methods.end();
    if (wants_composite && cfg.de_spec.form != DEForm::proportional)
        throw ConfigError("composite_de_er requires de_spec.form = proportional");
    return cfg;
}

AnalysisConfig parse_analysis_config(const std::string& path) {
    return parse_analysis_config_text(read_file(path));
}

std::vector<ScenarioConfig> parse_scenarios_text(const std::string& text) {
    json j = parse_json(text, "scenario config");
    std::vector<ScenarioConfig> out;
    if (j.is_array())
        for (const auto& item : j) out.push_back(scenario_from_json(item));
    else
        out.push_back(scenario_from_json(j));
    if (out.empty()) throw ConfigError("scenario file holds no scenarios");
    return out;
}

std::vector<ScenarioConfig> parse_scenarios(const std::string& path) {
    return parse_scenarios_text(read_file(path));
}

namespace {

int report_violations(const ValidationReport& report) {
    for (const auto& v : report.violations) {
        std::cerr << "validation: " << v.code;
        if (!v.subject_id.empty()) std::cerr << " subject=" << v.subject_id;
        if (v.arm_index >= 0) std::cerr << " arm=" << v.arm_index;
        std::cerr << ": " << v.message << "\n";
    }
    return 2;
}

std::filesystem::path prepare_out_dir(const CliOptions& options) {
    std::filesystem::path dir(options.out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

int cmd_analyze(const std::string& dataset_path, const std::string& config_path,
                const CliOptions& options) {
    AnalysisConfig cfg;
    TrialDataset ds;
    try {
        cfg = parse_analysis_config(config_path);
        ds = parse_dataset(dataset_path, cfg.outcome_override);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    const ValidationReport report = validate(ds);
    if (!report.ok()) return report_violations(report);

    std::ostringstream log;
    log << "dataset: " << dataset_path << " (n=" << ds.n_subjects() << ", K=" << ds.n_arms()
        << ", outcome=" << (ds.outcome_kind == OutcomeKind::binary ? "binary" : "continuous")
        << ")\n";
    log << "de_spec: " << de_form_name(cfg.de_spec.form) << "\n";
    log << "working: family="
        << (cfg.working.family == WorkingFamily::linear ? "linear" : "logistic")
        << " include_covariates=" << (cfg.working.include_covariates ? "true" : "false")
        << " include_cv=" << (cfg.working.include_cv ? "true" : "false") << "\n";

    try {
        const bool needs_cv = cfg.methods.size() > 1 ||
                              cfg.methods.front() != EstimatorMethod::unadjusted;
        std::optional<ControlVariableSet> cv;
        if (needs_cv) {
            cv = fit_de_model(ds, cfg.de_spec);
            log << "gamma_hat:";
            for (int i = 0; i < cv->gamma_hat.size(); ++i) log << " " << cv->gamma_hat(i);
            log << "\n";
        }

        std::vector<EstimateRow> rows;
        const std::uint64_t seed = options.seed.value_or(kDefaultAnalysisSeed);
        for (EstimatorMethod method : cfg.methods) {
            const std::string mname = estimator_method_name(method);
            switch (method) {
                case EstimatorMethod::unadjusted: {
                    DoseEstimates est = unadjusted_means(ds);
                    for (const auto& arm : est.arms)
                        rows.push_back({mname, std::to_string(arm.arm_index), arm.mu_hat, arm.se,
                                        arm.ci_low, arm.ci_high});
                    break;
                }
                case EstimatorMethod::ancova1:
                case EstimatorMethod::ancova2: {
                    WorkingModelSpec spec = cfg.working;
                    spec.structure = method == EstimatorMethod::ancova1
                                         ? WorkingStructure::ancova1
                                         : WorkingStructure::ancova2;
                    DoseEstimates est = ancova_adjusted(ds, *cv, spec);
                    std::vector<double> boot;
                    if (cfg.bootstrap)
                        boot = bootstrap_se_ancova(ds, cfg.de_spec, spec, *cfg.bootstrap, seed);
                    for (const auto& arm : est.arms) {
                        EstimateRow row{mname, std::to_string(arm.arm_index), arm.mu_hat,
                                        arm.se, arm.ci_low, arm.ci_high};
                        if (cfg.bootstrap) row.boot_se = boot[arm.arm_index];
                        if (!std::isfinite(arm.se))
                            log << "warning: non-finite SE for " << mname << " arm "
                                << arm.arm_index << "\n";
                        rows.push_back(row);
                    }
                    break;
                }
                case EstimatorMethod::residual_inclusion: {
                    ResidualInclusionFit fit = residual_inclusion(ds, *cv);
                    const double z = inverse_normal_cdf(0.975);
                    rows.push_back({mname, "exposure_slope", fit.beta_exposure, fit.se,
                                    fit.beta_exposure - z * fit.se,
                                    fit.beta_exposure + z * fit.se});
                    break;
                }
                case EstimatorMethod::composite_de_er: {
                    LinearDRFit fit = composite_de_er(ds, *cv);
                    const double z = inverse_normal_cdf(0.975);
                    rows.push_back({mname, "dose_slope", fit.beta_d, fit.se_d,
                                    fit.beta_d - z * fit.se_d, fit.beta_d + z * fit.se_d});
                    rows.push_back({mname, "cv_slope", fit.beta_v, fit.se_v,
                                    fit.beta_v - z * fit.se_v, fit.beta_v + z * fit.se_v});
                    break;
                }
            }
        }

        const auto dir = prepare_out_dir(options);
        write_file((dir / "estimates.csv").string(),
                   estimates_csv(rows, cfg.bootstrap.has_value()));
        write_file((dir / "analyze_log.txt").string(), log.str());
        std::cout << "wrote " << (dir / "estimates.csv").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    }
}

int cmd_diagnose(const std::string& dataset_path, const std::string& config_path,
                 const CliOptions& options) {
    AnalysisConfig cfg;
    TrialDataset ds;
    try {
        cfg = parse_analysis_config(config_path);
        ds = parse_dataset(dataset_path, cfg.outcome_override);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    const ValidationReport report = validate(ds);
    if (!report.ok()) return report_violations(report);

    try {
        ControlVariableSet cv = fit_de_model(ds, cfg.de_spec);
        BalanceReport balance = balance_diagnostic(cv, ds);
        DensityTable density = export_density_data(balance);

        std::string bal = "row_type,arm_j,arm_k,n,mean,sd,ks,t\n";
        for (const auto& arm : balance.arms)
            bal += "arm," + std::to_string(arm.arm_index) + ",NA," + std::to_string(arm.n) + "," +
                   format_double(arm.mean) + "," + format_double(arm.sd) + ",NA,NA\n";
        for (const auto& pair : balance.pairs)
            bal += "pair," + std::to_string(pair.arm_j) + "," + std::to_string(pair.arm_k) +
                   ",NA,NA,NA," + format_double(pair.ks) + "," + format_double(pair.t) + "\n";

        std::string dens = "arm_index,grid_value,density\n";
        for (std::size_t a = 0; a < density.densities.size(); ++a)
            for (std::size_t g = 0; g < density.grid.size(); ++g)
                dens += std::to_string(a) + "," + format_double(density.grid[g]) + "," +
                        format_double(density.densities[a][g]) + "\n";

        const auto dir = prepare_out_dir(options);
        write_file((dir / "balance.csv").string(), bal);
        write_file((dir / "density.csv").string(), dens);
        std::cout << "wrote " << (dir / "balance.csv").string() << " and "
                  << (dir / "density.csv").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    }
}

int cmd_simulate(const std::string& scenario_path, const CliOptions& options) {
    std::vector<ScenarioConfig> scenarios;
    try {
        scenarios = parse_scenarios(scenario_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    try {
        std::vector<SimulationReport> reports;
        for (ScenarioConfig cfg : scenarios) {
            if (options.seed) cfg.seed = *options.seed;
            reports.push_back(run_monte_carlo(cfg, options.threads));
        }
        const auto dir = prepare_out_dir(options);
        write_file((dir / "report.csv").string(), report_table(reports));
        write_file((dir / "report_details.csv").string(), report_details(reports));
        std::cout << "wrote " << (dir / "report.csv").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return 3;
    }
}

int cmd_true_means(const std::string& scenario_path, const CliOptions& options) {
    std::vector<ScenarioConfig> scenarios;
    try {
        scenarios = parse_scenarios(scenario_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    try {
        std::string out = "n,b1,b2,outcome_kind,arm,true_mu,mc_se\n";
        for (ScenarioConfig cfg : scenarios) {
            if (options.seed) cfg.seed = *options.seed;
            TrueMeans tm = true_means(cfg);
            for (std::size_t a = 0; a < tm.mu.size(); ++a)
                out += std::to_string(cfg.n) + "," + format_double(cfg.b1) + "," +
                       format_double(cfg.b2) + "," +
                       (cfg.outcome_kind == OutcomeKind::binary ? "binary" : "normal") + "," +
                       std::to_string(a) + "," + format_double(tm.mu[a]) + "," +
                       format_double(tm.mc_se[a]) + "\n";
        }
        const auto dir = prepare_out_dir(options);
        write_file((dir / "true_means.csv").string(), out);
        std::cout << out;
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace dra
