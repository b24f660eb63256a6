#include "dra/data_model.hpp"

#include <algorithm>
#include <cmath>

namespace dra {

void canonicalize(TrialDataset& dataset) {
    std::sort(dataset.subjects.begin(), dataset.subjects.end(),
              [](const SubjectRecord& a, const SubjectRecord& b) {
                  if (a.arm_index != b.arm_index) return a.arm_index < b.arm_index;
                  return a.subject_id < b.subject_id;
              });
}

ValidationReport validate(const TrialDataset& dataset) {
    ValidationReport report;
    auto add = [&report](std::string code, std::string subject, int arm, std::string msg) {
        report.violations.push_back({std::move(code), std::move(subject), arm, std::move(msg)});
    };

    const int k = dataset.n_arms();
    if (k < 2) add("too_few_arms", "", -1, "dataset must have K >= 2 dose levels, got " + std::to_string(k));

    for (int i = 0; i < k; ++i) {
        if (dataset.dose_levels[i].arm_index != i)
            add("arm_index_gap", "", i,
                "dose level #" + std::to_string(i) + " has arm_index " +
                    std::to_string(dataset.dose_levels[i].arm_index) + ", expected contiguous 0..K-1");
        if (!std::isfinite(dataset.dose_levels[i].dose_value))
            add("nonfinite_dose", "", i, "dose_value is not finite");
        if (i > 0 && !(dataset.dose_levels[i].dose_value > dataset.dose_levels[i - 1].dose_value))
            add("dose_not_increasing", "", i,
                "dose_value must be strictly increasing in arm_index");
    }

    std::vector<int> arm_counts(std::max(k, 0), 0);
    const std::size_t n_cov =
        dataset.subjects.empty() ? dataset.covariate_names.size() : dataset.subjects.front().covariates.size();
    if (!dataset.covariate_names.empty() && dataset.covariate_names.size() != n_cov)
        add("covariate_name_mismatch", "", -1, "covariate_names length differs from covariate vectors");

    for (const auto& s : dataset.subjects) {
        if (s.arm_index < 0 || s.arm_index >= k) {
            add("bad_arm_reference", s.subject_id, s.arm_index, "subject references unknown arm");
        } else {
            ++arm_counts[s.arm_index];
        }
        if (!std::isfinite(s.exposure))
            add("nonfinite_exposure", s.subject_id, s.arm_index, "exposure is not finite");
        if (!std::isfinite(s.outcome))
            add("nonfinite_outcome", s.subject_id, s.arm_index, "outcome is not finite");
        if (s.covariates.size() != n_cov)
            add("covariate_length", s.subject_id, s.arm_index,
                "covariate vector length " + std::to_string(s.covariates.size()) +
                    " differs from " + std::to_string(n_cov));
        for (double x : s.covariates)
            if (!std::isfinite(x)) {
                add("nonfinite_covariate", s.subject_id, s.arm_index, "covariate is not finite");
                break;
            }
        if (dataset.outcome_kind == OutcomeKind::binary && s.outcome != 0.0 && s.outcome != 1.0)
            add("nonbinary_outcome", s.subject_id, s.arm_index,
                "binary dataset contains outcome " + std::to_string(s.outcome));
    }

    for (int i = 0; i < k; ++i)
        if (arm_counts[i] == 0) add("empty_arm", "", i, "empty arm " + std::to_string(i));

    return report;
}

std::vector<std::vector<int>> arm_partition(const TrialDataset& dataset) {
    std::vector<std::vector<int>> sets(dataset.n_arms());
    for (int i = 0; i < dataset.n_subjects(); ++i)
        sets[dataset.subjects[i].arm_index].push_back(i);
    return sets;
}

}  // namespace dra
