#ifndef DRA_DATA_MODEL_HPP
#define DRA_DATA_MODEL_HPP

#include <string>
#include <vector>

namespace dra {

enum class OutcomeKind { continuous, binary };

// One randomized arm: 0-based index plus the numeric dose it carries.
// Models may use either encoding (numeric dose or arm indicators).
struct DoseLevel {
    int arm_index = 0;
    double dose_value = 0.0;
};

struct SubjectRecord {
    std::string subject_id;
    int arm_index = 0;
    double exposure = 0.0;
    std::vector<double> covariates;
    double outcome = 0.0;
};

struct TrialDataset {
    std::vector<DoseLevel> dose_levels;
    std::vector<SubjectRecord> subjects;
    OutcomeKind outcome_kind = OutcomeKind::continuous;
    std::vector<std::string> covariate_names;

    int n_arms() const { return static_cast<int>(dose_levels.size()); }
    int n_subjects() const { return static_cast<int>(subjects.size()); }
    int n_covariates() const {
        return subjects.empty() ? static_cast<int>(covariate_names.size())
                                : static_cast<int>(subjects.front().covariates.size());
    }
};

struct Violation {
    std::string code;        // e.g. "empty_arm", "nonbinary_outcome"
    std::string subject_id;  // empty when the violation is dataset-level
    int arm_index = -1;      // -1 when not arm-specific
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Sorts subjects by (arm_index, subject_id) so downstream fits are
// independent of input file order.
void canonicalize(TrialDataset& dataset);

// Collects every invariant violation; never throws. Violations are data.
ValidationReport validate(const TrialDataset& dataset);

// Index sets S_k into dataset.subjects, ordered by arm. Disjoint, exhaustive.
std::vector<std::vector<int>> arm_partition(const TrialDataset& dataset);

}  // namespace dra

#endif
