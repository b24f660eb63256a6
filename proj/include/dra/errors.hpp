#ifndef DRA_ERRORS_HPP
#define DRA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dra {

// Numerical failures raised by the regression core and estimators.
// CLI maps these to exit code 3; data/validation problems map to exit code 2.

struct RankDeficientError : std::runtime_error {
    explicit RankDeficientError(const std::string& column)
        : std::runtime_error("rank-deficient design: column '" + column + "'"),
          column_label(column) {}
    std::string column_label;
};

struct SeparationError : std::runtime_error {
    explicit SeparationError(const std::string& what)
        : std::runtime_error("quasi-complete separation: " + what) {}
};

struct SingularBreadError : std::runtime_error {
    SingularBreadError() : std::runtime_error("singular bread matrix in sandwich covariance") {}
};

struct DegenerateArmError : std::runtime_error {
    DegenerateArmError(int arm, const std::string& why)
        : std::runtime_error("degenerate arm " + std::to_string(arm) + ": " + why), arm_index(arm) {}
    int arm_index;
};

struct TooManyFailuresError : std::runtime_error {
    TooManyFailuresError(int failed, int total)
        : std::runtime_error("too many failed simulation runs: " + std::to_string(failed) +
                             " of " + std::to_string(total)) {}
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& file, long line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what) {}
    ParseError(const std::string& file, const std::string& what)
        : std::runtime_error(file + ": " + what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error("config: " + what) {}
};

}  // namespace dra

#endif
