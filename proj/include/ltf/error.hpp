#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ltf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or broadcast mismatch in tensor arithmetic.
struct DimensionError : Error {
    using Error::Error;
};

// A caller broke an operation's precondition (non-scalar loss, invalid
// simplex, untrained component, ...).
struct ContractError : Error {
    using Error::Error;
};

struct NumericsError : Error {
    using Error::Error;
};

// Invalid dataset specification (non-SPD covariance, class count < 5, ...).
struct SpecError : Error {
    using Error::Error;
};

struct SplitError : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
    std::size_t line = 0;
};

struct ScheduleError : Error {
    using Error::Error;
};

struct GuidanceError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Carries every violation found, not just the first.
struct ConfigError : Error {
    explicit ConfigError(std::vector<std::string> v)
        : Error(join(v)), violations(std::move(v)) {}
    std::vector<std::string> violations;

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "config validation failed:";
        for (const auto& e : v) s += "\n  - " + e;
        return s;
    }
};

struct SelectionError : Error {
    explicit SelectionError(std::vector<std::string> v)
        : Error(join(v)), violations(std::move(v)) {}
    std::vector<std::string> violations;

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "no guidance weight satisfies the selection constraints:";
        for (const auto& e : v) s += "\n  - " + e;
        return s;
    }
};

}  // namespace ltf
