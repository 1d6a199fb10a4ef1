// error.hpp - error type shared by all modules

#pragma once

#include <stdexcept>
#include <string>

namespace enzgrid {

enum class ErrorKind {
    Domain,            // argument outside the mathematical domain
    Singular,          // evaluation at a singular point
    Inconclusive,      // numerical search could not bracket its target
    InvalidSpec,       // geometry or run description violates an invariant
    Resolution,        // grid too coarse for the requested features
    Instability,       // NaN/Inf appeared during time stepping
    NotConverged,      // steady state not reached
    Schema,            // configuration document is malformed
    MissingMonitor,    // analysis asked for a monitor that was not recorded
    Io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Singular: return "singular";
        case ErrorKind::Inconclusive: return "inconclusive";
        case ErrorKind::InvalidSpec: return "invalid_spec";
        case ErrorKind::Resolution: return "resolution";
        case ErrorKind::Instability: return "instability";
        case ErrorKind::NotConverged: return "not_converged";
        case ErrorKind::Schema: return "schema";
        case ErrorKind::MissingMonitor: return "missing_monitor";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised by the time stepper when the fields stop being finite.
class InstabilityError : public Error {
public:
    InstabilityError(long step, const std::string& what) : Error(ErrorKind::Instability, what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace enzgrid
