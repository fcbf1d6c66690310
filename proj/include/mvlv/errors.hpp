#pragma once

#include <stdexcept>
#include <string>

namespace mvlv {

/// Base class for all domain errors raised by the toolkit. The CLI maps
/// these to exit code 1 with a machine-readable JSON payload on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    /// Stable machine-readable error kind, e.g. "parse_error".
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

/// Syntax or unknown-key failure while reading a circuit file.
/// Carries the exact source location.
class ParseError : public Error {
public:
    ParseError(std::string file, int line, const std::string& message)
        : Error("parse_error", file + ":" + std::to_string(line) + ": " + message),
          file_(std::move(file)), line_(line) {}

    const std::string& file() const { return file_; }
    int line() const { return line_; }

private:
    std::string file_;
    int line_;
};

/// Dangling reference between elements (e.g. a line naming an undefined linecode).
class LinkError : public Error {
public:
    explicit LinkError(const std::string& message) : Error("link_error", message) {}
};

/// Structural defect: duplicate source, disconnected model, base-voltage conflict.
class TopologyError : public Error {
public:
    explicit TopologyError(const std::string& message) : Error("topology_error", message) {}
};

/// Filesystem failure while reading or writing model files.
class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io_error", message) {}
};

/// Requested rating exceeds the largest entry of a transformer catalog.
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& message) : Error("capacity_error", message) {}
};

/// Power flow failed to reach the voltage-change tolerance.
class NonConvergence : public Error {
public:
    NonConvergence(int iterations, double residual)
        : Error("non_convergence",
                "power flow did not converge after " + std::to_string(iterations) +
                    " iterations (residual " + std::to_string(residual) + " pu)"),
          iterations_(iterations), residual_(residual) {}

    int iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    int iterations_;
    double residual_;
};

/// The nodal admittance system has no unique solution (e.g. a floating
/// delta-delta section with no voltage reference).
class SingularSystem : public Error {
public:
    explicit SingularSystem(const std::string& message) : Error("singular_system", message) {}
};

/// Tap control revisited a tap state, so the discrete control would cycle forever.
class ControlOscillation : public Error {
public:
    explicit ControlOscillation(const std::string& message)
        : Error("control_oscillation", message) {}
};

/// Caller passed arguments violating an operation's precondition.
class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& message) : Error("invalid_input", message) {}
};

}  // namespace mvlv
