#pragma once

#include <stdexcept>
#include <string>

namespace medtax {

/// Input or configuration that violates a documented contract. Maps to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure at run time (non-convergence, degenerate data). Maps to exit code 2.
class ComputeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solver did not reach its tolerance.
class ConvergenceError : public ComputeError {
public:
    ConvergenceError(const std::string &what, double residual)
        : ComputeError(what + " (last residual " + std::to_string(residual) + ")"),
          residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// A pipeline stage was requested before the stage producing its inputs ran.
class MissingArtifactError : public ValidationError {
public:
    MissingArtifactError(const std::string &artifact, const std::string &stage)
        : ValidationError("missing artifact '" + artifact + "'; run stage '" + stage + "' first"),
          stage_(stage) {}

    const std::string &stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

} // namespace medtax
