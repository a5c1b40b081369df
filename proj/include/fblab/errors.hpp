#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fblab {

/// Base class for every error the library throws. `module_name` identifies the
/// subsystem ("expr", "paths", ...) so CLI messages can name their origin.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

    const std::string& module_name() const { return module_; }

private:
    std::string module_;
};

/// Bad or missing configuration (unknown key, wrong type, unreadable file).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

// --- expr ---

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t offset, std::vector<std::string> expected)
        : Error("expr", "syntax error at byte " + std::to_string(offset) +
                            ", expected " + join(expected)),
          offset_(offset), expected_(std::move(expected)) {}

    std::size_t offset() const { return offset_; }
    const std::vector<std::string>& expected() const { return expected_; }

private:
    static std::string join(const std::vector<std::string>& xs) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (i) s += i + 1 == xs.size() ? " or " : ", ";
            s += xs[i];
        }
        return s.empty() ? std::string("end of input") : s;
    }
    std::size_t offset_;
    std::vector<std::string> expected_;
};

class UnknownVariable : public Error {
public:
    UnknownVariable(std::string name, std::size_t offset)
        : Error("expr", "unknown variable '" + name + "' at byte " + std::to_string(offset)),
          name_(std::move(name)), offset_(offset) {}

    const std::string& name() const { return name_; }
    std::size_t offset() const { return offset_; }

private:
    std::string name_;
    std::size_t offset_;
};

/// Indexed variable outside the declared dimensions (e.g. x3 when n = 2).
class DimensionError : public Error {
public:
    DimensionError(std::string name, std::size_t offset, int limit)
        : Error("expr", "variable '" + name + "' at byte " + std::to_string(offset) +
                            " exceeds declared dimension " + std::to_string(limit)),
          name_(std::move(name)), offset_(offset) {}

    const std::string& name() const { return name_; }
    std::size_t offset() const { return offset_; }

private:
    std::string name_;
    std::size_t offset_;
};

/// Evaluation hit an invalid operand (log of a nonpositive value, division by
/// zero, ...). `offset` locates the offending subexpression in the source.
class DomainError : public Error {
public:
    DomainError(const std::string& what, std::size_t offset)
        : Error("expr", what + " (subexpression at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// --- core ---

class InvalidConstants : public Error {
public:
    explicit InvalidConstants(const std::string& what) : Error("core", what) {}
};

/// A solver was invoked on a problem whose standing assumptions do not hold
/// and the caller did not set the override flag.
class GateRefused : public Error {
public:
    explicit GateRefused(const std::string& what) : Error("core", what) {}
};

// --- algebra ---

class NonContractive : public Error {
public:
    NonContractive(double q, const std::string& where)
        : Error("algebra", "fixed point is not contractive (L3*|p| = " +
                               std::to_string(q) + ") " + where),
          q_(q) {}

    double q() const { return q_; }

private:
    double q_;
};

class MaxIterations : public Error {
public:
    MaxIterations(std::string module, int iters)
        : Error(std::move(module), "no convergence after " + std::to_string(iters) +
                                       " iterations") {}
};

// --- paths ---

class MissingFeed : public Error {
public:
    explicit MissingFeed(const std::string& what) : Error("paths", what) {}
};

class SingularRegression : public Error {
public:
    SingularRegression(int step, double cond)
        : Error("paths", "regression at step " + std::to_string(step) +
                             " is numerically singular (cond ~ " + std::to_string(cond) + ")"),
          step_(step), cond_(cond) {}

    int step() const { return step_; }
    double cond() const { return cond_; }

private:
    int step_;
    double cond_;
};

class CflViolation : public Error {
public:
    CflViolation(std::string module, const std::string& what)
        : Error(std::move(module), "CFL violation: " + what) {}
};

// --- fbsde ---

class PicardDiverged : public Error {
public:
    explicit PicardDiverged(std::vector<double> gaps)
        : Error("fbsde", "Picard gaps rose three times in a row (last gap " +
                             std::to_string(gaps.empty() ? 0.0 : gaps.back()) + ")"),
          gaps_(std::move(gaps)) {}

    const std::vector<double>& gap_history() const { return gaps_; }

private:
    std::vector<double> gaps_;
};

// --- value ---

class InterpolationOutOfBounds : public Error {
public:
    explicit InterpolationOutOfBounds(const std::string& what) : Error("value", what) {}
};

// --- verify ---

/// Grid too coarse for the requested mollification radius.
class ResolutionError : public Error {
public:
    explicit ResolutionError(const std::string& what) : Error("verify", what) {}
};

class NotLipschitz : public Error {
public:
    explicit NotLipschitz(const std::string& what) : Error("verify", what) {}
};

/// Mollified gradient too large for the algebra equation to stay contractive.
class GradientTooLarge : public Error {
public:
    GradientTooLarge(double norm, double l3)
        : Error("verify", "mollified gradient norm " + std::to_string(norm) +
                              " with L3 = " + std::to_string(l3) +
                              " violates |DW|*L3 < 1") {}
};

/// Numerical failure inside a solver (NaN at a grid node, ...).
class SolverError : public Error {
public:
    SolverError(std::string module, const std::string& what)
        : Error(std::move(module), what) {}
};

} // namespace fblab
