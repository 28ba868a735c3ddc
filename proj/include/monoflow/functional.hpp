#pragma once

// Shared records for monotone functionals and their sampled traces.

#include "monoflow/symmat.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace monoflow {

enum class Direction { Nondecreasing, Nonincreasing, Constant };

const char* directionName(Direction d);

/// A built-in spatial weight w with analytic hessian (for the
/// subharmonicity check div(M^{-1} grad w) >= 0).
struct WeightSpec {
    std::string name;
    std::function<double(const Vec&)> value;
    std::function<Mat(const Vec&)> hessian;
};

/// Names: "one", "cosh" (cosh x_1), "coshsum" (sum_i cosh x_i), "sqnorm" (|x|^2 + 1).
WeightSpec builtinWeight(const std::string& name);
std::vector<std::string> builtinWeightNames();

struct FunctionalSpec {
    Direction direction = Direction::Nondecreasing;
    std::optional<WeightSpec> weight;
};

struct FunctionalTrace {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> truncation;  // per-time quadrature error estimate
    Direction direction = Direction::Nondecreasing;
    double worstViolation = 0.0;     // min over consecutive deltas, oriented by direction
    bool tailWarning = false;

    std::vector<double> deltas() const;
    double maxAbs() const;
    /// Monotone within tol * max|F| plus the adjacent truncation estimates.
    bool respects(double relTol) const;
};

/// Recomputes worstViolation from values and direction.
void finalizeTrace(FunctionalTrace& tr);

}  // namespace monoflow
