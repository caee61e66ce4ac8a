#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hazeforge/tensor.hpp"

// Self-contained gradient verification, shipped as a diagnostic rather than
// a test: every differentiable op and the photorealism hook are compared
// against central finite differences, and the CLI exposes the sweep so a
// rebuilt or ported binary can prove its autodiff before anyone trains with
// it.

namespace hazeforge {

struct GradCheckResult {
    std::string name;
    // max over compared elements of |analytic - numeric| / max(1, |numeric|)
    double max_error = 0.0;
    double tolerance = 0.0;
    // Elements perturbed, and the subset excluded because the difference
    // stencil disagreed with itself there (a kink inside the stencil's
    // footprint). passed requires the exclusions to stay under 10%.
    int elements = 0;
    int skipped = 0;
    bool passed = false;
};

// Projects `forward`'s output onto a fixed random direction to get a scalar,
// then compares the taped gradient of that scalar against central
// differences for every element of every input. Inputs must be leaves with
// requires_grad set; their values are restored bit-exactly afterwards.
//
// Elements whose first estimate misses the tolerance are retried with half
// the step: agreement there clears them (curvature at the original step),
// and two numeric estimates that contradict each other mark the element as
// unmeasurable (the stencil straddles a kink) and skip it. Only elements
// where consistent numerics contradict the tape count as failures.
GradCheckResult check_gradient(const std::string& name, std::span<Tensor> inputs,
                               const std::function<Tensor()>& forward, double tolerance,
                               std::uint64_t seed, double step = 5e-3);

// The built-in sweep: elementwise ops, reductions, normalization, both conv
// directions, the loss atoms, the photorealism energy, and gradients through
// a whole generator and discriminator. Deterministic for a given seed.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed = 42);

} // namespace hazeforge
