#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tape.hpp"

namespace selnet {

// Builds a scalar loss from the given leaf vars. Called repeatedly by the
// finite-difference driver, each time on a fresh tape with perturbed leaves,
// so the whole forward pass is re-run per probe.
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
    std::string name;
    bool pass = false;
    double max_err = 0.0;  // worst relative error; absolute where both sides are ~0
    std::string detail;
};

struct GradCheckReport {
    std::vector<GradCheckResult> results;
    bool all_pass() const;
    std::string to_text() const;
};

// Central differences with the given step; relative tolerance `tol`, with an
// absolute fallback of 1e-7 when both analytic and numeric values sit near zero.
GradCheckResult finite_difference_check(const std::string& name, const GraphBuilder& build,
                                        const std::vector<Tensor>& leaves, double step = 1e-5, double tol = 1e-4);

// The full battery: every op in the catalogue, composed model graphs, the
// straight-through estimator, and Gumbel sampler distribution checks.
GradCheckReport run_gradient_checks();

// Fraction of hard selections over `draws` samples of the binary estimator at
// selection probability g. Runs the real graph in large batches.
double gumbel_hard_selection_rate(double g, std::size_t draws, std::uint64_t seed);

}  // namespace selnet
