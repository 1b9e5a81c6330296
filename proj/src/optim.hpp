#pragma once

#include <cstddef>
#include <vector>

#include "tape.hpp"

namespace selnet {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Missing gradients count as zero; non-finite
// gradients abort the step with the offending parameter named.
class Adam {
public:
    explicit Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

    void step(const GradientMap& grads, double lr);
    std::size_t steps() const { return t_; }

private:
    struct Slot {
        Tensor m, v;
    };
    std::vector<Parameter*> params_;
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    std::size_t t_ = 0;
};

// Piecewise-constant decay: lr(e) = initial * factor^k with k the number of
// milestones <= e. Milestones must be strictly increasing.
class MultiStepLR {
public:
    MultiStepLR(double initial, std::vector<std::size_t> milestones, double factor);
    double at_epoch(std::size_t epoch) const;
    double initial() const { return initial_; }

private:
    double initial_;
    std::vector<std::size_t> milestones_;
    double factor_;
};

}  // namespace selnet
