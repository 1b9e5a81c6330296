#include "optim.hpp"

#include <cmath>
#include <stdexcept>

namespace selnet {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    slots_.reserve(params_.size());
    for (Parameter* p : params_)
        slots_.push_back({Tensor::zeros(p->value.shape()), Tensor::zeros(p->value.shape())});
}

void Adam::step(const GradientMap& grads, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        const Tensor* g = grads.find(p);
        if (g && !all_finite(*g))
            throw std::runtime_error("non-finite gradient for parameter '" + p.name + "'");
        Slot& s = slots_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            double gi = g ? g->at(i) : 0.0;
            s.m.at(i) = cfg_.beta1 * s.m.at(i) + (1.0 - cfg_.beta1) * gi;
            s.v.at(i) = cfg_.beta2 * s.v.at(i) + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = s.m.at(i) / bc1;
            double vhat = s.v.at(i) / bc2;
            p.value.at(i) -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

MultiStepLR::MultiStepLR(double initial, std::vector<std::size_t> milestones, double factor)
    : initial_(initial), milestones_(std::move(milestones)), factor_(factor) {
    if (initial <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (factor <= 0.0) throw std::invalid_argument("lr decay factor must be positive");
    for (std::size_t i = 1; i < milestones_.size(); ++i)
        if (milestones_[i] <= milestones_[i - 1])
            throw std::invalid_argument("lr milestones must be strictly increasing");
}

double MultiStepLR::at_epoch(std::size_t epoch) const {
    double lr = initial_;
    for (std::size_t m : milestones_)
        if (m <= epoch) lr *= factor_;
    return lr;
}

}  // namespace selnet
