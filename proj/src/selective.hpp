#pragma once

#include <span>
#include <string>

#include "nn.hpp"
#include "rng.hpp"
#include "tape.hpp"

namespace selnet {

enum class SelectionMode { Gumbel, Soft };
SelectionMode selection_mode_from_string(const std::string& s);
std::string to_string(SelectionMode m);

enum class LossKind { Squared, Absolute, CrossEntropy };

// tau(e) = tau0 * rate^floor(e / step_epochs)
struct TemperatureSchedule {
    double tau0 = 1.0;
    double rate = 1.0;
    std::size_t step_epochs = 1;

    void validate() const;
    double at_epoch(std::size_t epoch) const;
};

// One Gumbel(0,1) draw per element: -log(-log(u)), u clamped into
// [1e-12, 1-1e-12] so both logs stay finite.
// G = -log(-log(u)) with u clamped to [1e-12, 1 - 1e-12]
double gumbel_from_uniform(double u);

Tensor sample_gumbel(const Shape& shape, Rng& rng);

// k-way Gumbel-max: argmax_i(log p_i + G_i). Exact samples from p.
std::size_t gumbel_max_sample(std::span<const double> probs, Rng& rng);

// k-way relaxation: softmax((log p + G) / tau).
std::vector<double> gumbel_softmax_sample(std::span<const double> probs, double tau, Rng& rng);

// Binary selection via two-way Gumbel-softmax over (select, abstain) with
// probabilities (g, 1-g). The soft sample reduces exactly to
// sigmoid((a1 - a2) / tau) with a_i = log pi_i + G_i, which is what gets
// built on the tape (stable down to very small tau).
struct SelectionSample {
    Var g_prob;  // the selection probabilities the sample was drawn from
    Var z_hard;  // 0/1 leaf, 1 iff the perturbed select-logit >= abstain-logit
    Var z_soft;  // relaxed sample, differentiable through g
    Var z_st;    // straight-through: hard values forward, soft gradient backward
};
SelectionSample gumbel_softmax_binary(Tape& t, Var g_prob, double tau, Rng& rng);
// deterministic variant for tests: caller supplies the two Gumbel draws
SelectionSample gumbel_softmax_binary_with_noise(Tape& t, Var g_prob, double tau, const Tensor& gum_sel,
                                                 const Tensor& gum_abs);

// Per-sample base losses, [m x k] predictions -> [m x 1].
Var per_sample_loss(Tape& t, LossKind kind, Var pred, Var target);

// phi = mean(z); risk = mean(loss * z) / max(phi, 1e-8), so an all-abstain
// batch stays finite (exactly 0); penalty = max(0, c - phi)^2.
inline constexpr double kCoverageGuard = 1e-8;
Var empirical_coverage(Tape& t, Var z);
Var selective_risk(Tape& t, Var per_loss, Var z, Var coverage);
Var coverage_penalty(Tape& t, double target_coverage, Var coverage);

struct SelectiveLossTerms {
    Var coverage;   // phi
    Var risk;       // selective risk
    Var penalty;    // coverage penalty
    Var selective;  // risk + lambda * penalty
    Var total;      // alpha * selective + (1 - alpha) * mean(per_loss_aux)
};
SelectiveLossTerms total_loss(Tape& t, Var per_loss_f, Var z, Var per_loss_aux, double target_coverage,
                              double lambda, double alpha);

// Backbone with three heads: prediction f, selection g (hidden 16 -> sigmoid),
// auxiliary h. Heads are plain dense layers on the shared representation.
struct SelectiveHeads {
    Var f;
    Var g_logit;  // pre-sigmoid selection score
    Var g_prob;
    Var h;
};

struct SelectiveModel {
    MLPBackbone backbone;
    DenseLayer f_head;
    DenseLayer g_hidden;
    DenseLayer g_out;
    DenseLayer h_head;

    SelectiveModel() = default;
    SelectiveModel(const Architecture& arch, std::size_t input_width, std::size_t output_width,
                   std::uint64_t init_seed);

    SelectiveHeads forward(Tape& t, Var x, Mode mode);
    std::vector<Parameter*> parameters();
    std::size_t output_width() const { return f_head.out_width(); }
};

// Eval-mode forward on a fresh tape; no sampling involved. g_prob here is the
// confidence score used for coverage calibration: ordered exactly like the
// selection probability but squashed so it never rounds to 0 or 1 (the raw
// sigmoid saturates to 1.0 in double a little past logit 36 and erases the
// ranking among the most confident points).
struct Prediction {
    Tensor f;       // [m x out]
    Tensor g_prob;  // [m x 1], strictly inside (0,1)
    Tensor h;       // [m x out]
};
Prediction predict(SelectiveModel& model, const Tensor& X);

}  // namespace selnet
