#include "selective.hpp"

#include <cmath>
#include <stdexcept>

namespace selnet {

namespace {
constexpr double kUnifEps = 1e-12;
}  // namespace

double gumbel_from_uniform(double u) {
    if (u < kUnifEps) u = kUnifEps;
    if (u > 1.0 - kUnifEps) u = 1.0 - kUnifEps;
    return -std::log(-std::log(u));
}

SelectionMode selection_mode_from_string(const std::string& s) {
    if (s == "gumbel") return SelectionMode::Gumbel;
    if (s == "soft") return SelectionMode::Soft;
    throw std::invalid_argument("unknown selection mode '" + s + "' (expected gumbel|soft)");
}

std::string to_string(SelectionMode m) { return m == SelectionMode::Gumbel ? "gumbel" : "soft"; }

void TemperatureSchedule::validate() const {
    if (!(tau0 > 0.0)) throw std::invalid_argument("temperature tau0 must be positive");
    if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("temperature decay rate must be in (0, 1]");
    if (step_epochs == 0) throw std::invalid_argument("temperature step_epochs must be >= 1");
}

double TemperatureSchedule::at_epoch(std::size_t epoch) const {
    return tau0 * std::pow(rate, static_cast<double>(epoch / step_epochs));
}

Tensor sample_gumbel(const Shape& shape, Rng& rng) {
    Tensor out = Tensor::zeros(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = gumbel_from_uniform(rng.uniform01());
    return out;
}

std::size_t gumbel_max_sample(std::span<const double> probs, Rng& rng) {
    if (probs.empty()) throw std::invalid_argument("gumbel_max_sample: empty probability vector");
    std::size_t best = 0;
    double best_a = -1e300;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = probs[i] > kUnifEps ? probs[i] : kUnifEps;
        double a = std::log(p) + gumbel_from_uniform(rng.uniform01());
        if (a > best_a) {
            best_a = a;
            best = i;
        }
    }
    return best;
}

std::vector<double> gumbel_softmax_sample(std::span<const double> probs, double tau, Rng& rng) {
    if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: tau must be positive");
    std::vector<double> a(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = probs[i] > kUnifEps ? probs[i] : kUnifEps;
        a[i] = (std::log(p) + gumbel_from_uniform(rng.uniform01())) / tau;
    }
    double mx = a[0];
    for (double v : a) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : a) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : a) v /= sum;
    return a;
}

SelectionSample gumbel_softmax_binary_with_noise(Tape& t, Var g_prob, double tau, const Tensor& gum_sel,
                                                 const Tensor& gum_abs) {
    if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_binary: tau must be positive");
    const Tensor& gv = t.value(g_prob);
    if (!gv.same_shape(gum_sel) || !gv.same_shape(gum_abs))
        throw std::invalid_argument("gumbel_softmax_binary: noise shape mismatch");

    Var ones = t.leaf(Tensor::full(gv.shape(), 1.0));
    Var n_sel = t.leaf(gum_sel);
    Var n_abs = t.leaf(gum_abs);
    // perturbed logits for (select, abstain); log clamps at 1e-12 so g in {0,1} stays finite
    Var a_sel = t.add(t.log(g_prob), n_sel);
    Var a_abs = t.add(t.log(t.sub(ones, g_prob)), n_abs);

    // two-way softmax((a_sel, a_abs)/tau) collapses to a sigmoid of the logit gap
    Var z_soft = t.sigmoid(t.scale(t.sub(a_sel, a_abs), 1.0 / tau));

    Tensor hard = Tensor::zeros(gv.shape());
    const Tensor& asel_v = t.value(a_sel);
    const Tensor& aabs_v = t.value(a_abs);
    for (std::size_t i = 0; i < hard.size(); ++i) hard.at(i) = asel_v.at(i) >= aabs_v.at(i) ? 1.0 : 0.0;
    Var z_hard = t.leaf(std::move(hard));

    // hard + (soft - soft) == hard exactly in the forward pass; backward sees
    // only the live soft branch
    Var z_st = t.add(z_hard, t.sub(z_soft, t.stop_gradient(z_soft)));
    return {g_prob, z_hard, z_soft, z_st};
}

SelectionSample gumbel_softmax_binary(Tape& t, Var g_prob, double tau, Rng& rng) {
    const Shape& shape = t.value(g_prob).shape();
    Tensor gum_sel = sample_gumbel(shape, rng);
    Tensor gum_abs = sample_gumbel(shape, rng);
    return gumbel_softmax_binary_with_noise(t, g_prob, tau, gum_sel, gum_abs);
}

Var per_sample_loss(Tape& t, LossKind kind, Var pred, Var target) {
    const Tensor& pv = t.value(pred);
    const Tensor& tv = t.value(target);
    if (pv.rank() != 2 || !pv.same_shape(tv))
        throw std::invalid_argument("per_sample_loss: predictions and targets must both be [m x k], got " +
                                    pv.shape_str() + " and " + tv.shape_str());
    std::size_t k = pv.cols();
    auto row_sum = [&](Var x) {
        if (k == 1) return x;
        return t.matmul(x, t.leaf(Tensor::full({k, 1}, 1.0)));
    };
    switch (kind) {
        case LossKind::Squared:
            return row_sum(t.square(t.sub(pred, target)));
        case LossKind::Absolute: {
            Var d = t.sub(pred, target);
            return row_sum(t.add(t.relu(d), t.relu(t.neg(d))));
        }
        case LossKind::CrossEntropy: {
            Var logp = t.log(t.softmax_rows(pred));
            return t.neg(row_sum(t.mul(target, logp)));
        }
    }
    throw std::logic_error("unreachable loss kind");
}

Var empirical_coverage(Tape& t, Var z) { return t.reduce_mean(z); }

Var selective_risk(Tape& t, Var per_loss, Var z, Var coverage) {
    const Tensor& lv = t.value(per_loss);
    const Tensor& zv = t.value(z);
    if (!lv.same_shape(zv))
        throw std::invalid_argument("selective_risk: loss shape " + lv.shape_str() + " vs selection shape " +
                                    zv.shape_str());
    // denominator guarded at 1e-8: an all-abstain batch yields 0 / 1e-8 = 0
    // and the coverage penalty takes over; gradient flows through both sides
    return t.div(t.reduce_mean(t.mul(per_loss, z)), t.max_scalar(coverage, kCoverageGuard));
}

Var coverage_penalty(Tape& t, double target_coverage, Var coverage) {
    Var gap = t.sub(t.leaf(Tensor::scalar(target_coverage)), coverage);
    return t.square(t.max_scalar(gap, 0.0));
}

SelectiveLossTerms total_loss(Tape& t, Var per_loss_f, Var z, Var per_loss_aux, double target_coverage,
                              double lambda, double alpha) {
    SelectiveLossTerms terms;
    terms.coverage = empirical_coverage(t, z);
    terms.risk = selective_risk(t, per_loss_f, z, terms.coverage);
    terms.penalty = coverage_penalty(t, target_coverage, terms.coverage);
    terms.selective = t.add(terms.risk, t.scale(terms.penalty, lambda));
    Var aux = t.reduce_mean(per_loss_aux);
    terms.total = t.add(t.scale(terms.selective, alpha), t.scale(aux, 1.0 - alpha));
    return terms;
}

SelectiveModel::SelectiveModel(const Architecture& arch, std::size_t input_width, std::size_t output_width,
                               std::uint64_t init_seed) {
    Rng rng(init_seed);
    backbone = MLPBackbone(arch, input_width, rng);
    std::size_t w = backbone.output_width();
    f_head = DenseLayer(arch.id + ".f", w, output_width, rng);
    g_hidden = DenseLayer(arch.id + ".g_hidden", w, 16, rng);
    g_out = DenseLayer(arch.id + ".g_out", 16, 1, rng);
    h_head = DenseLayer(arch.id + ".h", w, output_width, rng);
}

SelectiveHeads SelectiveModel::forward(Tape& t, Var x, Mode mode) {
    Var rep = backbone.forward(t, x, mode);
    SelectiveHeads heads;
    heads.f = f_head.forward(t, rep);
    heads.g_logit = g_out.forward(t, t.relu(g_hidden.forward(t, rep)));
    heads.g_prob = t.sigmoid(heads.g_logit);
    heads.h = h_head.forward(t, rep);
    return heads;
}

std::vector<Parameter*> SelectiveModel::parameters() {
    std::vector<Parameter*> out = backbone.parameters();
    f_head.collect(out);
    g_hidden.collect(out);
    g_out.collect(out);
    h_head.collect(out);
    return out;
}

Prediction predict(SelectiveModel& model, const Tensor& X) {
    Tape t;
    Var x = t.leaf(X);
    SelectiveHeads heads = model.forward(t, x, Mode::Eval);
    // rank-preserving squash of the selection logit; see the header note
    Tensor conf = t.value(heads.g_logit);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        double l = conf.at(i);
        conf.at(i) = 0.5 * (1.0 + l / (1.0 + std::fabs(l)));
    }
    return {t.value(heads.f), std::move(conf), t.value(heads.h)};
}

}  // namespace selnet
