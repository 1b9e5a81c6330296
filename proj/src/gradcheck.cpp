#include "gradcheck.hpp"

#include <cmath>
#include <cstdio>

#include "nn.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "selective.hpp"

namespace selnet {

bool GradCheckReport::all_pass() const {
    for (const GradCheckResult& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

std::string GradCheckReport::to_text() const {
    std::string out;
    for (const GradCheckResult& r : results) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %-38s max_err=%.3e%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                      r.max_err, r.detail.empty() ? "" : "  ", r.detail.c_str());
        out += buf;
    }
    out += all_pass() ? "all gradient checks passed\n" : "GRADIENT CHECK FAILURES PRESENT\n";
    return out;
}

GradCheckResult finite_difference_check(const std::string& name, const GraphBuilder& build,
                                        const std::vector<Tensor>& leaves, double step, double tol) {
    constexpr double kAbsFloor = 1e-7;  // treat both-sides-tiny as agreement
    GradCheckResult res;
    res.name = name;

    std::vector<Tensor> analytic;
    {
        Tape t;
        std::vector<Var> vars;
        vars.reserve(leaves.size());
        for (const Tensor& l : leaves) vars.push_back(t.leaf(l));
        Var loss = build(t, vars);
        if (t.value(loss).size() != 1) {
            res.detail = "loss is not scalar";
            return res;
        }
        t.backward(loss);
        for (Var v : vars) analytic.push_back(t.grad(v));
    }

    auto eval = [&](const std::vector<Tensor>& ls) {
        Tape t;
        std::vector<Var> vars;
        vars.reserve(ls.size());
        for (const Tensor& l : ls) vars.push_back(t.leaf(l));
        return t.value(build(t, vars)).item();
    };

    double worst = 0.0;
    std::string worst_at;
    std::vector<Tensor> probe = leaves;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        for (std::size_t e = 0; e < leaves[li].size(); ++e) {
            double orig = probe[li].at(e);
            probe[li].at(e) = orig + step;
            double fp = eval(probe);
            probe[li].at(e) = orig - step;
            double fm = eval(probe);
            probe[li].at(e) = orig;

            double numeric = (fp - fm) / (2.0 * step);
            double a = analytic[li].at(e);
            double diff = std::fabs(a - numeric);
            if (diff <= kAbsFloor) continue;
            double rel = diff / std::max(std::fabs(a), std::fabs(numeric));
            if (rel > worst) {
                worst = rel;
                worst_at = "leaf " + std::to_string(li) + " elem " + std::to_string(e);
            }
        }
    }
    res.max_err = worst;
    res.pass = worst < tol;
    if (!res.pass) res.detail = "worst at " + worst_at;
    return res;
}

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
    return t;
}

// keeps every element at least `margin` away from the kink at `knot`
Tensor rand_away_from(Shape shape, Rng& rng, double lo, double hi, double knot, double margin) {
    Tensor t = rand_tensor(std::move(shape), rng, lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i)
        if (std::fabs(t.at(i) - knot) < margin) t.at(i) = knot + (t.at(i) >= knot ? margin : -margin);
    return t;
}

void check_ops(GradCheckReport& rep) {
    Rng rng(20240817);
    // a fixed weighting makes reduce_sum losses sensitive to every element
    auto weighted_sum = [](Tape& t, Var x, const Tensor& w) { return t.reduce_sum(t.mul(x, t.leaf(w))); };

    {
        Tensor A = rand_tensor({3, 4}, rng, -1.5, 1.5);
        Tensor B = rand_tensor({4, 2}, rng, -1.5, 1.5);
        Tensor W = rand_tensor({3, 2}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.matmul",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.matmul(v[0], v[1]), W); }, {A, B}));
    }
    {
        Tensor A = rand_tensor({2, 5}, rng, -2.0, 2.0);
        Tensor B = rand_tensor({2, 5}, rng, -2.0, 2.0);
        Tensor W = rand_tensor({2, 5}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.add",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.add(v[0], v[1]), W); }, {A, B}));
        rep.results.push_back(finite_difference_check(
            "op.sub",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.sub(v[0], v[1]), W); }, {A, B}));
        rep.results.push_back(finite_difference_check(
            "op.mul",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.mul(v[0], v[1]), W); }, {A, B}));
    }
    {
        Tensor A = rand_tensor({2, 4}, rng, -2.0, 2.0);
        Tensor B = rand_away_from({2, 4}, rng, -2.0, 2.0, 0.0, 0.5);
        Tensor W = rand_tensor({2, 4}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.div",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.div(v[0], v[1]), W); }, {A, B}));
    }
    {
        Tensor X = rand_tensor({4, 3}, rng, -2.0, 2.0);
        Tensor b = rand_tensor({3}, rng, -1.0, 1.0);
        Tensor W = rand_tensor({4, 3}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.add_bias",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.add_bias(v[0], v[1]), W); }, {X, b}));
    }
    {
        Tensor X = rand_away_from({3, 4}, rng, -2.0, 2.0, 0.0, 0.2);
        Tensor W = rand_tensor({3, 4}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.relu", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.relu(v[0]), W); }, {X}));
        rep.results.push_back(finite_difference_check(
            "op.sigmoid", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.sigmoid(v[0]), W); },
            {X}));
        rep.results.push_back(finite_difference_check(
            "op.exp", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.exp(v[0]), W); }, {X}));
        rep.results.push_back(finite_difference_check(
            "op.neg", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.neg(v[0]), W); }, {X}));
        rep.results.push_back(finite_difference_check(
            "op.square", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.square(v[0]), W); }, {X}));
        rep.results.push_back(finite_difference_check(
            "op.scale",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.scale(v[0], -1.7), W); }, {X}));
    }
    {
        Tensor X = rand_tensor({3, 4}, rng, 0.4, 3.0);
        Tensor W = rand_tensor({3, 4}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.log", [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.log(v[0]), W); }, {X}));
    }
    {
        Tensor X = rand_away_from({3, 4}, rng, -1.0, 2.0, 0.5, 0.2);
        Tensor W = rand_tensor({3, 4}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.max_scalar",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.max_scalar(v[0], 0.5), W); }, {X}));
    }
    {
        Tensor X = rand_tensor({3, 5}, rng, -2.0, 2.0);
        Tensor W = rand_tensor({3, 5}, rng, 0.3, 1.7);
        rep.results.push_back(finite_difference_check(
            "op.softmax_rows",
            [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, t.softmax_rows(v[0]), W); }, {X}));
    }
    {
        Tensor X = rand_tensor({4, 3}, rng, -2.0, 2.0);
        rep.results.push_back(finite_difference_check(
            "op.reduce_mean", [&](Tape& t, const std::vector<Var>& v) { return t.reduce_mean(v[0]); }, {X}));
        rep.results.push_back(finite_difference_check(
            "op.reduce_sum", [&](Tape& t, const std::vector<Var>& v) { return t.reduce_sum(v[0]); }, {X}));
    }
    {
        // stop_gradient cannot be finite-differenced (forward keeps the
        // dependence); assert the analytic gradient is exactly zero instead
        Tensor X = rand_tensor({2, 3}, rng, -1.0, 1.0);
        Tape t;
        Var x = t.leaf(X);
        Var loss = t.reduce_sum(t.stop_gradient(t.square(x)));
        t.backward(loss);
        double mx = 0.0;
        for (double g : t.grad(x).data()) mx = std::max(mx, std::fabs(g));
        rep.results.push_back({"op.stop_gradient", mx == 0.0, mx, mx == 0.0 ? "" : "gradient leaked"});
    }
}

void check_models(GradCheckReport& rep) {
    // full model graphs; fixed seeds keep every activation clear of kinks run-to-run
    std::size_t d = 8, b = 8;
    Rng data_rng(77);
    Tensor X = rand_tensor({b, d}, data_rng, -1.5, 1.5);
    Tensor y = rand_tensor({b, 1}, data_rng, -1.0, 1.0);
    Tensor gum1 = sample_gumbel({b, 1}, data_rng);
    Tensor gum2 = sample_gumbel({b, 1}, data_rng);

    {
        SelectiveModel model(architecture("toy"), d, 1, 4242);
        auto build = [&](Tape& t, const std::vector<Var>& v) {
            SelectiveHeads heads = model.forward(t, v[0], Mode::Train);
            Var lf = per_sample_loss(t, LossKind::Squared, heads.f, v[1]);
            Var lh = per_sample_loss(t, LossKind::Squared, heads.h, v[1]);
            return total_loss(t, lf, heads.g_prob, lh, 0.7, 32.0, 0.5).total;
        };
        rep.results.push_back(finite_difference_check("model.soft_total_loss", build, {X, y}, 1e-5, 2e-4));
    }
    {
        SelectiveModel model(architecture("toy"), d, 1, 4243);
        auto build = [&](Tape& t, const std::vector<Var>& v) {
            SelectiveHeads heads = model.forward(t, v[0], Mode::Train);
            Var lf = per_sample_loss(t, LossKind::Squared, heads.f, v[1]);
            Var lh = per_sample_loss(t, LossKind::Squared, heads.h, v[1]);
            SelectionSample s = gumbel_softmax_binary_with_noise(t, heads.g_prob, 0.7, gum1, gum2);
            return total_loss(t, lf, s.z_soft, lh, 0.7, 32.0, 0.5).total;
        };
        rep.results.push_back(finite_difference_check("model.gumbel_soft_path", build, {X, y}, 1e-5, 2e-4));
    }
    {
        // batch-norm hidden layer, training mode: exercises the fused backward
        SelectiveModel model(architecture("ccs"), d, 1, 4244);
        auto build = [&](Tape& t, const std::vector<Var>& v) {
            SelectiveHeads heads = model.forward(t, v[0], Mode::Train);
            Var lf = per_sample_loss(t, LossKind::Squared, heads.f, v[1]);
            Var lh = per_sample_loss(t, LossKind::Squared, heads.h, v[1]);
            return total_loss(t, lf, heads.g_prob, lh, 0.8, 32.0, 0.5).total;
        };
        rep.results.push_back(finite_difference_check("model.batchnorm_total_loss", build, {X, y}, 1e-5, 2e-4));
    }
    {
        // straight-through: forward equals the hard sample; the gradient that
        // reaches g is exactly the soft path's gradient
        SelectiveModel model(architecture("toy"), d, 1, 4245);
        Tape t;
        Var x = t.leaf(X);
        SelectiveHeads heads = model.forward(t, x, Mode::Train);
        SelectionSample s = gumbel_softmax_binary_with_noise(t, heads.g_prob, 0.7, gum1, gum2);

        const Tensor& z_st_val = t.value(s.z_st);
        const Tensor& hard_ref = t.value(s.z_hard);
        bool hard_ok = true, binary_ok = true, nontrivial = false;
        for (std::size_t i = 0; i < z_st_val.size(); ++i) {
            if (z_st_val.at(i) != hard_ref.at(i)) hard_ok = false;
            if (z_st_val.at(i) != 0.0 && z_st_val.at(i) != 1.0) binary_ok = false;
            if (z_st_val.at(i) == 1.0) nontrivial = true;
        }
        rep.results.push_back({"st.forward_is_hard_binary", hard_ok && binary_ok && nontrivial, 0.0,
                               hard_ok && binary_ok ? "" : "forward mismatch"});

        // linear functional of z: d(loss)/dg must agree exactly between paths
        Var w = t.leaf(rand_tensor({z_st_val.rows(), 1}, data_rng, 0.25, 1.75));
        t.backward(t.reduce_sum(t.mul(s.z_st, w)));
        Tensor g_st = t.grad(heads.g_prob);
        t.backward(t.reduce_sum(t.mul(s.z_soft, w)));
        Tensor g_soft = t.grad(heads.g_prob);
        double worst_z = 0.0;
        bool grads_live = false;
        for (std::size_t i = 0; i < g_st.size(); ++i) {
            worst_z = std::max(worst_z, std::fabs(g_st.at(i) - g_soft.at(i)));
            if (g_soft.at(i) != 0.0) grads_live = true;
        }
        bool ok = worst_z == 0.0 && grads_live;
        rep.results.push_back({"st.backward_is_soft", ok, worst_z, ok ? "" : "gradient path mismatch"});
    }
}

void check_sampler(GradCheckReport& rep) {
    constexpr double kEuler = 0.57721566490153286;
    {
        Rng rng(99);
        std::size_t n = 1000000;
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Tensor g = sample_gumbel({1}, rng);
            sum += g.at(0);
            sumsq += g.at(0) * g.at(0);
        }
        double mean = sum / n;
        double var = sumsq / n - mean * mean;
        double mean_err = std::fabs(mean - kEuler);
        double var_err = std::fabs(var - 1.6449340668482264);  // pi^2/6
        bool ok = mean_err < 0.01 && var_err < 0.02;
        rep.results.push_back({"gumbel.moments", ok, std::max(mean_err, var_err),
                               ok ? "" : "mean/variance off for Gumbel(0,1)"});
    }
    {
        Rng rng(100);
        std::vector<double> p = {0.2, 0.5, 0.3};
        std::vector<std::size_t> counts(3, 0);
        std::size_t n = 1000000;
        for (std::size_t i = 0; i < n; ++i) ++counts[gumbel_max_sample(p, rng)];
        double worst = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            worst = std::max(worst, std::fabs(static_cast<double>(counts[i]) / n - p[i]));
        bool ok = worst < 0.005;
        rep.results.push_back({"gumbel.max_trick_frequencies", ok, worst, ok ? "" : "category frequency off"});
    }
    {
        // hard samples of the binary estimator select with frequency g
        double worst = 0.0;
        std::uint64_t seed = 101;
        for (double g : {0.1, 0.3, 0.5, 0.7, 0.9})
            worst = std::max(worst, std::fabs(gumbel_hard_selection_rate(g, 1000000, seed++) - g));
        bool ok = worst < 0.005;
        rep.results.push_back({"gumbel.binary_hard_rate", ok, worst, ok ? "" : "selection rate off"});
    }
    {
        // the k-way relaxation concentrates on the sampled vertex as tau -> 0
        Rng rng(102);
        std::vector<double> p = {0.3, 0.7};
        std::size_t n = 200000;
        double mean1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean1 += gumbel_softmax_sample(p, 0.01, rng)[1];
        mean1 /= n;
        double err = std::fabs(mean1 - p[1]);
        bool ok = err < 0.005;
        rep.results.push_back({"gumbel.softmax_low_tau_concentration", ok, err, ok ? "" : "relaxed mean off"});
    }
}

}  // namespace

double gumbel_hard_selection_rate(double g, std::size_t draws, std::uint64_t seed) {
    Rng rng(seed);
    std::size_t done = 0, selected = 0;
    while (done < draws) {
        std::size_t b = std::min<std::size_t>(100000, draws - done);
        Tape t;
        Var gp = t.leaf(Tensor::full({b, 1}, g));
        SelectionSample s = gumbel_softmax_binary(t, gp, 0.5, rng);
        const Tensor& hard = t.value(s.z_hard);
        for (std::size_t i = 0; i < b; ++i)
            if (hard.at(i) == 1.0) ++selected;
        done += b;
    }
    return static_cast<double>(selected) / static_cast<double>(draws);
}

GradCheckReport run_gradient_checks() {
    GradCheckReport rep;
    check_ops(rep);
    check_models(rep);
    check_sampler(rep);
    return rep;
}

}  // namespace selnet
