#include <doctest.h>

#include <cmath>

#include "../src/gradcheck.hpp"
#include "../src/rng.hpp"
#include "../src/tape.hpp"
#include <stdexcept>

using namespace selnet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m.at(1, 2) == 6.0);
    CHECK(Tensor::scalar(4.5).item() == 4.5);
    CHECK_THROWS_AS(Tensor({2, 0}, {}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS((void)m.item(), std::logic_error);
    CHECK(all_finite(m));
    m.at(0, 0) = std::nan("");
    CHECK(!all_finite(m));
}

TEST_CASE("forward oracles for the op catalogue") {
    Tape t;
    Var a = t.leaf(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Var b = t.leaf(Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12}));
    const Tensor& mm = t.value(t.matmul(a, b));
    CHECK(mm.at(0, 0) == 58.0);
    CHECK(mm.at(0, 1) == 64.0);
    CHECK(mm.at(1, 0) == 139.0);
    CHECK(mm.at(1, 1) == 154.0);

    Var u = t.leaf(Tensor::vector({-1.0, 0.0, 2.0}));
    Var v = t.leaf(Tensor::vector({2.0, 4.0, -8.0}));
    const Tensor& relu = t.value(t.relu(u));
    CHECK(relu.at(0) == 0.0);
    CHECK(relu.at(1) == 0.0);
    CHECK(relu.at(2) == 2.0);
    CHECK(t.value(t.add(u, v)).at(0) == 1.0);
    CHECK(t.value(t.sub(u, v)).at(2) == 10.0);
    CHECK(t.value(t.mul(u, v)).at(2) == -16.0);
    CHECK(t.value(t.div(u, v)).at(0) == -0.5);
    CHECK(t.value(t.neg(u)).at(0) == 1.0);
    CHECK(t.value(t.square(v)).at(1) == 16.0);
    CHECK(t.value(t.scale(v, 0.5)).at(1) == 2.0);
    CHECK(t.value(t.max_scalar(u, 0.5)).at(0) == 0.5);
    CHECK(t.value(t.max_scalar(u, 0.5)).at(2) == 2.0);
    CHECK(t.value(t.sigmoid(t.leaf(Tensor::vector({0.0})))).at(0) == 0.5);
    CHECK(t.value(t.exp(t.leaf(Tensor::vector({1.0})))).at(0) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
    CHECK(t.value(t.log(t.leaf(Tensor::vector({std::exp(2.0)})))).at(0) == doctest::Approx(2.0).epsilon(1e-15));

    // log clamps at 1e-12 instead of producing -inf
    CHECK(t.value(t.log(t.leaf(Tensor::vector({0.0})))).at(0) == std::log(1e-12));

    Var x2 = t.leaf(Tensor::matrix(2, 2, {0.0, 0.0, 1.0, 3.0}));
    const Tensor& sm = t.value(t.softmax_rows(x2));
    CHECK(sm.at(0, 0) == 0.5);  // softmax([0, 0]) is exactly symmetric
    CHECK(sm.at(0, 1) == 0.5);
    CHECK(sm.at(1, 0) + sm.at(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sm.at(1, 1) == doctest::Approx(std::exp(2.0) / (1 + std::exp(2.0))).epsilon(1e-14));

    Var xb = t.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var bias = t.leaf(Tensor::vector({10, 20}));
    const Tensor& ab = t.value(t.add_bias(xb, bias));
    CHECK(ab.at(0, 0) == 11.0);
    CHECK(ab.at(1, 1) == 24.0);

    CHECK(t.value(t.reduce_mean(xb)).item() == 2.5);
    CHECK(t.value(t.reduce_sum(xb)).item() == 10.0);

    Var sg = t.stop_gradient(xb);
    CHECK(t.value(sg).at(1, 1) == 4.0);  // identity forward
}

TEST_CASE("backward hand oracles") {
    SUBCASE("d sum(x*x) / dx = 2x") {
        Tape t;
        Var x = t.leaf(Tensor::vector({3.0}));
        t.backward(t.reduce_sum(t.mul(x, x)));
        CHECK(t.grad(x).at(0) == 6.0);
    }
    SUBCASE("matmul product rule") {
        Tape t;
        Var a = t.leaf(Tensor::matrix(1, 2, {2.0, 3.0}));
        Var b = t.leaf(Tensor::matrix(2, 1, {5.0, 7.0}));
        t.backward(t.matmul(a, b));  // scalar 2*5 + 3*7 = 31
        CHECK(t.grad(a).at(0, 0) == 5.0);
        CHECK(t.grad(a).at(0, 1) == 7.0);
        CHECK(t.grad(b).at(0, 0) == 2.0);
        CHECK(t.grad(b).at(1, 0) == 3.0);
    }
    SUBCASE("division quotient rule") {
        Tape t;
        Var a = t.leaf(Tensor::vector({6.0}));
        Var b = t.leaf(Tensor::vector({3.0}));
        t.backward(t.reduce_sum(t.div(a, b)));
        CHECK(t.grad(a).at(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(t.grad(b).at(0) == doctest::Approx(-6.0 / 9.0).epsilon(1e-15));
    }
    SUBCASE("relu subgradient at kink is 0") {
        Tape t;
        Var x = t.leaf(Tensor::vector({0.0, -1.0, 2.0}));
        t.backward(t.reduce_sum(t.relu(x)));
        CHECK(t.grad(x).at(0) == 0.0);
        CHECK(t.grad(x).at(1) == 0.0);
        CHECK(t.grad(x).at(2) == 1.0);
    }
    SUBCASE("max_scalar tie gets zero gradient") {
        Tape t;
        Var x = t.leaf(Tensor::vector({0.5, 0.2, 0.9}));
        t.backward(t.reduce_sum(t.max_scalar(x, 0.5)));
        CHECK(t.grad(x).at(0) == 0.0);
        CHECK(t.grad(x).at(1) == 0.0);
        CHECK(t.grad(x).at(2) == 1.0);
    }
    SUBCASE("log clamp zone has zero gradient") {
        Tape t;
        Var x = t.leaf(Tensor::vector({0.0, 1e-13, 2.0}));
        t.backward(t.reduce_sum(t.log(x)));
        CHECK(t.grad(x).at(0) == 0.0);
        CHECK(t.grad(x).at(1) == 0.0);
        CHECK(t.grad(x).at(2) == 0.5);
    }
    SUBCASE("sigmoid derivative s(1-s)") {
        Tape t;
        Var x = t.leaf(Tensor::vector({0.0}));
        t.backward(t.reduce_sum(t.sigmoid(x)));
        CHECK(t.grad(x).at(0) == 0.25);
    }
    SUBCASE("stop_gradient blocks the path exactly") {
        Tape t;
        Var x = t.leaf(Tensor::vector({1.5, -2.0}));
        Var blocked = t.stop_gradient(t.square(x));
        Var open = t.scale(x, 3.0);
        t.backward(t.add(t.reduce_sum(blocked), t.reduce_sum(open)));
        CHECK(t.grad(x).at(0) == 3.0);
        CHECK(t.grad(x).at(1) == 3.0);
    }
    SUBCASE("grad accumulates over fan-out") {
        Tape t;
        Var x = t.leaf(Tensor::vector({2.0}));
        t.backward(t.add(t.mul(x, x), t.scale(x, 4.0)));  // x^2 + 4x -> 2x + 4 = 8
        CHECK(t.grad(x).at(0) == 8.0);
    }
}

TEST_CASE("backward requires a scalar loss and gradients reset per call") {
    Tape t;
    Var x = t.leaf(Tensor::vector({1.0, 2.0}));
    Var y = t.mul(x, x);
    CHECK_THROWS_WITH_AS(t.backward(y), doctest::Contains("backward"), std::invalid_argument);

    Var s = t.reduce_sum(y);
    t.backward(s);
    Tensor g1 = t.grad(x);
    t.backward(s);  // second sweep must not accumulate on top of the first
    CHECK(t.grad(x).at(0) == g1.at(0));
    CHECK(t.grad(x).at(1) == g1.at(1));
}

TEST_CASE("shape mismatches name the op and both shapes") {
    Tape t;
    Var a = t.leaf(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Var b = t.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("add"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2 3]"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2 2]"), std::invalid_argument);
    Var bias = t.leaf(Tensor::vector({1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(t.add_bias(b, bias), std::invalid_argument);
}

TEST_CASE("parameter nodes are memoized per tape and keyed by uid") {
    Parameter p("w", Tensor::vector({1.0, 2.0}));
    Tape t;
    Var v1 = t.param(p);
    Var v2 = t.param(p);
    CHECK(v1.id == v2.id);

    // the parameter appears twice in the loss; gradient must sum both uses
    GradientMap grads = t.backward(t.add(t.reduce_sum(t.param(p)), t.reduce_sum(t.param(p))));
    CHECK(grads.size() == 1);
    CHECK(grads.at(p).at(0) == 2.0);
    CHECK(grads.at(p).at(1) == 2.0);

    Parameter q("unused", Tensor::vector({5.0}));
    CHECK(grads.find(q) == nullptr);
}

TEST_CASE("linearity of backward") {
    Rng rng(31);
    Tensor X = rand_tensor({3, 3}, rng, -2.0, 2.0);
    double a = 1.7, b = -0.4;

    auto l1 = [](Tape& t, Var x) { return t.reduce_sum(t.sigmoid(t.mul(x, x))); };
    auto l2 = [](Tape& t, Var x) { return t.reduce_mean(t.exp(t.scale(x, 0.3))); };

    Tape t1;
    Var x1 = t1.leaf(X);
    t1.backward(l1(t1, x1));
    Tensor g1 = t1.grad(x1);

    Tape t2;
    Var x2 = t2.leaf(X);
    t2.backward(l2(t2, x2));
    Tensor g2 = t2.grad(x2);

    Tape t3;
    Var x3 = t3.leaf(X);
    t3.backward(t3.add(t3.scale(l1(t3, x3), a), t3.scale(l2(t3, x3), b)));
    for (std::size_t i = 0; i < X.size(); ++i)
        CHECK(t3.grad(x3).at(i) == doctest::Approx(a * g1.at(i) + b * g2.at(i)).epsilon(1e-10));
}

TEST_CASE("determinism: same seed, bit-identical values and gradients") {
    auto run = [] {
        Rng rng(999);
        Tensor X = rand_tensor({4, 4}, rng, -2.0, 2.0);
        Tape t;
        Var x = t.leaf(X);
        Var loss = t.reduce_mean(t.square(t.sigmoid(t.matmul(x, x))));
        t.backward(loss);
        return std::pair<Tensor, Tensor>(t.value(loss), t.grad(x));
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    CHECK(v1.item() == v2.item());
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1.at(i) == g2.at(i));
}

TEST_CASE("finite differences: mean(sigmoid(Wx+b)) and a deliberately corrupted op") {
    Rng rng(7);
    Tensor W = rand_tensor({4, 3}, rng, -1.0, 1.0);
    Tensor X = rand_tensor({2, 4}, rng, -1.5, 1.5);
    Tensor b = rand_tensor({3}, rng, -0.5, 0.5);
    GradCheckResult ok = finite_difference_check(
        "mean_sigmoid_affine",
        [](Tape& t, const std::vector<Var>& v) { return t.reduce_mean(t.sigmoid(t.add_bias(t.matmul(v[1], v[0]), v[2]))); },
        {W, X, b});
    INFO(ok.name, " err=", ok.max_err, " ", ok.detail);
    CHECK(ok.pass);
    CHECK(ok.max_err < 1e-4);

    // a broken backward rule must be caught and the failure must name the op
    GradCheckResult bad = finite_difference_check(
        "op.corrupted_double",
        [](Tape& t, const std::vector<Var>& v) {
            Tensor out = t.value(v[0]);
            for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= 2.0;
            Var wrong = t.custom("corrupted_double", {v[0]}, std::move(out),
                                 [](Tape& tt, std::uint32_t id) {
                                     // claims d(out)/d(in) = 5 instead of 2
                                     Tensor g = tt.grad_of(id);
                                     for (std::size_t i = 0; i < g.size(); ++i) g.at(i) *= 5.0;
                                     tt.accumulate(tt.inputs_of(id)[0], g);
                                 });
            return t.reduce_sum(wrong);
        },
        {X});
    CHECK(!bad.pass);
    CHECK(bad.name == "op.corrupted_double");

    GradCheckReport rep;
    rep.results.push_back(bad);
    CHECK(rep.to_text().find("corrupted_double") != std::string::npos);
    CHECK(rep.to_text().find("FAIL") != std::string::npos);
}

TEST_CASE("full gradient-check battery passes") {
    GradCheckReport rep = run_gradient_checks();
    INFO(rep.to_text());
    CHECK(rep.all_pass());
}
