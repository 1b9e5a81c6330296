#include "tape.hpp"

#include <cmath>
#include <stdexcept>

namespace selnet {

namespace {

std::atomic<std::uint64_t> g_param_uid{1};

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// c += or = a(m x k) * b(k x n), row-major, ikj order so the inner loop is a
// contiguous fused multiply-add over rows of b.
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            double aip = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// c += a(m x n) * b(k x n)^T -> (m x k); rows of a dotted with rows of b.
void matmul_nt_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
            c[i * k + p] += s;
        }
    }
}

// c += a(m x k)^T * b(m x n) -> (k x n)
void matmul_tn_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double aip = ai[p];
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
}

}  // namespace

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), uid(g_param_uid.fetch_add(1)) {}

const Tensor* GradientMap::find(const Parameter& p) const {
    auto it = grads_.find(p.uid);
    return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& GradientMap::at(const Parameter& p) const {
    const Tensor* g = find(p);
    if (!g) throw std::out_of_range("no gradient for parameter '" + p.name + "'");
    return *g;
}

void GradientMap::add(std::uint64_t uid, Tensor grad) { grads_[uid] = std::move(grad); }

void Tape::check(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw std::logic_error("Var does not belong to this tape");
}

const Tape::Node& Tape::node(Var v) const {
    check(v);
    return nodes_[v.id];
}

Var Tape::push(std::string op, std::vector<std::uint32_t> inputs, Tensor value, BackwardFn backward) {
    Node n;
    n.op = std::move(op);
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
    if (value.size() == 0) throw std::invalid_argument("leaf: empty tensor");
    return push("leaf", {}, std::move(value), nullptr);
}

Var Tape::param(Parameter& p) {
    if (p.uid == 0) throw std::invalid_argument("param: parameter was not constructed with a name/value");
    auto it = param_nodes_.find(p.uid);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = push("param", {}, p.value, nullptr);
    nodes_[v.id].param_uid = p.uid;
    param_nodes_[p.uid] = v.id;
    return v;
}

void Tape::accumulate(std::uint32_t id, const Tensor& delta) {
    Tensor& g = nodes_[id].grad;
    check_same_shape("accumulate", g, delta);
    auto gd = g.data();
    auto dd = delta.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += dd[i];
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (av.rank() != 2 || bv.rank() != 2)
        throw std::invalid_argument("matmul: expects rank-2 operands, got " + av.shape_str() + " and " + bv.shape_str());
    if (av.cols() != bv.rows())
        throw std::invalid_argument("matmul: inner dimensions differ, " + av.shape_str() + " * " + bv.shape_str());
    std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out = Tensor::zeros({m, n});
    matmul_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
    std::uint32_t ai = a.id, bi = b.id;
    return push("matmul", {ai, bi}, std::move(out), [ai, bi, m, k, n](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& avv = t.value_of(ai);
        const Tensor& bvv = t.value_of(bi);
        matmul_nt_accum(g.data().data(), bvv.data().data(), t.nodes_[ai].grad.data().data(), m, n, k);
        matmul_tn_accum(avv.data().data(), g.data().data(), t.nodes_[bi].grad.data().data(), m, k, n);
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape("add", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += bv.at(i);
    std::uint32_t ai = a.id, bi = b.id;
    return push("add", {ai, bi}, std::move(out), [ai, bi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        t.accumulate(ai, g);
        t.accumulate(bi, g);
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape("sub", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= bv.at(i);
    std::uint32_t ai = a.id, bi = b.id;
    return push("sub", {ai, bi}, std::move(out), [ai, bi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        t.accumulate(ai, g);
        Tensor& gb = t.nodes_[bi].grad;
        for (std::size_t i = 0; i < gb.size(); ++i) gb.at(i) -= g.at(i);
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape("mul", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= bv.at(i);
    std::uint32_t ai = a.id, bi = b.id;
    return push("mul", {ai, bi}, std::move(out), [ai, bi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& avv = t.value_of(ai);
        const Tensor& bvv = t.value_of(bi);
        Tensor& ga = t.nodes_[ai].grad;
        Tensor& gb = t.nodes_[bi].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.at(i) += g.at(i) * bvv.at(i);
            gb.at(i) += g.at(i) * avv.at(i);
        }
    });
}

Var Tape::div(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape("div", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double d = bv.at(i);
        if (d >= 0.0 && d < kDivEps) d = kDivEps;
        if (d < 0.0 && d > -kDivEps) d = -kDivEps;
        out.at(i) /= d;
    }
    std::uint32_t ai = a.id, bi = b.id;
    return push("div", {ai, bi}, std::move(out), [ai, bi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& avv = t.value_of(ai);
        const Tensor& bvv = t.value_of(bi);
        Tensor& ga = t.nodes_[ai].grad;
        Tensor& gb = t.nodes_[bi].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double d = bvv.at(i);
            bool clamped = d > -kDivEps && d < kDivEps;
            if (clamped) d = (d >= 0.0) ? kDivEps : -kDivEps;
            ga.at(i) += g.at(i) / d;
            // inside the clamp the output is constant in the denominator
            if (!clamped) gb.at(i) += -g.at(i) * avv.at(i) / (d * d);
        }
    });
}

Var Tape::add_bias(Var x, Var b) {
    const Tensor& xv = node(x).value;
    const Tensor& bv = node(b).value;
    if (xv.rank() != 2 || bv.rank() != 1 || bv.shape()[0] != xv.cols())
        throw std::invalid_argument("add_bias: expects [m x n] and [n], got " + xv.shape_str() + " and " + bv.shape_str());
    std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bv.at(j);
    std::uint32_t xi = x.id, bi = b.id;
    return push("add_bias", {xi, bi}, std::move(out), [xi, bi, m, n](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        t.accumulate(xi, g);
        Tensor& gb = t.nodes_[bi].grad;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb.at(j) += g.at(i, j);
    });
}

Var Tape::relu(Var x) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = out.at(i) > 0.0 ? out.at(i) : 0.0;
    std::uint32_t xi = x.id;
    return push("relu", {xi}, std::move(out), [xi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& xvv = t.value_of(xi);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xvv.at(i) > 0.0) gx.at(i) += g.at(i);
    });
}

Var Tape::sigmoid(Var x) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = stable_sigmoid(out.at(i));
    std::uint32_t xi = x.id;
    return push("sigmoid", {xi}, std::move(out), [xi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& y = t.value_of(self);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx.at(i) += g.at(i) * y.at(i) * (1.0 - y.at(i));
    });
}

Var Tape::exp(Var x) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::exp(out.at(i));
    std::uint32_t xi = x.id;
    return push("exp", {xi}, std::move(out), [xi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& y = t.value_of(self);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx.at(i) += g.at(i) * y.at(i);
    });
}

Var Tape::log(Var x) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::log(out.at(i) > kLogEps ? out.at(i) : kLogEps);
    std::uint32_t xi = x.id;
    return push("log", {xi}, std::move(out), [xi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& xvv = t.value_of(xi);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xvv.at(i) > kLogEps) gx.at(i) += g.at(i) / xvv.at(i);
    });
}

Var Tape::neg(Var x) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = -out.at(i);
    std::uint32_t xi = x.id;
    return push("neg", {xi}, std::move(out), [xi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx.at(i) -= g.at(i);
    });
}

Var Tape::square(Var x) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= out.at(i);
    std::uint32_t xi = x.id;
    return push("square", {xi}, std::move(out), [xi](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& xvv = t.value_of(xi);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx.at(i) += 2.0 * xvv.at(i) * g.at(i);
    });
}

Var Tape::max_scalar(Var x, double s) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = out.at(i) > s ? out.at(i) : s;
    std::uint32_t xi = x.id;
    return push("max_scalar", {xi}, std::move(out), [xi, s](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& xvv = t.value_of(xi);
        Tensor& gx = t.nodes_[xi].grad;
        // strict inequality: the gradient at a tie is zero by convention
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xvv.at(i) > s) gx.at(i) += g.at(i);
    });
}

Var Tape::softmax_rows(Var x) {
    const Tensor& xv = node(x).value;
    if (xv.rank() != 2) throw std::invalid_argument("softmax_rows: expects rank-2, got " + xv.shape_str());
    std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        double mx = out.at(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double e = std::exp(out.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= sum;
    }
    std::uint32_t xi = x.id;
    return push("softmax_rows", {xi}, std::move(out), [xi, m, n](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& y = t.value_of(self);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var Tape::reduce_mean(Var x) {
    const Tensor& xv = node(x).value;
    double sum = 0.0;
    for (double v : xv.data()) sum += v;
    std::size_t n = xv.size();
    std::uint32_t xi = x.id;
    return push("reduce_mean", {xi}, Tensor::scalar(sum / static_cast<double>(n)),
                [xi, n](Tape& t, std::uint32_t self) {
                    double g = t.grad_of(self).item() / static_cast<double>(n);
                    Tensor& gx = t.nodes_[xi].grad;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx.at(i) += g;
                });
}

Var Tape::reduce_sum(Var x) {
    const Tensor& xv = node(x).value;
    double sum = 0.0;
    for (double v : xv.data()) sum += v;
    std::uint32_t xi = x.id;
    return push("reduce_sum", {xi}, Tensor::scalar(sum), [xi](Tape& t, std::uint32_t self) {
        double g = t.grad_of(self).item();
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < gx.size(); ++i) gx.at(i) += g;
    });
}

Var Tape::scale(Var x, double s) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= s;
    std::uint32_t xi = x.id;
    return push("scale", {xi}, std::move(out), [xi, s](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        Tensor& gx = t.nodes_[xi].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx.at(i) += s * g.at(i);
    });
}

Var Tape::stop_gradient(Var x) {
    return push("stop_gradient", {x.id}, node(x).value, nullptr);
}

Var Tape::custom(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
    std::vector<std::uint32_t> ids;
    ids.reserve(inputs.size());
    for (Var v : inputs) {
        check(v);
        ids.push_back(v.id);
    }
    return push(std::move(op), std::move(ids), std::move(value), std::move(backward));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) throw std::logic_error("grad requested before backward()");
    return n.grad;
}

GradientMap Tape::backward(Var loss) {
    check(loss);
    if (nodes_[loss.id].value.size() != 1)
        throw std::invalid_argument("backward: loss must be a single element, got shape " +
                                    nodes_[loss.id].value.shape_str());
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
    nodes_[loss.id].grad.at(0) = 1.0;
    for (std::uint32_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward) n.backward(*this, i);
    }
    GradientMap out;
    for (auto& [uid, id] : param_nodes_) out.add(uid, nodes_[id].grad);
    return out;
}

}  // namespace selnet
