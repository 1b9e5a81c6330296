#include "nn.hpp"

#include <cmath>
#include <stdexcept>

namespace selnet {

const Architecture& architecture(const std::string& id) {
    static const std::vector<Architecture> registry = {
        {"ccs", {{64, true}}},
        {"california", {{100, false}, {100, false}}},
        {"ames", {{100, true}, {100, true}}},
        {"toy", {{16, false}}},
    };
    for (const Architecture& a : registry)
        if (a.id == id) return a;
    throw std::invalid_argument("unknown architecture id '" + id + "'");
}

std::vector<std::string> architecture_ids() { return {"ccs", "california", "ames", "toy"}; }

DenseLayer::DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    W_ = Parameter(name + ".W", Tensor::matrix(in, out, std::move(w)));
    b_ = Parameter(name + ".b", Tensor::zeros({out}));
}

Var DenseLayer::forward(Tape& t, Var x) {
    return t.add_bias(t.matmul(x, t.param(W_)), t.param(b_));
}

void DenseLayer::collect(std::vector<Parameter*>& out) {
    out.push_back(&W_);
    out.push_back(&b_);
}

BatchNormLayer::BatchNormLayer(const std::string& name, std::size_t width)
    : gamma_(Parameter(name + ".gamma", Tensor::full({width}, 1.0))),
      beta_(Parameter(name + ".beta", Tensor::zeros({width}))),
      running_mean_(Tensor::zeros({width})),
      running_var_(Tensor::full({width}, 1.0)) {}

Var BatchNormLayer::forward(Tape& t, Var x, Mode mode) {
    const Tensor& xv = t.value(x);
    std::size_t w = gamma_.value.size();
    if (xv.rank() != 2 || xv.cols() != w)
        throw std::invalid_argument("batch norm: expected [m x " + std::to_string(w) + "], got " + xv.shape_str());
    std::size_t m = xv.rows();

    Var gv = t.param(gamma_);
    Var bv = t.param(beta_);

    std::vector<double> mean(w), invstd(w);
    if (mode == Mode::Train) {
        if (m < 2) throw std::invalid_argument("batch norm: training batch must have at least 2 rows, got 1");
        std::vector<double> var(w, 0.0);
        for (std::size_t j = 0; j < w; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += xv.at(i, j);
            mean[j] = s / static_cast<double>(m);
        }
        for (std::size_t j = 0; j < w; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                double d = xv.at(i, j) - mean[j];
                s += d * d;
            }
            var[j] = s / static_cast<double>(m);  // biased
        }
        for (std::size_t j = 0; j < w; ++j) {
            running_mean_.at(j) = (1.0 - kMomentum) * running_mean_.at(j) + kMomentum * mean[j];
            running_var_.at(j) = (1.0 - kMomentum) * running_var_.at(j) + kMomentum * var[j];
            invstd[j] = 1.0 / std::sqrt(var[j] + kEps);
        }
    } else {
        for (std::size_t j = 0; j < w; ++j) {
            mean[j] = running_mean_.at(j);
            invstd[j] = 1.0 / std::sqrt(running_var_.at(j) + kEps);
        }
    }

    Tensor xhat = Tensor::zeros({m, w});
    Tensor out = Tensor::zeros({m, w});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            double xh = (xv.at(i, j) - mean[j]) * invstd[j];
            xhat.at(i, j) = xh;
            out.at(i, j) = gamma_.value.at(j) * xh + beta_.value.at(j);
        }

    // One fused node; the usual batch-norm backward, with the batch-statistic
    // terms dropped in eval mode (mean/invstd are constants there).
    std::uint32_t xi = x.id, gi = gv.id, bi = bv.id;
    bool train = mode == Mode::Train;
    return t.custom("batch_norm", {x, gv, bv}, std::move(out),
                    [xi, gi, bi, m, w, train, xhat = std::move(xhat), invstd = std::move(invstd)](
                        Tape& t2, std::uint32_t self) {
                        const Tensor& g = t2.grad_of(self);
                        const Tensor& gamma = t2.value_of(gi);
                        Tensor& gx = t2.grad_ref(xi);
                        Tensor dgamma = Tensor::zeros({w});
                        Tensor dbeta = Tensor::zeros({w});
                        for (std::size_t j = 0; j < w; ++j) {
                            double sg = 0.0, sgx = 0.0;
                            for (std::size_t i = 0; i < m; ++i) {
                                sg += g.at(i, j);
                                sgx += g.at(i, j) * xhat.at(i, j);
                            }
                            dbeta.at(j) = sg;
                            dgamma.at(j) = sgx;
                            double gj = gamma.at(j);
                            if (train) {
                                double inv_m = 1.0 / static_cast<double>(m);
                                for (std::size_t i = 0; i < m; ++i) {
                                    double dxhat = g.at(i, j) * gj;
                                    gx.at(i, j) += invstd[j] * (dxhat - inv_m * sg * gj -
                                                                xhat.at(i, j) * inv_m * sgx * gj);
                                }
                            } else {
                                for (std::size_t i = 0; i < m; ++i) gx.at(i, j) += g.at(i, j) * gj * invstd[j];
                            }
                        }
                        t2.accumulate(gi, dgamma);
                        t2.accumulate(bi, dbeta);
                    });
}

void BatchNormLayer::collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

MLPBackbone::MLPBackbone(const Architecture& arch, std::size_t input_width, Rng& rng) : input_width_(input_width) {
    if (arch.hidden.empty()) throw std::invalid_argument("architecture '" + arch.id + "' has no hidden layers");
    std::size_t in = input_width;
    for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
        const ArchLayer& layer = arch.hidden[i];
        std::string name = arch.id + ".hidden" + std::to_string(i);
        dense_.emplace_back(name, in, layer.width, rng);
        if (layer.batch_norm)
            bn_.emplace_back(BatchNormLayer(name + ".bn", layer.width));
        else
            bn_.emplace_back(std::nullopt);
        in = layer.width;
    }
    output_width_ = in;
}

Var MLPBackbone::forward(Tape& t, Var x, Mode mode) {
    Var h = x;
    for (std::size_t i = 0; i < dense_.size(); ++i) {
        h = dense_[i].forward(t, h);
        if (bn_[i]) h = bn_[i]->forward(t, h, mode);
        h = t.relu(h);
    }
    return h;
}

std::vector<Parameter*> MLPBackbone::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t i = 0; i < dense_.size(); ++i) {
        dense_[i].collect(out);
        if (bn_[i]) bn_[i]->collect(out);
    }
    return out;
}

}  // namespace selnet
