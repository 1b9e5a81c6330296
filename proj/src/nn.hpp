#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tape.hpp"

namespace selnet {

enum class Mode { Train, Eval };

struct ArchLayer {
    std::size_t width;
    bool batch_norm;
};

// Hidden stack only: each entry is dense -> (batch norm) -> relu. Heads are
// attached by the selective model.
struct Architecture {
    std::string id;
    std::vector<ArchLayer> hidden;
};

const Architecture& architecture(const std::string& id);  // throws on unknown id
std::vector<std::string> architecture_ids();

class DenseLayer {
public:
    DenseLayer() = default;
    // He-uniform weights (bound sqrt(6/fan_in)), zero bias.
    DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

    Var forward(Tape& t, Var x);  // x*W + b
    std::size_t in_width() const { return W_.value.rows(); }
    std::size_t out_width() const { return W_.value.cols(); }
    Parameter& weight() { return W_; }
    Parameter& bias() { return b_; }
    void collect(std::vector<Parameter*>& out);

private:
    Parameter W_, b_;
};

class BatchNormLayer {
public:
    BatchNormLayer() = default;
    BatchNormLayer(const std::string& name, std::size_t width);

    // Train: batch statistics (biased variance), running stats updated with
    // momentum 0.1. Eval: running stats, nothing updated. Train requires at
    // least two rows; a singleton batch has no usable variance.
    Var forward(Tape& t, Var x, Mode mode);
    void collect(std::vector<Parameter*>& out);

    const Tensor& running_mean() const { return running_mean_; }
    const Tensor& running_var() const { return running_var_; }

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

private:
    Parameter gamma_, beta_;
    Tensor running_mean_, running_var_;
};

class MLPBackbone {
public:
    MLPBackbone() = default;
    MLPBackbone(const Architecture& arch, std::size_t input_width, Rng& rng);

    Var forward(Tape& t, Var x, Mode mode);
    std::size_t input_width() const { return input_width_; }
    std::size_t output_width() const { return output_width_; }
    std::vector<Parameter*> parameters();

private:
    std::size_t input_width_ = 0;
    std::size_t output_width_ = 0;
    std::vector<DenseLayer> dense_;
    std::vector<std::optional<BatchNormLayer>> bn_;
};

}  // namespace selnet
