#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bcrn {

struct DenseLayer {
    Eigen::MatrixXd weights; // rows = outputs, cols = inputs
    Eigen::VectorXd bias;
};

/// Parameter-shaped storage: gradients and Adam moments.
using LayerParams = std::vector<DenseLayer>;

/// Fully connected Q-network: ReLU on hidden layers, identity on the output.
class DenseNet {
public:
    DenseNet() = default;

    /// Gaussian fan-in initialization with zero biases. The first layer uses
    /// variance 1/fan_in (raw inputs), later layers 2/fan_in (ReLU inputs),
    /// which keeps pre-activation variance near the input variance.
    DenseNet(std::vector<int> layer_sizes, std::uint64_t seed);

    static DenseNet zeros(std::vector<int> layer_sizes);

    const std::vector<int>& layer_sizes() const { return sizes_; }
    std::size_t input_size() const { return static_cast<std::size_t>(sizes_.front()); }
    std::size_t output_size() const { return static_cast<std::size_t>(sizes_.back()); }
    std::size_t parameter_count() const;

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    Eigen::VectorXd forward(std::span<const double> input) const;

    /// Inputs as columns; returns outputs as columns.
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

    /// Last hidden layer activations for a batch (columns).
    Eigen::MatrixXd features(const Eigen::MatrixXd& inputs) const;

    /// Single output unit evaluated on a precomputed feature column.
    double output_from_features(const Eigen::Ref<const Eigen::VectorXd>& features, std::size_t unit) const;

    bool all_finite() const;

private:
    void check_input(std::size_t rows) const;

    std::vector<int> sizes_;
    std::vector<DenseLayer> layers_;
};

/// Deep copy; later updates to the source do not reach the copy.
DenseNet copy_weights(const DenseNet& source);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;
};

struct AdamState {
    AdamConfig config;
    LayerParams first_moment;
    LayerParams second_moment;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(const DenseNet& net, AdamConfig config = {});
};

/// One regression sample: the loss touches only output `action`.
struct Sample {
    std::vector<double> input;
    std::size_t action = 0;
    double target = 0.0;
};

struct LossGradient {
    double loss = 0.0;
    LayerParams gradient;
};

LayerParams zeros_like(const DenseNet& net);

/// Mean over the batch of (target - Q(input, action))^2 and its gradient.
LossGradient loss_and_gradient(const DenseNet& net, std::span<const Sample> batch);

/// Same, with the inputs already packed as columns.
LossGradient loss_and_gradient(const DenseNet& net, const Eigen::MatrixXd& inputs, std::span<const std::size_t> actions,
                               std::span<const double> targets);

/// As above, reusing the gradient buffers already held by `out`.
void loss_and_gradient_into(const DenseNet& net, const Eigen::MatrixXd& inputs, std::span<const std::size_t> actions,
                            std::span<const double> targets, LossGradient& out);

/// One Adam update from a precomputed gradient. Throws NumericalError on a
/// non-finite gradient.
void adam_update(DenseNet& net, AdamState& opt, const LayerParams& gradient);

/// Computes the loss, applies one Adam step and returns the pre-update loss.
double train_step(DenseNet& net, AdamState& opt, std::span<const Sample> batch);

/// Max relative error between `analytic` and central finite differences
/// (h = 1e-5) over every parameter, for the single-sample loss. Entries where
/// both magnitudes are below 1e-6 contribute their absolute error instead.
double gradient_check(const DenseNet& net, const Sample& sample, const LayerParams& analytic);
double gradient_check(const DenseNet& net, const Sample& sample);

/// Text checkpoint: layer sizes, parameters and optimizer state, doubles in
/// hexadecimal so a save/load/save cycle is byte-identical.
void save_checkpoint(std::ostream& out, const DenseNet& net, const AdamState& opt);
void load_checkpoint(std::istream& in, DenseNet& net, AdamState& opt);

/// Stable 64-bit digest of all parameters (bit patterns).
std::uint64_t parameter_hash(const DenseNet& net);

} // namespace bcrn
