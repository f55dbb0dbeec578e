#include "bcrn/nn.hpp"

#include "bcrn/errors.hpp"
#include "bcrn/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

namespace bcrn {

namespace {

constexpr const char* kCheckpointMagic = "bcrn-densenet";
constexpr int kCheckpointVersion = 1;

void check_sizes(const std::vector<int>& sizes)
{
    if (sizes.size() < 2) {
        throw ContractViolation("DenseNet needs at least an input and an output size");
    }
    for (int s : sizes) {
        if (s <= 0) {
            throw ContractViolation("DenseNet layer sizes must be positive");
        }
    }
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z)
{
    return z.cwiseMax(0.0);
}

} // namespace

DenseNet::DenseNet(std::vector<int> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes))
{
    check_sizes(sizes_);
    RandomStream rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const int fan_in = sizes_[l];
        const int fan_out = sizes_[l + 1];
        const double gain = l == 0 ? 1.0 : 2.0;
        const double sd = std::sqrt(gain / fan_in);
        DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
        // Column-major fill order is fixed, so the seed fully determines the net.
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
            for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
                layer.weights(i, j) = sd * rng.normal();
            }
        }
        layers_.push_back(std::move(layer));
    }
}

DenseNet DenseNet::zeros(std::vector<int> layer_sizes)
{
    check_sizes(layer_sizes);
    DenseNet net;
    net.sizes_ = std::move(layer_sizes);
    for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
        net.layers_.push_back({Eigen::MatrixXd::Zero(net.sizes_[l + 1], net.sizes_[l]), Eigen::VectorXd::Zero(net.sizes_[l + 1])});
    }
    return net;
}

std::size_t DenseNet::parameter_count() const
{
    std::size_t count = 0;
    for (const auto& layer : layers_) {
        count += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    }
    return count;
}

void DenseNet::check_input(std::size_t rows) const
{
    if (layers_.empty()) {
        throw ContractViolation("forward on an empty network");
    }
    if (rows != input_size()) {
        throw ContractViolation("input has " + std::to_string(rows) + " entries, network expects " +
                                std::to_string(input_size()));
    }
}

Eigen::VectorXd DenseNet::forward(std::span<const double> input) const
{
    check_input(input.size());
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::VectorXd z = layers_[l].weights * a + layers_[l].bias;
        a = l + 1 < layers_.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
    }
    return a;
}

Eigen::MatrixXd DenseNet::features(const Eigen::MatrixXd& inputs) const
{
    check_input(static_cast<std::size_t>(inputs.rows()));
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        Eigen::MatrixXd z = layers_[l].weights * a;
        z.colwise() += layers_[l].bias;
        a = relu(z);
    }
    return a;
}

Eigen::MatrixXd DenseNet::forward_batch(const Eigen::MatrixXd& inputs) const
{
    const Eigen::MatrixXd h = features(inputs);
    Eigen::MatrixXd out = layers_.back().weights * h;
    out.colwise() += layers_.back().bias;
    return out;
}

double DenseNet::output_from_features(const Eigen::Ref<const Eigen::VectorXd>& features, std::size_t unit) const
{
    const auto& head = layers_.back();
    const auto row = static_cast<Eigen::Index>(unit);
    return head.weights.row(row).dot(features) + head.bias(row);
}

bool DenseNet::all_finite() const
{
    return std::all_of(layers_.begin(), layers_.end(),
                       [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

DenseNet copy_weights(const DenseNet& source)
{
    return source;
}

LayerParams zeros_like(const DenseNet& net)
{
    LayerParams out;
    out.reserve(net.layers().size());
    for (const auto& layer : net.layers()) {
        out.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                       Eigen::VectorXd::Zero(layer.bias.size())});
    }
    return out;
}

AdamState::AdamState(const DenseNet& net, AdamConfig cfg)
    : config(cfg), first_moment(zeros_like(net)), second_moment(zeros_like(net))
{
}

void loss_and_gradient_into(const DenseNet& net, const Eigen::MatrixXd& inputs, std::span<const std::size_t> actions,
                            std::span<const double> targets, LossGradient& out)
{
    const auto batch = static_cast<Eigen::Index>(actions.size());
    if (batch == 0 || inputs.cols() != batch || targets.size() != actions.size()) {
        throw ContractViolation("loss_and_gradient: empty or inconsistent batch");
    }
    const auto& layers = net.layers();
    const std::size_t depth = layers.size();

    // activations[l] is the input to layer l.
    std::vector<Eigen::MatrixXd> activations;
    activations.reserve(depth);
    activations.push_back(inputs);
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        Eigen::MatrixXd z = layers[l].weights * activations.back();
        z.colwise() += layers[l].bias;
        activations.push_back(relu(z));
    }

    const auto& head = layers.back();
    const Eigen::MatrixXd& h = activations.back();
    out.loss = 0.0;
    if (out.gradient.size() != depth) {
        out.gradient = zeros_like(net);
    } else {
        for (auto& g : out.gradient) {
            g.weights.setZero();
            g.bias.setZero();
        }
    }
    auto& head_grad = out.gradient.back();
    Eigen::MatrixXd delta(h.rows(), batch);
    const double scale = 2.0 / static_cast<double>(batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const auto unit = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(i)]);
        if (unit < 0 || unit >= head.weights.rows()) {
            throw ContractViolation("loss_and_gradient: action index out of range");
        }
        const double q = head.weights.row(unit).dot(h.col(i)) + head.bias(unit);
        const double err = q - targets[static_cast<std::size_t>(i)];
        out.loss += err * err;
        const double g = scale * err;
        head_grad.weights.row(unit) += g * h.col(i).transpose();
        head_grad.bias(unit) += g;
        delta.col(i) = g * head.weights.row(unit).transpose();
    }
    out.loss /= static_cast<double>(batch);

    for (std::size_t l = depth - 1; l-- > 0;) {
        // activations[l + 1] = relu(z_l); its derivative is the positivity mask.
        delta = delta.cwiseProduct((activations[l + 1].array() > 0.0).cast<double>().matrix());
        out.gradient[l].weights = delta * activations[l].transpose();
        out.gradient[l].bias = delta.rowwise().sum();
        if (l > 0) {
            delta = layers[l].weights.transpose() * delta;
        }
    }
}

LossGradient loss_and_gradient(const DenseNet& net, const Eigen::MatrixXd& inputs, std::span<const std::size_t> actions,
                               std::span<const double> targets)
{
    LossGradient out;
    loss_and_gradient_into(net, inputs, actions, targets, out);
    return out;
}

LossGradient loss_and_gradient(const DenseNet& net, std::span<const Sample> batch)
{
    if (batch.empty()) {
        throw ContractViolation("loss_and_gradient: empty batch");
    }
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(net.input_size()), static_cast<Eigen::Index>(batch.size()));
    std::vector<std::size_t> actions(batch.size());
    std::vector<double> targets(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].input.size() != net.input_size()) {
            throw ContractViolation("sample input has wrong dimension");
        }
        inputs.col(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::VectorXd>(batch[i].input.data(), static_cast<Eigen::Index>(batch[i].input.size()));
        actions[i] = batch[i].action;
        targets[i] = batch[i].target;
    }
    return loss_and_gradient(net, inputs, actions, targets);
}

namespace {

// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
// p <- p - lr * (m / c1) / (sqrt(v / c2) + eps)
void adam_kernel(double* param, double* m, double* v, const double* g, std::size_t n, const AdamConfig& cfg,
                 double grad_scale, double step_size, double inv_sqrt_correction2)
{
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    const double eps = cfg.epsilon;
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = grad_scale * g[i];
        const double mi = b1 * m[i] + (1.0 - b1) * gi;
        const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
        m[i] = mi;
        v[i] = vi;
        param[i] -= step_size * mi / (std::sqrt(vi) * inv_sqrt_correction2 + eps);
    }
}

} // namespace

void adam_update(DenseNet& net, AdamState& opt, const LayerParams& gradient)
{
    if (gradient.size() != net.layers().size() || opt.first_moment.size() != gradient.size()) {
        throw ContractViolation("adam_update: gradient/optimizer shape mismatch");
    }
    double norm_sq = 0.0;
    for (const auto& g : gradient) {
        norm_sq += g.weights.squaredNorm() + g.bias.squaredNorm();
    }
    if (!std::isfinite(norm_sq)) {
        for (std::size_t l = 0; l < gradient.size(); ++l) {
            if (!gradient[l].weights.allFinite() || !gradient[l].bias.allFinite()) {
                throw NumericalError("non-finite gradient in layer " + std::to_string(l) + " at optimizer step " +
                                     std::to_string(opt.step + 1));
            }
        }
        throw NumericalError("gradient norm overflow at optimizer step " + std::to_string(opt.step + 1));
    }
    const auto& cfg = opt.config;
    const double shrink =
        cfg.clip_norm > 0.0 && norm_sq > cfg.clip_norm * cfg.clip_norm ? cfg.clip_norm / std::sqrt(norm_sq) : 1.0;

    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double step_size = cfg.learning_rate / (1.0 - std::pow(cfg.beta1, t));
    const double inv_sqrt_correction2 = 1.0 / std::sqrt(1.0 - std::pow(cfg.beta2, t));
    for (std::size_t l = 0; l < gradient.size(); ++l) {
        auto& layer = net.layers()[l];
        adam_kernel(layer.weights.data(), opt.first_moment[l].weights.data(), opt.second_moment[l].weights.data(),
                    gradient[l].weights.data(), static_cast<std::size_t>(layer.weights.size()), cfg, shrink, step_size,
                    inv_sqrt_correction2);
        adam_kernel(layer.bias.data(), opt.first_moment[l].bias.data(), opt.second_moment[l].bias.data(),
                    gradient[l].bias.data(), static_cast<std::size_t>(layer.bias.size()), cfg, shrink, step_size,
                    inv_sqrt_correction2);
    }
}

double train_step(DenseNet& net, AdamState& opt, std::span<const Sample> batch)
{
    for (const auto& s : batch) {
        if (!std::isfinite(s.target)) {
            throw ContractViolation("train_step: non-finite target");
        }
    }
    LossGradient lg = loss_and_gradient(net, batch);
    adam_update(net, opt, lg.gradient);
    return lg.loss;
}

namespace {

double sample_loss(const DenseNet& net, const Sample& sample)
{
    const Eigen::VectorXd q = net.forward(sample.input);
    const double err = q(static_cast<Eigen::Index>(sample.action)) - sample.target;
    return err * err;
}

} // namespace

double gradient_check(const DenseNet& net, const Sample& sample, const LayerParams& analytic)
{
    constexpr double h = 1e-5;
    constexpr double tiny = 1e-6;
    DenseNet probe = net;
    double worst = 0.0;
    auto compare = [&](double& param, double grad) {
        const double saved = param;
        param = saved + h;
        const double plus = sample_loss(probe, sample);
        param = saved - h;
        const double minus = sample_loss(probe, sample);
        param = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double scale = std::max(std::abs(numeric), std::abs(grad));
        const double err = scale < tiny ? std::abs(numeric - grad) : std::abs(numeric - grad) / scale;
        worst = std::max(worst, err);
    };
    for (std::size_t l = 0; l < probe.layers().size(); ++l) {
        auto& layer = probe.layers()[l];
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
            for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
                compare(layer.weights(i, j), analytic[l].weights(i, j));
            }
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            compare(layer.bias(i), analytic[l].bias(i));
        }
    }
    return worst;
}

double gradient_check(const DenseNet& net, const Sample& sample)
{
    const LossGradient lg = loss_and_gradient(net, std::span<const Sample>(&sample, 1));
    return gradient_check(net, sample, lg.gradient);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_double(std::ostream& out, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", x);
    out << buf;
}

double read_double(std::istream& in)
{
    std::string token;
    if (!(in >> token)) {
        throw std::runtime_error("checkpoint: truncated parameter data");
    }
    char* end = nullptr;
    const double x = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error("checkpoint: malformed number '" + token + "'");
    }
    return x;
}

void write_matrix(std::ostream& out, const char* tag, const Eigen::MatrixXd& m)
{
    out << tag << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) {
                out << ' ';
            }
            write_double(out, m(i, j));
        }
        out << '\n';
    }
}

void expect(std::istream& in, const std::string& word)
{
    std::string token;
    if (!(in >> token) || token != word) {
        throw std::runtime_error("checkpoint: expected '" + word + "', found '" + token + "'");
    }
}

Eigen::MatrixXd read_matrix(std::istream& in, const char* tag, Eigen::Index rows, Eigen::Index cols)
{
    expect(in, tag);
    Eigen::Index r = 0;
    Eigen::Index c = 0;
    if (!(in >> r >> c) || r != rows || c != cols) {
        throw std::runtime_error(std::string("checkpoint: shape mismatch for ") + tag);
    }
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            m(i, j) = read_double(in);
        }
    }
    return m;
}

} // namespace

void save_checkpoint(std::ostream& out, const DenseNet& net, const AdamState& opt)
{
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "sizes " << net.layer_sizes().size();
    for (int s : net.layer_sizes()) {
        out << ' ' << s;
    }
    out << '\n' << "adam ";
    for (double x : {opt.config.learning_rate, opt.config.beta1, opt.config.beta2, opt.config.epsilon, opt.config.clip_norm}) {
        write_double(out, x);
        out << ' ';
    }
    out << opt.step << '\n';
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        out << "layer " << l << '\n';
        write_matrix(out, "W", net.layers()[l].weights);
        write_matrix(out, "b", net.layers()[l].bias);
        write_matrix(out, "mW", opt.first_moment[l].weights);
        write_matrix(out, "mb", opt.first_moment[l].bias);
        write_matrix(out, "vW", opt.second_moment[l].weights);
        write_matrix(out, "vb", opt.second_moment[l].bias);
    }
    out << "end\n";
}

void load_checkpoint(std::istream& in, DenseNet& net, AdamState& opt)
{
    expect(in, kCheckpointMagic);
    int version = 0;
    if (!(in >> version) || version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    expect(in, "sizes");
    std::size_t count = 0;
    in >> count;
    std::vector<int> sizes(count);
    for (auto& s : sizes) {
        in >> s;
    }
    if (!in) {
        throw std::runtime_error("checkpoint: malformed layer sizes");
    }
    DenseNet loaded = DenseNet::zeros(sizes);
    AdamState state(loaded);
    expect(in, "adam");
    state.config.learning_rate = read_double(in);
    state.config.beta1 = read_double(in);
    state.config.beta2 = read_double(in);
    state.config.epsilon = read_double(in);
    state.config.clip_norm = read_double(in);
    in >> state.step;
    for (std::size_t l = 0; l < loaded.layers().size(); ++l) {
        expect(in, "layer");
        std::size_t index = 0;
        in >> index;
        if (index != l) {
            throw std::runtime_error("checkpoint: layer order mismatch");
        }
        auto& layer = loaded.layers()[l];
        const auto rows = layer.weights.rows();
        const auto cols = layer.weights.cols();
        layer.weights = read_matrix(in, "W", rows, cols);
        layer.bias = read_matrix(in, "b", rows, 1);
        state.first_moment[l].weights = read_matrix(in, "mW", rows, cols);
        state.first_moment[l].bias = read_matrix(in, "mb", rows, 1);
        state.second_moment[l].weights = read_matrix(in, "vW", rows, cols);
        state.second_moment[l].bias = read_matrix(in, "vb", rows, 1);
    }
    expect(in, "end");
    net = std::move(loaded);
    opt = std::move(state);
}

std::uint64_t parameter_hash(const DenseNet& net)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double x) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
        for (int k = 0; k < 8; ++k) {
            h ^= (bits >> (8 * k)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& layer : net.layers()) {
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            mix(layer.weights.data()[i]);
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            mix(layer.bias(i));
        }
    }
    return h;
}

} // namespace bcrn
