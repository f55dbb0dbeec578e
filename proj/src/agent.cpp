#include "bcrn/agent.hpp"

#include "bcrn/errors.hpp"
#include "bcrn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace bcrn {

// ---------------------------------------------------------------------------
// Replay memory

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity)
{
    if (capacity_ == 0) {
        throw ContractViolation("replay capacity must be positive");
    }
}

void ReplayMemory::push(Transition t)
{
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
        return;
    }
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayMemory::operator[](std::size_t age) const
{
    if (age >= items_.size()) {
        throw ContractViolation("replay index out of range");
    }
    return items_[(head_ + age) % items_.size()];
}

const Transition& ReplayMemory::sample(RandomStream& rng) const
{
    if (items_.empty()) {
        throw ContractViolation("sample from empty replay memory");
    }
    return items_[rng.uniform_index(items_.size())];
}

double EpsilonSchedule::at(std::uint64_t iteration) const
{
    if (horizon == 0) {
        return end;
    }
    const double progress = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(horizon));
    return std::max(0.0, start + (end - start) * progress);
}

void AgentConfig::validate() const
{
    if (!(discount >= 0.0 && discount < 1.0)) {
        throw ConfigError("discount must lie in [0, 1)");
    }
    if (batch_size == 0 || batch_size > replay_capacity) {
        throw ConfigError("batch_size must be in [1, replay_capacity]");
    }
    if (target_sync_period == 0) {
        throw ConfigError("target_sync_period must be positive");
    }
    if (episode_length <= 0) {
        throw ConfigError("episode_length must be positive");
    }
    if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0) {
        throw ConfigError("epsilon bounds must lie in [0, 1]");
    }
    if (adam.learning_rate <= 0.0) {
        throw ConfigError("learning_rate must be positive");
    }
    for (int h : hidden_layers) {
        if (h <= 0) {
            throw ConfigError("hidden layer sizes must be positive");
        }
    }
}

// ---------------------------------------------------------------------------
// Action selection and targets

std::size_t masked_argmax(std::span<const double> q, const ActionCatalog& catalog, int busy_slots)
{
    const auto choices = catalog.feasible_indices(busy_slots);
    std::size_t best = choices.front();
    double best_q = q[best];
    for (std::uint32_t i : choices) {
        if (q[i] > best_q) {
            best_q = q[i];
            best = i;
        }
    }
    return best;
}

std::size_t select_action(const DenseNet& online, const ActionCatalog& catalog, const NetworkConfig& config,
                          const NetworkState& state, double epsilon, RandomStream& rng)
{
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
        const auto choices = catalog.feasible_indices(state.busy_slots);
        return choices[rng.uniform_index(choices.size())];
    }
    const Eigen::VectorXd q = online.forward(encode_state(config, state));
    return masked_argmax(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), catalog,
                         state.busy_slots);
}

double ddqn_target(const DenseNet& online, const DenseNet& target, const ActionCatalog& catalog,
                   const NetworkConfig& config, const Transition& transition, double discount, BoundaryMode mode)
{
    if ((transition.boundary && mode == BoundaryMode::Terminate) || discount == 0.0) {
        return transition.reward;
    }
    const auto x = encode_state(config, transition.next_state);
    const Eigen::VectorXd q_online = online.forward(x);
    const std::size_t best =
        masked_argmax(std::span<const double>(q_online.data(), static_cast<std::size_t>(q_online.size())), catalog,
                      transition.next_state.busy_slots);
    const Eigen::VectorXd q_target = target.forward(x);
    return transition.reward + discount * q_target(static_cast<Eigen::Index>(best));
}

// ---------------------------------------------------------------------------
// Agent

namespace {

std::vector<int> network_shape(const NetworkConfig& config, const AgentConfig& agent, std::size_t actions)
{
    std::vector<int> sizes;
    sizes.push_back(2 * config.n_transmitters() + 1);
    sizes.insert(sizes.end(), agent.hidden_layers.begin(), agent.hidden_layers.end());
    sizes.push_back(static_cast<int>(actions));
    return sizes;
}

} // namespace

DdqnAgent::DdqnAgent(NetworkConfig config, std::shared_ptr<const ActionCatalog> catalog, AgentConfig agent,
                     std::uint64_t seed)
    : config_(std::move(config)),
      catalog_(std::move(catalog)),
      agent_(std::move(agent)),
      replay_(agent_.replay_capacity),
      exploration_(derive_seed(seed, "exploration")),
      sampling_(derive_seed(seed, "replay"))
{
    config_.validate();
    agent_.validate();
    if (!catalog_ || catalog_->n_transmitters() != config_.n_transmitters() ||
        catalog_->frame_slots() != config_.frame_slots) {
        throw ContractViolation("action catalog does not match the network config");
    }
    online_ = DenseNet(network_shape(config_, agent_, catalog_->size()), derive_seed(seed, "agent-init"));
    target_ = copy_weights(online_);
    optimizer_ = AdamState(online_, agent_.adam);
}

std::size_t DdqnAgent::act(const NetworkState& state, double epsilon)
{
    return select_action(online_, *catalog_, config_, state, epsilon, exploration_);
}

std::size_t DdqnAgent::greedy(const NetworkState& state) const
{
    const Eigen::VectorXd q = online_.forward(encode_state(config_, state));
    return masked_argmax(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), *catalog_,
                         state.busy_slots);
}

void DdqnAgent::remember(Transition t)
{
    if (!catalog_->is_feasible(t.action_index, t.state.busy_slots)) {
        throw ContractViolation("stored transition holds an infeasible action");
    }
    replay_.push(std::move(t));
}

std::optional<double> DdqnAgent::learn_step()
{
    if (replay_.size() < std::max<std::size_t>(agent_.learn_start, 1)) {
        return std::nullopt;
    }
    const std::size_t batch = agent_.batch_size;
    const auto dim = static_cast<Eigen::Index>(online_.input_size());
    Eigen::MatrixXd states(dim, static_cast<Eigen::Index>(batch));
    Eigen::MatrixXd next_states(dim, static_cast<Eigen::Index>(batch));
    std::vector<const Transition*> picked(batch);
    std::vector<std::size_t> actions(batch);
    std::vector<double> targets(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const Transition& t = replay_.sample(sampling_);
        picked[i] = &t;
        actions[i] = t.action_index;
        const auto col = static_cast<Eigen::Index>(i);
        encode_state_into(config_, t.state, std::span<double>(states.col(col).data(), static_cast<std::size_t>(dim)));
        encode_state_into(config_, t.next_state,
                          std::span<double>(next_states.col(col).data(), static_cast<std::size_t>(dim)));
    }

    // Batched form of ddqn_target.
    const Eigen::MatrixXd q_online = online_.forward_batch(next_states);
    const Eigen::MatrixXd target_features = target_.features(next_states);
    const auto n_actions = static_cast<std::size_t>(q_online.rows());
    for (std::size_t i = 0; i < batch; ++i) {
        const Transition& t = *picked[i];
        if ((t.boundary && agent_.boundary == BoundaryMode::Terminate) || agent_.discount == 0.0) {
            targets[i] = t.reward;
            continue;
        }
        const auto col = static_cast<Eigen::Index>(i);
        const std::size_t best = masked_argmax(std::span<const double>(q_online.col(col).data(), n_actions), *catalog_,
                                               t.next_state.busy_slots);
        targets[i] = t.reward + agent_.discount * target_.output_from_features(target_features.col(col), best);
    }

    loss_and_gradient_into(online_, states, actions, targets, scratch_);
    adam_update(online_, optimizer_, scratch_.gradient);
    ++learn_steps_;
    if (learn_steps_ % agent_.target_sync_period == 0) {
        sync_target();
    }
    return scratch_.loss;
}

EpisodeMetrics DdqnAgent::run_episode(int episode, RandomStream& env_rng, bool learning,
                                      std::optional<double> fixed_epsilon)
{
    EpisodeMetrics metrics;
    metrics.episode = episode;
    metrics.rewards.reserve(static_cast<std::size_t>(agent_.episode_length));
    const EpsilonSchedule schedule = agent_.epsilon_schedule();
    double loss_sum = 0.0;
    int loss_count = 0;

    NetworkState state = initial_state(config_, env_rng);
    for (int t = 0; t < agent_.episode_length; ++t) {
        const double eps = fixed_epsilon ? *fixed_epsilon : schedule.at(iteration_);
        metrics.epsilon = eps;
        const std::size_t a = act(state, eps);
        StepOutcome out = step(config_, state, catalog_->action(a), env_rng);
        metrics.rewards.push_back(out.reward);
        const bool boundary = t + 1 == agent_.episode_length;
        NetworkState next = out.next_state;
        remember(Transition{std::move(state), a, out.reward, std::move(out.next_state), boundary});
        if (learning) {
            if (auto loss = learn_step()) {
                loss_sum += *loss;
                ++loss_count;
            }
        }
        state = std::move(next);
        ++iteration_;
    }
    const Estimate e = mean_stderr(metrics.rewards);
    metrics.mean_reward = e.mean;
    metrics.stderr_reward = e.stderr_mean;
    metrics.mean_loss = loss_count > 0 ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN();
    return metrics;
}

std::function<ScheduleAction(const NetworkState&, RandomStream&)> DdqnAgent::greedy_policy() const
{
    return [this](const NetworkState& s, RandomStream&) { return catalog_->action(greedy(s)); };
}

void DdqnAgent::save(std::ostream& out) const
{
    out << "bcrn-agent 1\n";
    out << "iteration " << iteration_ << '\n';
    out << "learn_steps " << learn_steps_ << '\n';
    out << "epsilon_horizon " << agent_.total_iterations << '\n';
    out << "exploration " << exploration_.save_state() << '\n';
    out << "sampling " << sampling_.save_state() << '\n';
    save_checkpoint(out, online_, optimizer_);
}

void DdqnAgent::load(std::istream& in)
{
    auto expect = [&in](const char* word) {
        std::string token;
        if (!(in >> token) || token != word) {
            throw std::runtime_error(std::string("agent checkpoint: expected '") + word + "'");
        }
    };
    expect("bcrn-agent");
    int version = 0;
    in >> version;
    if (version != 1) {
        throw std::runtime_error("agent checkpoint: unsupported version");
    }
    expect("iteration");
    in >> iteration_;
    expect("learn_steps");
    in >> learn_steps_;
    expect("epsilon_horizon");
    in >> agent_.total_iterations;
    std::string line;
    expect("exploration");
    std::getline(in >> std::ws, line);
    exploration_.restore_state(line);
    expect("sampling");
    std::getline(in >> std::ws, line);
    sampling_.restore_state(line);
    DenseNet net;
    AdamState opt;
    load_checkpoint(in, net, opt);
    if (net.layer_sizes() != online_.layer_sizes()) {
        throw std::runtime_error("agent checkpoint: network shape does not match the configuration");
    }
    online_ = std::move(net);
    optimizer_ = std::move(opt);
    sync_target();
}

void train(DdqnAgent& agent, int episodes, std::uint64_t env_seed,
           const std::function<void(const EpisodeMetrics&)>& on_episode, bool learning,
           std::optional<double> fixed_epsilon)
{
    for (int e = 0; e < episodes; ++e) {
        RandomStream env_rng(derive_seed(env_seed, "env", static_cast<std::uint64_t>(e)));
        const EpisodeMetrics m = agent.run_episode(e, env_rng, learning, fixed_epsilon);
        if (on_episode) {
            on_episode(m);
        }
    }
}

} // namespace bcrn
