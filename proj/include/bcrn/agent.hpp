#pragma once

#include "bcrn/env.hpp"
#include "bcrn/nn.hpp"
#include "bcrn/random.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace bcrn {

struct Transition {
    NetworkState state;
    std::size_t action_index = 0;
    double reward = 0.0;
    NetworkState next_state;
    bool boundary = false; // last iteration of its episode
};

/// Bounded FIFO of transitions; the oldest record is evicted first.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity = 50'000);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    void push(Transition t);

    /// Age order: index 0 is the oldest stored record.
    const Transition& operator[](std::size_t age) const;

    /// Uniform with replacement over current contents.
    const Transition& sample(RandomStream& rng) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0; // slot of the oldest record once full
    std::vector<Transition> items_;
};

/// Linear decay from `start` to `end` over `horizon` iterations, then flat.
struct EpsilonSchedule {
    double start = 0.9;
    double end = 0.0;
    std::uint64_t horizon = 1'000'000;

    double at(std::uint64_t iteration) const;
};

enum class BoundaryMode {
    Terminate, // y = r on the last iteration of an episode
    Bootstrap, // truncation is not termination; always bootstrap
};

struct AgentConfig {
    double discount = 0.9;
    std::size_t batch_size = 32;
    std::uint64_t target_sync_period = 10'000;
    int episode_length = 200;
    std::uint64_t total_iterations = 1'000'000;
    std::size_t learn_start = 32;
    std::size_t replay_capacity = 50'000;
    BoundaryMode boundary = BoundaryMode::Terminate;
    std::vector<int> hidden_layers{32, 32, 32};
    double epsilon_start = 0.9;
    double epsilon_end = 0.0;
    AdamConfig adam;

    EpsilonSchedule epsilon_schedule() const { return {epsilon_start, epsilon_end, total_iterations}; }
    void validate() const;
};

/// Index of the largest q among actions feasible with `busy_slots` busy;
/// ties go to the lowest index.
std::size_t masked_argmax(std::span<const double> q, const ActionCatalog& catalog, int busy_slots);

/// Epsilon-greedy with feasibility masking.
std::size_t select_action(const DenseNet& online, const ActionCatalog& catalog, const NetworkConfig& config,
                          const NetworkState& state, double epsilon, RandomStream& rng);

/// Double-DQN target: the online net picks the next action, the target net
/// scores it.
double ddqn_target(const DenseNet& online, const DenseNet& target, const ActionCatalog& catalog,
                   const NetworkConfig& config, const Transition& transition, double discount, BoundaryMode mode);

struct EpisodeMetrics {
    int episode = 0;
    double mean_reward = 0.0;
    double stderr_reward = 0.0;
    double mean_loss = 0.0; // NaN when no learning happened
    double epsilon = 0.0;   // at the episode's last iteration
    std::vector<double> rewards;
};

class DdqnAgent {
public:
    DdqnAgent(NetworkConfig config, std::shared_ptr<const ActionCatalog> catalog, AgentConfig agent, std::uint64_t seed);

    const NetworkConfig& network() const { return config_; }
    const ActionCatalog& catalog() const { return *catalog_; }
    std::shared_ptr<const ActionCatalog> catalog_ptr() const { return catalog_; }
    const AgentConfig& settings() const { return agent_; }

    const DenseNet& online() const { return online_; }
    DenseNet& online() { return online_; }
    const DenseNet& target() const { return target_; }
    const ReplayMemory& replay() const { return replay_; }

    std::uint64_t iteration() const { return iteration_; }
    std::uint64_t learn_steps() const { return learn_steps_; }
    double epsilon() const { return agent_.epsilon_schedule().at(iteration_); }

    /// Epsilon-greedy choice from the exploration stream.
    std::size_t act(const NetworkState& state, double epsilon);
    std::size_t greedy(const NetworkState& state) const;

    /// Stores a transition; throws ContractViolation if the action was not
    /// feasible in its state.
    void remember(Transition t);

    /// One mini-batch update; nothing when the replay holds fewer than
    /// learn_start records.
    std::optional<double> learn_step();

    /// Runs one episode of episode_length iterations on `env_rng`.
    EpisodeMetrics run_episode(int episode, RandomStream& env_rng, bool learning = true,
                               std::optional<double> fixed_epsilon = std::nullopt);

    /// Policy view of the greedy (epsilon = 0) online net.
    std::function<ScheduleAction(const NetworkState&, RandomStream&)> greedy_policy() const;

    /// Online net, optimizer and counters; enough for greedy evaluation.
    void save(std::ostream& out) const;
    void load(std::istream& in);

private:
    void sync_target() { target_ = copy_weights(online_); }

    NetworkConfig config_;
    std::shared_ptr<const ActionCatalog> catalog_;
    AgentConfig agent_;
    DenseNet online_;
    DenseNet target_;
    AdamState optimizer_;
    LossGradient scratch_;
    ReplayMemory replay_;
    RandomStream exploration_;
    RandomStream sampling_;
    std::uint64_t iteration_ = 0;
    std::uint64_t learn_steps_ = 0;
};

/// Trains for `episodes` episodes; episode i draws its environment from
/// derive_seed(env_seed, "env", i). The callback sees each finished episode.
void train(DdqnAgent& agent, int episodes, std::uint64_t env_seed,
           const std::function<void(const EpisodeMetrics&)>& on_episode = {}, bool learning = true,
           std::optional<double> fixed_epsilon = std::nullopt);

} // namespace bcrn
