#pragma once

#include "bcrn/baselines.hpp"
#include "bcrn/env.hpp"
#include "bcrn/stats.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace bcrn {

inline constexpr std::size_t kDefaultMdpCap = 10'000'000;

/// Enumerates (b, q_1..q_N, c_1..c_N) with b over the busy-distribution
/// support. Index order: b outermost, then q_1, c_1, ..., q_N, c_N.
class StateSpace {
public:
    StateSpace() = default;
    explicit StateSpace(const NetworkConfig& config);

    std::size_t size() const { return size_; }
    std::optional<std::size_t> index_of(const NetworkState& state) const;
    NetworkState state(std::size_t index) const;
    const std::vector<int>& busy_values() const { return busy_values_; }

private:
    std::vector<int> busy_values_;
    std::vector<int> busy_position_; // b -> position in busy_values_, or -1
    std::vector<int> radices_;       // Q_1+1, C_1+1, ...
    std::size_t size_ = 0;
};

struct MdpOutcome {
    std::uint32_t next = 0;
    double probability = 0.0;
};

/// One feasible action in a state: its expected reward and next-state law.
struct MdpChoice {
    std::uint32_t action = 0; // catalog index
    double reward = 0.0;
    std::vector<MdpOutcome> outcomes;
};

struct ExplicitMdp {
    StateSpace space; // empty for hand-built models
    std::size_t num_actions = 0;
    /// choices[s] in ascending action order.
    std::vector<std::vector<MdpChoice>> choices;

    std::size_t num_states() const { return choices.size(); }
};

/// Pr(m) for m = 0..trials under Binomial(trials, p).
std::vector<double> binomial_pmf(int trials, double p);

/// Exact model of the simulator. Throws CapacityError ("instance too large")
/// when states x actions exceeds `cap`.
ExplicitMdp build_exact_mdp(const NetworkConfig& config, const ActionCatalog& catalog, std::size_t cap = kDefaultMdpCap);

struct ValueSolution {
    std::vector<double> values;
    std::vector<std::uint32_t> policy; // catalog index per state
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history;
};

/// Jacobi value iteration from V = 0, stopping once the sup-norm change is
/// below tol * (1 - discount) / (2 * discount). Ties in the greedy policy go
/// to the lowest action index.
ValueSolution value_iteration(const ExplicitMdp& mdp, double discount, double tol, int max_iterations = 1'000'000);

/// Q(s, a) = R(s, a) + discount * sum_s' P(s' | s, a) V(s'), laid out like
/// mdp.choices.
std::vector<std::vector<double>> q_from_values(const ExplicitMdp& mdp, const std::vector<double>& values, double discount);

/// One synchronous Bellman backup of a Q table (same layout as mdp.choices).
std::vector<std::vector<double>> bellman_backup(const ExplicitMdp& mdp, const std::vector<std::vector<double>>& q,
                                                double discount);

/// Long-run average reward of a stationary policy, from the stationary law
/// of the chain started at initial_state's distribution.
double long_run_average_reward(const ExplicitMdp& mdp, const NetworkConfig& config,
                               const std::vector<std::uint32_t>& policy);

/// CSV: b,q1,c1,...,value,mu,alpha1..,beta1..
void write_value_csv(std::ostream& out, const ExplicitMdp& mdp, const ActionCatalog& catalog,
                     const ValueSolution& solution);

// ---------------------------------------------------------------------------
// Tabular Q-learning

struct LearningRate {
    enum class Kind {
        Harmonic,       // 1 / (1 + n)
        Polynomial,     // 1 / (1 + n)^exponent
        RescaledLinear, // 1 / (1 + n / scale)
        Constant,       // scale
    };
    Kind kind = Kind::Harmonic;
    double exponent = 1.0;
    double scale = 1.0;

    /// Rate for the update that follows `visits` earlier updates of (s, a).
    double at(std::uint64_t visits) const;
};

struct TabularQOptions {
    double discount = 0.9;
    int episodes = 1000;
    int episode_length = 200;
    double epsilon = 1.0; // behaviour policy exploration rate
    LearningRate rate;
    std::size_t cap = kDefaultMdpCap;
};

struct TabularQResult {
    StateSpace space;
    /// q[s][k] is the value of catalog.feasible_indices(b(s))[k].
    std::vector<std::vector<double>> q;
    std::vector<std::vector<std::uint64_t>> visits;
    std::vector<std::uint32_t> policy;
};

/// Q-learning with epsilon-greedy behaviour on the simulator; the max in the
/// target is restricted to feasible actions.
TabularQResult tabular_q(const NetworkConfig& config, const ActionCatalog& catalog, const TabularQOptions& options,
                         RandomStream& rng);

/// One synchronous sweep: every feasible (s, a) is sampled once from the
/// simulator and updated with rate `rate` against the pre-sweep table.
void q_learning_sweep(const NetworkConfig& config, const ActionCatalog& catalog, const StateSpace& space,
                      std::vector<std::vector<double>>& q, double rate, double discount, RandomStream& rng);

/// Rolls `n_frames` frames from initial_state; mean reward per frame with a
/// batch-means standard error.
Estimate evaluate_policy(const NetworkConfig& config, const Policy& policy, int n_frames, RandomStream& rng,
                         RandomStream* policy_rng = nullptr);

} // namespace bcrn
