#pragma once

#include "bcrn/random.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace bcrn {

/// Per-transmitter parameters. Rates are per slot; capacities in packets or
/// energy units.
struct TransmitterParams {
    int queue_capacity = 10;
    int energy_capacity = 10;
    double arrival_prob = 0.5;
    int backscatter_rate = 1;
    int active_rate = 2;
    int harvest_rate = 1;
    int active_cost = 1;
    double success_backscatter = 1.0;
    double success_active = 1.0;

    /// Active mode is disabled by a zero active rate.
    bool active_enabled() const { return active_rate > 0; }
};

struct NetworkConfig {
    int frame_slots = 10;
    /// Probability of b busy slots, indexed 0..frame_slots.
    std::vector<double> busy_distribution;
    std::vector<TransmitterParams> transmitters;

    int n_transmitters() const { return static_cast<int>(transmitters.size()); }
    /// Largest b with positive probability.
    int max_busy() const;

    /// Throws ConfigError describing the first violated invariant.
    void validate() const;

    /// N=3, F=10, b uniform on {1..9}, Q=C=10, d_b=1, d_a=2, e_h=1, e_a=1,
    /// lambda=0.5, S=1.
    static NetworkConfig defaults();
    /// Small instance used to check learners against exact solutions.
    static NetworkConfig tiny_reference();
};

/// Uniform pmf on {lo..hi} over 0..frame_slots.
std::vector<double> uniform_busy(int frame_slots, int lo, int hi);
/// Point mass at b over 0..frame_slots.
std::vector<double> point_busy(int frame_slots, int b);

struct TransmitterState {
    int queue = 0;
    int energy = 0;

    friend bool operator==(const TransmitterState&, const TransmitterState&) = default;
};

struct NetworkState {
    int busy_slots = 0;
    std::vector<TransmitterState> transmitters;

    friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

/// One frame's slot allocation: mu harvest slots, alpha_n backscatter slots
/// and beta_n active slots per transmitter.
struct ScheduleAction {
    int harvest_slots = 0;
    std::vector<int> backscatter_slots;
    std::vector<int> active_slots;

    int busy_use() const;  // mu + sum(alpha)
    int total_use() const; // mu + sum(alpha + beta)

    friend bool operator==(const ScheduleAction&, const ScheduleAction&) = default;
};

/// Per-transmitter bookkeeping for one frame.
struct TransmitterFlow {
    int backscattered = 0;
    int active = 0;
    int active_slots_used = 0;
    int harvested = 0; // credited before clipping at capacity
    int energy_overflow = 0;
    int energy_consumed = 0;
    int arrivals = 0;
    int dropped = 0;
};

struct StepOutcome {
    NetworkState next_state;
    double reward = 0.0;
    std::vector<TransmitterFlow> flows;
};

/// Result of the deterministic part of a frame (backscatter, harvest,
/// active transmission) before arrivals and the next busy draw.
struct ScheduleEffect {
    std::vector<TransmitterState> after; // queue q2, energy c'
    std::vector<TransmitterFlow> flows;
    double reward = 0.0;
};

inline constexpr std::size_t kDefaultCatalogCap = 1'000'000;

/// Every globally admissible action, in lexicographic order of the flattened
/// tuple (mu, alpha_1..alpha_N, beta_1..beta_N).
class ActionCatalog {
public:
    ActionCatalog() = default;
    ActionCatalog(int n_transmitters, int frame_slots, int max_busy, std::vector<int> entries);

    std::size_t size() const { return busy_use_.size(); }
    int n_transmitters() const { return n_; }
    int frame_slots() const { return frame_slots_; }
    int max_busy() const { return max_busy_; }
    std::size_t width() const { return static_cast<std::size_t>(2 * n_ + 1); }

    std::span<const int> row(std::size_t index) const;
    ScheduleAction action(std::size_t index) const;
    int busy_use(std::size_t index) const { return busy_use_[index]; }

    std::optional<std::size_t> index_of(const ScheduleAction& action) const;

    /// Ascending indices of actions feasible when b slots are busy.
    std::span<const std::uint32_t> feasible_indices(int busy_slots) const;
    bool is_feasible(std::size_t index, int busy_slots) const;

private:
    int n_ = 0;
    int frame_slots_ = 0;
    int max_busy_ = 0;
    std::vector<int> entries_;
    std::vector<int> busy_use_;
    std::vector<std::vector<std::uint32_t>> feasible_by_busy_;
};

ActionCatalog enumerate_actions(const NetworkConfig& config, std::size_t cap = kDefaultCatalogCap);

bool feasible(const NetworkConfig& config, const NetworkState& state, const ScheduleAction& action);

/// Backscatter, harvest and active phases. Throws ContractViolation on an
/// infeasible action.
ScheduleEffect apply_schedule(const NetworkConfig& config, const NetworkState& state, const ScheduleAction& action);

/// One full frame: schedule, end-of-frame arrivals, fresh busy-slot draw.
/// Random draws happen in a fixed order (arrivals for n = 1..N, then b), so
/// schemes sharing a seed see identical exogenous sequences.
StepOutcome step(const NetworkConfig& config, const NetworkState& state, const ScheduleAction& action, RandomStream& rng);

int sample_arrivals(const NetworkConfig& config, int transmitter, RandomStream& rng);
int sample_busy(const NetworkConfig& config, RandomStream& rng);

/// [b/F, q_1/Q_1, c_1/C_1, ..., q_N/Q_N, c_N/C_N]; zero capacities encode as 0.
std::vector<double> encode_state(const NetworkConfig& config, const NetworkState& state);
void encode_state_into(const NetworkConfig& config, const NetworkState& state, std::span<double> out);

/// Empty queues and storage; b drawn from the busy distribution.
NetworkState initial_state(const NetworkConfig& config, RandomStream& rng);

/// Checks 0 <= b <= F and per-transmitter bounds.
bool state_in_bounds(const NetworkConfig& config, const NetworkState& state);

} // namespace bcrn
