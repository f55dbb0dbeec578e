#include "bcrn/env.hpp"

#include "bcrn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace bcrn {

namespace {

void require(bool ok, const std::string& what)
{
    if (!ok) {
        throw ConfigError(what);
    }
}

bool is_probability(double p)
{
    return std::isfinite(p) && p >= 0.0 && p <= 1.0;
}

int ceil_div(int a, int b)
{
    return (a + b - 1) / b;
}

} // namespace

std::vector<double> uniform_busy(int frame_slots, int lo, int hi)
{
    if (frame_slots < 0 || lo < 0 || hi > frame_slots || lo > hi) {
        throw ConfigError("uniform_busy: need 0 <= lo <= hi <= F");
    }
    std::vector<double> pmf(static_cast<std::size_t>(frame_slots) + 1, 0.0);
    const double p = 1.0 / static_cast<double>(hi - lo + 1);
    for (int b = lo; b <= hi; ++b) {
        pmf[static_cast<std::size_t>(b)] = p;
    }
    return pmf;
}

std::vector<double> point_busy(int frame_slots, int b)
{
    return uniform_busy(frame_slots, b, b);
}

int NetworkConfig::max_busy() const
{
    for (int b = static_cast<int>(busy_distribution.size()) - 1; b >= 0; --b) {
        if (busy_distribution[static_cast<std::size_t>(b)] > 0.0) {
            return b;
        }
    }
    return 0;
}

void NetworkConfig::validate() const
{
    require(frame_slots >= 0, "frame_slots must be nonnegative");
    require(!transmitters.empty(), "n_transmitters must be positive");
    require(busy_distribution.size() == static_cast<std::size_t>(frame_slots) + 1,
            "busy_distribution must have F+1 entries");
    double total = 0.0;
    for (double p : busy_distribution) {
        require(is_probability(p), "busy_distribution entries must lie in [0,1]");
        total += p;
    }
    require(std::abs(total - 1.0) <= 1e-12, "busy_distribution must sum to 1");
    for (std::size_t n = 0; n < transmitters.size(); ++n) {
        const auto& t = transmitters[n];
        const std::string who = "transmitter " + std::to_string(n + 1) + ": ";
        require(t.queue_capacity >= 0 && t.energy_capacity >= 0, who + "capacities must be nonnegative");
        require(t.backscatter_rate >= 0 && t.active_rate >= 0 && t.harvest_rate >= 0 && t.active_cost >= 0,
                who + "rates must be nonnegative");
        require(!t.active_enabled() || t.active_cost >= 1, who + "active_cost must be >= 1 when active mode is enabled");
        require(is_probability(t.arrival_prob), who + "arrival_prob must lie in [0,1]");
        require(is_probability(t.success_backscatter) && is_probability(t.success_active),
                who + "success probabilities must lie in [0,1]");
    }
}

NetworkConfig NetworkConfig::defaults()
{
    NetworkConfig config;
    config.frame_slots = 10;
    config.busy_distribution = uniform_busy(10, 1, 9);
    config.transmitters.assign(3, TransmitterParams{});
    return config;
}

NetworkConfig NetworkConfig::tiny_reference()
{
    NetworkConfig config;
    config.frame_slots = 4;
    config.busy_distribution = uniform_busy(4, 1, 3);
    TransmitterParams t;
    t.queue_capacity = 3;
    t.energy_capacity = 3;
    t.arrival_prob = 0.5;
    config.transmitters.assign(1, t);
    return config;
}

int ScheduleAction::busy_use() const
{
    return harvest_slots + std::accumulate(backscatter_slots.begin(), backscatter_slots.end(), 0);
}

int ScheduleAction::total_use() const
{
    return busy_use() + std::accumulate(active_slots.begin(), active_slots.end(), 0);
}

// ---------------------------------------------------------------------------
// Action catalog

ActionCatalog::ActionCatalog(int n_transmitters, int frame_slots, int max_busy, std::vector<int> entries)
    : n_(n_transmitters), frame_slots_(frame_slots), max_busy_(max_busy), entries_(std::move(entries))
{
    const std::size_t w = width();
    const std::size_t count = entries_.size() / w;
    busy_use_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int* r = entries_.data() + i * w;
        busy_use_[i] = std::accumulate(r, r + n_ + 1, 0);
    }
    feasible_by_busy_.resize(static_cast<std::size_t>(frame_slots_) + 1);
    for (int b = 0; b <= frame_slots_; ++b) {
        auto& list = feasible_by_busy_[static_cast<std::size_t>(b)];
        for (std::size_t i = 0; i < count; ++i) {
            if (busy_use_[i] <= b) {
                list.push_back(static_cast<std::uint32_t>(i));
            }
        }
    }
}

std::span<const int> ActionCatalog::row(std::size_t index) const
{
    if (index >= size()) {
        throw ContractViolation("action index " + std::to_string(index) + " out of range");
    }
    return {entries_.data() + index * width(), width()};
}

ScheduleAction ActionCatalog::action(std::size_t index) const
{
    const auto r = row(index);
    ScheduleAction a;
    a.harvest_slots = r[0];
    a.backscatter_slots.assign(r.begin() + 1, r.begin() + 1 + n_);
    a.active_slots.assign(r.begin() + 1 + n_, r.end());
    return a;
}

std::optional<std::size_t> ActionCatalog::index_of(const ScheduleAction& action) const
{
    if (static_cast<int>(action.backscatter_slots.size()) != n_ || static_cast<int>(action.active_slots.size()) != n_) {
        return std::nullopt;
    }
    std::vector<int> key;
    key.reserve(width());
    key.push_back(action.harvest_slots);
    key.insert(key.end(), action.backscatter_slots.begin(), action.backscatter_slots.end());
    key.insert(key.end(), action.active_slots.begin(), action.active_slots.end());

    // Rows are sorted lexicographically; binary search over row indices.
    std::size_t lo = 0;
    std::size_t hi = size();
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        const auto r = row(mid);
        if (std::lexicographical_compare(r.begin(), r.end(), key.begin(), key.end())) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if (lo < size() && std::ranges::equal(row(lo), key)) {
        return lo;
    }
    return std::nullopt;
}

std::span<const std::uint32_t> ActionCatalog::feasible_indices(int busy_slots) const
{
    const int b = std::clamp(busy_slots, 0, frame_slots_);
    return feasible_by_busy_[static_cast<std::size_t>(b)];
}

bool ActionCatalog::is_feasible(std::size_t index, int busy_slots) const
{
    return index < size() && busy_use_[index] <= busy_slots;
}

namespace {

struct Enumerator {
    int n;
    int frame_slots;
    int max_busy;
    std::size_t cap;
    std::vector<int> current;
    std::vector<int>* out; // null while counting
    std::size_t count = 0;

    // Returns false once the count exceeds the cap.
    bool visit(std::size_t position, int busy_sum, int total_sum)
    {
        if (position == current.size()) {
            if (++count > cap) {
                return false;
            }
            if (out != nullptr) {
                out->insert(out->end(), current.begin(), current.end());
            }
            return true;
        }
        const bool busy_part = position <= static_cast<std::size_t>(n);
        const int bound = busy_part ? std::min(max_busy - busy_sum, frame_slots - total_sum) : frame_slots - total_sum;
        for (int v = 0; v <= bound; ++v) {
            current[position] = v;
            if (!visit(position + 1, busy_sum + (busy_part ? v : 0), total_sum + v)) {
                return false;
            }
        }
        current[position] = 0;
        return true;
    }
};

} // namespace

ActionCatalog enumerate_actions(const NetworkConfig& config, std::size_t cap)
{
    config.validate();
    const int n = config.n_transmitters();
    const int b_max = config.max_busy();
    Enumerator e{n, config.frame_slots, b_max, cap, std::vector<int>(static_cast<std::size_t>(2 * n + 1), 0), nullptr};
    if (!e.visit(0, 0, 0)) {
        throw CapacityError("catalog too large: more than " + std::to_string(cap) + " actions");
    }
    std::vector<int> entries;
    entries.reserve(e.count * e.current.size());
    e.out = &entries;
    e.count = 0;
    e.visit(0, 0, 0);
    return ActionCatalog(n, config.frame_slots, b_max, std::move(entries));
}

// ---------------------------------------------------------------------------
// Dynamics

bool feasible(const NetworkConfig& config, const NetworkState& state, const ScheduleAction& action)
{
    const auto n = static_cast<std::size_t>(config.n_transmitters());
    if (action.backscatter_slots.size() != n || action.active_slots.size() != n || action.harvest_slots < 0) {
        return false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (action.backscatter_slots[i] < 0 || action.active_slots[i] < 0) {
            return false;
        }
    }
    return action.busy_use() <= state.busy_slots && action.total_use() <= config.frame_slots;
}

ScheduleEffect apply_schedule(const NetworkConfig& config, const NetworkState& state, const ScheduleAction& action)
{
    if (state.transmitters.size() != config.transmitters.size()) {
        throw ContractViolation("state has " + std::to_string(state.transmitters.size()) + " transmitters, config has " +
                                std::to_string(config.transmitters.size()));
    }
    if (!feasible(config, state, action)) {
        throw ContractViolation("infeasible action: busy use " + std::to_string(action.busy_use()) + " with b=" +
                                std::to_string(state.busy_slots) + ", total use " + std::to_string(action.total_use()) +
                                " with F=" + std::to_string(config.frame_slots));
    }
    const std::size_t n = config.transmitters.size();
    ScheduleEffect effect;
    effect.after.resize(n);
    effect.flows.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = config.transmitters[i];
        const auto& s = state.transmitters[i];
        auto& flow = effect.flows[i];
        const int alpha = action.backscatter_slots[i];
        const int beta = action.active_slots[i];

        // Backscatter during alpha busy slots.
        const int q1 = std::max(0, s.queue - alpha * p.backscatter_rate);
        flow.backscattered = s.queue - q1;

        // Harvest during every busy slot not spent backscattering.
        flow.harvested = (state.busy_slots - alpha) * p.harvest_rate;
        const int c_raw = s.energy + flow.harvested;
        const int c1 = std::min(c_raw, p.energy_capacity);
        flow.energy_overflow = c_raw - c1;

        // Active slots are limited by data (ceil) and energy (floor).
        int used = 0;
        if (p.active_enabled()) {
            used = std::min(beta, ceil_div(q1, p.active_rate));
            if (p.active_cost > 0) {
                used = std::min(used, c1 / p.active_cost);
            }
        }
        flow.active_slots_used = used;
        flow.active = std::min(q1, used * p.active_rate);
        flow.energy_consumed = used * p.active_cost;

        effect.after[i].queue = q1 - flow.active;
        effect.after[i].energy = c1 - flow.energy_consumed;
        effect.reward += p.success_backscatter * flow.backscattered + p.success_active * flow.active;
    }
    return effect;
}

int sample_arrivals(const NetworkConfig& config, int transmitter, RandomStream& rng)
{
    if (transmitter < 0 || transmitter >= config.n_transmitters()) {
        throw ContractViolation("transmitter index out of range");
    }
    return rng.binomial(config.frame_slots, config.transmitters[static_cast<std::size_t>(transmitter)].arrival_prob);
}

int sample_busy(const NetworkConfig& config, RandomStream& rng)
{
    return static_cast<int>(rng.categorical(config.busy_distribution));
}

StepOutcome step(const NetworkConfig& config, const NetworkState& state, const ScheduleAction& action, RandomStream& rng)
{
    ScheduleEffect effect = apply_schedule(config, state, action);
    StepOutcome out;
    out.reward = effect.reward;
    out.flows = std::move(effect.flows);
    out.next_state.transmitters = std::move(effect.after);
    for (std::size_t i = 0; i < config.transmitters.size(); ++i) {
        auto& t = out.next_state.transmitters[i];
        auto& flow = out.flows[i];
        flow.arrivals = sample_arrivals(config, static_cast<int>(i), rng);
        const int offered = t.queue + flow.arrivals;
        t.queue = std::min(offered, config.transmitters[i].queue_capacity);
        flow.dropped = offered - t.queue;
    }
    out.next_state.busy_slots = sample_busy(config, rng);
    return out;
}

void encode_state_into(const NetworkConfig& config, const NetworkState& state, std::span<double> out)
{
    const std::size_t n = config.transmitters.size();
    if (out.size() != 2 * n + 1 || state.transmitters.size() != n) {
        throw ContractViolation("encode_state: dimension mismatch");
    }
    auto ratio = [](int value, int capacity) {
        return capacity > 0 ? static_cast<double>(value) / static_cast<double>(capacity) : 0.0;
    };
    out[0] = ratio(state.busy_slots, config.frame_slots);
    for (std::size_t i = 0; i < n; ++i) {
        out[1 + 2 * i] = ratio(state.transmitters[i].queue, config.transmitters[i].queue_capacity);
        out[2 + 2 * i] = ratio(state.transmitters[i].energy, config.transmitters[i].energy_capacity);
    }
}

std::vector<double> encode_state(const NetworkConfig& config, const NetworkState& state)
{
    std::vector<double> out(2 * config.transmitters.size() + 1);
    encode_state_into(config, state, out);
    return out;
}

NetworkState initial_state(const NetworkConfig& config, RandomStream& rng)
{
    NetworkState s;
    s.transmitters.assign(config.transmitters.size(), TransmitterState{});
    s.busy_slots = sample_busy(config, rng);
    return s;
}

bool state_in_bounds(const NetworkConfig& config, const NetworkState& state)
{
    if (state.busy_slots < 0 || state.busy_slots > config.frame_slots ||
        state.transmitters.size() != config.transmitters.size()) {
        return false;
    }
    for (std::size_t i = 0; i < state.transmitters.size(); ++i) {
        const auto& t = state.transmitters[i];
        const auto& p = config.transmitters[i];
        if (t.queue < 0 || t.queue > p.queue_capacity || t.energy < 0 || t.energy > p.energy_capacity) {
            return false;
        }
    }
    return true;
}

} // namespace bcrn
