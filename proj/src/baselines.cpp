#include "bcrn/baselines.hpp"

#include "bcrn/errors.hpp"

#include <algorithm>

namespace bcrn {

std::string_view to_string(PolicyKind kind)
{
    switch (kind) {
    case PolicyKind::Random:
        return "random";
    case PolicyKind::HTT:
        return "htt";
    case PolicyKind::Backscatter:
        return "backscatter";
    case PolicyKind::GreedyDDQN:
        return "ddqn";
    }
    return "unknown";
}

std::optional<PolicyKind> parse_policy_kind(std::string_view text)
{
    for (auto kind : {PolicyKind::Random, PolicyKind::HTT, PolicyKind::Backscatter, PolicyKind::GreedyDDQN}) {
        if (text == to_string(kind)) {
            return kind;
        }
    }
    return std::nullopt;
}

std::size_t random_policy(const NetworkState& state, const ActionCatalog& catalog, RandomStream& rng)
{
    const auto choices = catalog.feasible_indices(state.busy_slots);
    return choices[rng.uniform_index(choices.size())];
}

namespace {

// Index of the largest positive load, lowest index on ties; nullopt when all
// loads are zero.
std::optional<std::size_t> largest_load(const std::vector<int>& loads)
{
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < loads.size(); ++i) {
        if (loads[i] > 0 && (!best || loads[i] > loads[*best])) {
            best = i;
        }
    }
    return best;
}

} // namespace

ScheduleAction htt_policy(const NetworkState& state, const NetworkConfig& config)
{
    const std::size_t n = config.transmitters.size();
    ScheduleAction a;
    a.harvest_slots = state.busy_slots;
    a.backscatter_slots.assign(n, 0);
    a.active_slots.assign(n, 0);

    // Energy available in the idle period, after harvesting through all b slots.
    std::vector<int> queue(n);
    std::vector<int> energy(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = config.transmitters[i];
        queue[i] = state.transmitters[i].queue;
        energy[i] = std::min(state.transmitters[i].energy + state.busy_slots * p.harvest_rate, p.energy_capacity);
    }
    auto load = [&](std::size_t i) {
        const auto& p = config.transmitters[i];
        if (!p.active_enabled()) {
            return 0;
        }
        const int slots_by_energy = p.active_cost > 0 ? energy[i] / p.active_cost : queue[i];
        return std::min(queue[i], slots_by_energy * p.active_rate);
    };

    std::vector<int> loads(n);
    for (int slot = state.busy_slots; slot < config.frame_slots; ++slot) {
        for (std::size_t i = 0; i < n; ++i) {
            loads[i] = load(i);
        }
        const auto pick = largest_load(loads);
        if (!pick) {
            break;
        }
        const auto& p = config.transmitters[*pick];
        ++a.active_slots[*pick];
        queue[*pick] -= std::min(queue[*pick], p.active_rate);
        energy[*pick] -= p.active_cost;
    }
    return a;
}

ScheduleAction backscatter_policy(const NetworkState& state, const NetworkConfig& config)
{
    const std::size_t n = config.transmitters.size();
    ScheduleAction a;
    a.backscatter_slots.assign(n, 0);
    a.active_slots.assign(n, 0);

    std::vector<int> queue(n);
    for (std::size_t i = 0; i < n; ++i) {
        queue[i] = config.transmitters[i].backscatter_rate > 0 ? state.transmitters[i].queue : 0;
    }
    for (int slot = 0; slot < state.busy_slots; ++slot) {
        const auto pick = largest_load(queue);
        if (!pick) {
            break;
        }
        ++a.backscatter_slots[*pick];
        queue[*pick] -= std::min(queue[*pick], config.transmitters[*pick].backscatter_rate);
    }
    return a;
}

Policy make_baseline(PolicyKind kind, const NetworkConfig& config, const ActionCatalog& catalog)
{
    switch (kind) {
    case PolicyKind::Random:
        return [&catalog](const NetworkState& s, RandomStream& rng) { return catalog.action(random_policy(s, catalog, rng)); };
    case PolicyKind::HTT:
        return [config](const NetworkState& s, RandomStream&) { return htt_policy(s, config); };
    case PolicyKind::Backscatter:
        return [config](const NetworkState& s, RandomStream&) { return backscatter_policy(s, config); };
    case PolicyKind::GreedyDDQN:
        break;
    }
    throw ContractViolation("make_baseline: ddqn is not a baseline policy");
}

} // namespace bcrn
