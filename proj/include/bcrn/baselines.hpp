#pragma once

#include "bcrn/env.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace bcrn {

enum class PolicyKind { Random, HTT, Backscatter, GreedyDDQN };

std::string_view to_string(PolicyKind kind);
/// Accepts the CLI spellings: random, htt, backscatter, ddqn.
std::optional<PolicyKind> parse_policy_kind(std::string_view text);

/// A scheduling policy as used by the evaluators.
using Policy = std::function<ScheduleAction(const NetworkState&, RandomStream&)>;

/// Uniform over the catalog actions feasible in `state`.
std::size_t random_policy(const NetworkState& state, const ActionCatalog& catalog, RandomStream& rng);

/// Harvest-then-transmit: harvest for the whole busy period, then hand out
/// idle slots one at a time to the transmitter with the largest remaining
/// transmittable load (ties to the lowest index).
ScheduleAction htt_policy(const NetworkState& state, const NetworkConfig& config);

/// Backscatter only: hand out busy slots one at a time to the transmitter
/// with the largest remaining queue (ties to the lowest index).
ScheduleAction backscatter_policy(const NetworkState& state, const NetworkConfig& config);

/// Wraps a baseline as a Policy. GreedyDDQN is not a baseline and throws.
Policy make_baseline(PolicyKind kind, const NetworkConfig& config, const ActionCatalog& catalog);

} // namespace bcrn
