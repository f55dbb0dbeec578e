#include "bcrn/oracle.hpp"

#include "bcrn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <string>

namespace bcrn {

// ---------------------------------------------------------------------------
// State space

StateSpace::StateSpace(const NetworkConfig& config)
{
    busy_position_.assign(static_cast<std::size_t>(config.frame_slots) + 1, -1);
    for (int b = 0; b <= config.frame_slots; ++b) {
        if (config.busy_distribution[static_cast<std::size_t>(b)] > 0.0) {
            busy_position_[static_cast<std::size_t>(b)] = static_cast<int>(busy_values_.size());
            busy_values_.push_back(b);
        }
    }
    size_ = busy_values_.size();
    for (const auto& t : config.transmitters) {
        radices_.push_back(t.queue_capacity + 1);
        radices_.push_back(t.energy_capacity + 1);
        size_ *= static_cast<std::size_t>(t.queue_capacity + 1) * static_cast<std::size_t>(t.energy_capacity + 1);
    }
}

std::optional<std::size_t> StateSpace::index_of(const NetworkState& state) const
{
    if (state.busy_slots < 0 || state.busy_slots >= static_cast<int>(busy_position_.size()) ||
        busy_position_[static_cast<std::size_t>(state.busy_slots)] < 0 ||
        state.transmitters.size() * 2 != radices_.size()) {
        return std::nullopt;
    }
    std::size_t index = static_cast<std::size_t>(busy_position_[static_cast<std::size_t>(state.busy_slots)]);
    for (std::size_t n = 0; n < state.transmitters.size(); ++n) {
        const int q = state.transmitters[n].queue;
        const int c = state.transmitters[n].energy;
        if (q < 0 || q >= radices_[2 * n] || c < 0 || c >= radices_[2 * n + 1]) {
            return std::nullopt;
        }
        index = index * static_cast<std::size_t>(radices_[2 * n]) + static_cast<std::size_t>(q);
        index = index * static_cast<std::size_t>(radices_[2 * n + 1]) + static_cast<std::size_t>(c);
    }
    return index;
}

NetworkState StateSpace::state(std::size_t index) const
{
    if (index >= size_) {
        throw ContractViolation("state index out of range");
    }
    NetworkState s;
    const std::size_t n = radices_.size() / 2;
    s.transmitters.resize(n);
    for (std::size_t k = n; k-- > 0;) {
        s.transmitters[k].energy = static_cast<int>(index % static_cast<std::size_t>(radices_[2 * k + 1]));
        index /= static_cast<std::size_t>(radices_[2 * k + 1]);
        s.transmitters[k].queue = static_cast<int>(index % static_cast<std::size_t>(radices_[2 * k]));
        index /= static_cast<std::size_t>(radices_[2 * k]);
    }
    s.busy_slots = busy_values_[index];
    return s;
}

// ---------------------------------------------------------------------------
// Exact model

std::vector<double> binomial_pmf(int trials, double p)
{
    std::vector<double> pmf(static_cast<std::size_t>(std::max(trials, 0)) + 1, 0.0);
    if (p <= 0.0) {
        pmf.front() = 1.0;
        return pmf;
    }
    if (p >= 1.0) {
        pmf.back() = 1.0;
        return pmf;
    }
    for (int m = 0; m <= trials; ++m) {
        const double log_choose = std::lgamma(trials + 1.0) - std::lgamma(m + 1.0) - std::lgamma(trials - m + 1.0);
        pmf[static_cast<std::size_t>(m)] = std::exp(log_choose + m * std::log(p) + (trials - m) * std::log1p(-p));
    }
    return pmf;
}

ExplicitMdp build_exact_mdp(const NetworkConfig& config, const ActionCatalog& catalog, std::size_t cap)
{
    config.validate();
    ExplicitMdp mdp;
    mdp.space = StateSpace(config);
    mdp.num_actions = catalog.size();
    const std::size_t states = mdp.space.size();
    if (catalog.size() != 0 && states > cap / catalog.size()) {
        throw CapacityError("instance too large: " + std::to_string(states) + " states x " +
                            std::to_string(catalog.size()) + " actions exceeds " + std::to_string(cap));
    }

    const std::size_t n = config.transmitters.size();
    std::vector<std::vector<double>> arrivals(n);
    for (std::size_t i = 0; i < n; ++i) {
        arrivals[i] = binomial_pmf(config.frame_slots, config.transmitters[i].arrival_prob);
    }

    mdp.choices.resize(states);
    for (std::size_t s = 0; s < states; ++s) {
        const NetworkState state = mdp.space.state(s);
        for (std::uint32_t a : catalog.feasible_indices(state.busy_slots)) {
            const ScheduleEffect effect = apply_schedule(config, state, catalog.action(a));

            // Joint law of next queues (clipped binomial arrivals) and next b.
            std::map<NetworkState, double, decltype([](const NetworkState& x, const NetworkState& y) {
                         if (x.busy_slots != y.busy_slots) {
                             return x.busy_slots < y.busy_slots;
                         }
                         for (std::size_t k = 0; k < x.transmitters.size(); ++k) {
                             if (x.transmitters[k].queue != y.transmitters[k].queue) {
                                 return x.transmitters[k].queue < y.transmitters[k].queue;
                             }
                         }
                         return false;
                     })>
                law;
            NetworkState base;
            base.transmitters = effect.after;
            law[base] = 1.0;
            for (std::size_t i = 0; i < n; ++i) {
                decltype(law) next_law;
                const int capacity = config.transmitters[i].queue_capacity;
                for (const auto& [partial, prob] : law) {
                    for (std::size_t m = 0; m < arrivals[i].size(); ++m) {
                        if (arrivals[i][m] == 0.0) {
                            continue;
                        }
                        NetworkState next = partial;
                        next.transmitters[i].queue = std::min(capacity, effect.after[i].queue + static_cast<int>(m));
                        next_law[next] += prob * arrivals[i][m];
                    }
                }
                law = std::move(next_law);
            }

            MdpChoice choice;
            choice.action = a;
            choice.reward = effect.reward;
            for (const auto& [partial, prob] : law) {
                for (int b : mdp.space.busy_values()) {
                    NetworkState next = partial;
                    next.busy_slots = b;
                    const auto index = mdp.space.index_of(next);
                    choice.outcomes.push_back(
                        {static_cast<std::uint32_t>(*index), prob * config.busy_distribution[static_cast<std::size_t>(b)]});
                }
            }
            std::sort(choice.outcomes.begin(), choice.outcomes.end(),
                      [](const MdpOutcome& x, const MdpOutcome& y) { return x.next < y.next; });
            mdp.choices[s].push_back(std::move(choice));
        }
    }
    return mdp;
}

// ---------------------------------------------------------------------------
// Value iteration

namespace {

double backup(const MdpChoice& choice, const std::vector<double>& values, double discount)
{
    double expected = 0.0;
    for (const auto& o : choice.outcomes) {
        expected += o.probability * values[o.next];
    }
    return choice.reward + discount * expected;
}

} // namespace

ValueSolution value_iteration(const ExplicitMdp& mdp, double discount, double tol, int max_iterations)
{
    if (!(discount >= 0.0 && discount < 1.0) || !(tol > 0.0)) {
        throw ContractViolation("value_iteration: need 0 <= discount < 1 and tol > 0");
    }
    const std::size_t states = mdp.num_states();
    const double threshold =
        discount > 0.0 ? tol * (1.0 - discount) / (2.0 * discount) : std::numeric_limits<double>::infinity();
    ValueSolution sol;
    sol.values.assign(states, 0.0);
    std::vector<double> next(states, 0.0);
    while (sol.iterations < max_iterations) {
        double residual = 0.0;
        for (std::size_t s = 0; s < states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& choice : mdp.choices[s]) {
                best = std::max(best, backup(choice, sol.values, discount));
            }
            next[s] = best;
            residual = std::max(residual, std::abs(best - sol.values[s]));
        }
        sol.values.swap(next);
        ++sol.iterations;
        sol.residual = residual;
        sol.residual_history.push_back(residual);
        if (residual < threshold) {
            break;
        }
    }

    sol.policy.resize(states);
    for (std::size_t s = 0; s < states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& choice : mdp.choices[s]) {
            const double q = backup(choice, sol.values, discount);
            if (q > best) {
                best = q;
                sol.policy[s] = choice.action;
            }
        }
    }
    return sol;
}

std::vector<std::vector<double>> q_from_values(const ExplicitMdp& mdp, const std::vector<double>& values, double discount)
{
    std::vector<std::vector<double>> q(mdp.num_states());
    for (std::size_t s = 0; s < q.size(); ++s) {
        for (const auto& choice : mdp.choices[s]) {
            q[s].push_back(backup(choice, values, discount));
        }
    }
    return q;
}

std::vector<std::vector<double>> bellman_backup(const ExplicitMdp& mdp, const std::vector<std::vector<double>>& q,
                                                double discount)
{
    std::vector<double> values(mdp.num_states());
    for (std::size_t s = 0; s < values.size(); ++s) {
        values[s] = *std::max_element(q[s].begin(), q[s].end());
    }
    return q_from_values(mdp, values, discount);
}

double long_run_average_reward(const ExplicitMdp& mdp, const NetworkConfig& config,
                               const std::vector<std::uint32_t>& policy)
{
    const std::size_t states = mdp.num_states();
    std::vector<const MdpChoice*> chosen(states, nullptr);
    for (std::size_t s = 0; s < states; ++s) {
        for (const auto& choice : mdp.choices[s]) {
            if (choice.action == policy[s]) {
                chosen[s] = &choice;
            }
        }
        if (chosen[s] == nullptr) {
            throw ContractViolation("policy picks an infeasible action in state " + std::to_string(s));
        }
    }

    std::vector<double> dist(states, 0.0);
    NetworkState start;
    start.transmitters.assign(config.transmitters.size(), TransmitterState{});
    for (int b : mdp.space.busy_values()) {
        start.busy_slots = b;
        dist[*mdp.space.index_of(start)] += config.busy_distribution[static_cast<std::size_t>(b)];
    }

    // Lazy chain (I + P) / 2: same stationary law, aperiodic.
    std::vector<double> next(states);
    for (int iter = 0; iter < 1'000'000; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t s = 0; s < states; ++s) {
            if (dist[s] == 0.0) {
                continue;
            }
            next[s] += 0.5 * dist[s];
            for (const auto& o : chosen[s]->outcomes) {
                next[o.next] += 0.5 * dist[s] * o.probability;
            }
        }
        double change = 0.0;
        for (std::size_t s = 0; s < states; ++s) {
            change += std::abs(next[s] - dist[s]);
        }
        dist.swap(next);
        if (change < 1e-14) {
            break;
        }
    }
    double avg = 0.0;
    for (std::size_t s = 0; s < states; ++s) {
        avg += dist[s] * chosen[s]->reward;
    }
    return avg;
}

void write_value_csv(std::ostream& out, const ExplicitMdp& mdp, const ActionCatalog& catalog,
                     const ValueSolution& solution)
{
    const int n = catalog.n_transmitters();
    out << "b";
    for (int i = 1; i <= n; ++i) {
        out << ",q" << i << ",c" << i;
    }
    out << ",value,mu";
    for (int i = 1; i <= n; ++i) {
        out << ",alpha" << i;
    }
    for (int i = 1; i <= n; ++i) {
        out << ",beta" << i;
    }
    out << '\n';
    char buf[64];
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        const NetworkState state = mdp.space.state(s);
        out << state.busy_slots;
        for (const auto& t : state.transmitters) {
            out << ',' << t.queue << ',' << t.energy;
        }
        std::snprintf(buf, sizeof buf, "%.9f", solution.values[s]);
        out << ',' << buf;
        for (int v : catalog.row(solution.policy[s])) {
            out << ',' << v;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Tabular Q-learning

double LearningRate::at(std::uint64_t visits) const
{
    const double n = static_cast<double>(visits);
    switch (kind) {
    case Kind::Harmonic:
        return 1.0 / (1.0 + n);
    case Kind::Polynomial:
        return 1.0 / std::pow(1.0 + n, exponent);
    case Kind::RescaledLinear:
        return 1.0 / (1.0 + n / scale);
    case Kind::Constant:
        return scale;
    }
    return 0.0;
}

namespace {

std::size_t argmax_position(const std::vector<double>& row)
{
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<std::vector<double>> zero_table(const StateSpace& space, const ActionCatalog& catalog)
{
    std::vector<std::vector<double>> q(space.size());
    for (std::size_t s = 0; s < q.size(); ++s) {
        q[s].assign(catalog.feasible_indices(space.state(s).busy_slots).size(), 0.0);
    }
    return q;
}

} // namespace

TabularQResult tabular_q(const NetworkConfig& config, const ActionCatalog& catalog, const TabularQOptions& options,
                         RandomStream& rng)
{
    TabularQResult result;
    result.space = StateSpace(config);
    if (catalog.size() != 0 && result.space.size() > options.cap / catalog.size()) {
        throw CapacityError("instance too large for a Q table");
    }
    result.q = zero_table(result.space, catalog);
    result.visits.resize(result.q.size());
    for (std::size_t s = 0; s < result.q.size(); ++s) {
        result.visits[s].assign(result.q[s].size(), 0);
    }

    for (int e = 0; e < options.episodes; ++e) {
        NetworkState state = initial_state(config, rng);
        for (int t = 0; t < options.episode_length; ++t) {
            const std::size_t s = *result.space.index_of(state);
            const auto feasible_here = catalog.feasible_indices(state.busy_slots);
            const std::size_t k = rng.uniform() < options.epsilon ? rng.uniform_index(feasible_here.size())
                                                                   : argmax_position(result.q[s]);
            const StepOutcome out = step(config, state, catalog.action(feasible_here[k]), rng);
            const std::size_t s_next = *result.space.index_of(out.next_state);
            const double best_next = *std::max_element(result.q[s_next].begin(), result.q[s_next].end());
            const double l = options.rate.at(result.visits[s][k]++);
            result.q[s][k] = (1.0 - l) * result.q[s][k] + l * (out.reward + options.discount * best_next);
            state = out.next_state;
        }
    }

    result.policy.resize(result.q.size());
    for (std::size_t s = 0; s < result.q.size(); ++s) {
        const auto feasible_here = catalog.feasible_indices(result.space.state(s).busy_slots);
        result.policy[s] = feasible_here[argmax_position(result.q[s])];
    }
    return result;
}

void q_learning_sweep(const NetworkConfig& config, const ActionCatalog& catalog, const StateSpace& space,
                      std::vector<std::vector<double>>& q, double rate, double discount, RandomStream& rng)
{
    const auto before = q;
    for (std::size_t s = 0; s < space.size(); ++s) {
        const NetworkState state = space.state(s);
        const auto feasible_here = catalog.feasible_indices(state.busy_slots);
        for (std::size_t k = 0; k < feasible_here.size(); ++k) {
            const StepOutcome out = step(config, state, catalog.action(feasible_here[k]), rng);
            const auto s_next = space.index_of(out.next_state);
            const double best_next = *std::max_element(before[*s_next].begin(), before[*s_next].end());
            q[s][k] = (1.0 - rate) * before[s][k] + rate * (out.reward + discount * best_next);
        }
    }
}

Estimate evaluate_policy(const NetworkConfig& config, const Policy& policy, int n_frames, RandomStream& rng,
                         RandomStream* policy_rng)
{
    if (n_frames < 1) {
        throw ContractViolation("evaluate_policy: n_frames must be >= 1");
    }
    RandomStream local(derive_seed(0, "policy"));
    RandomStream& prng = policy_rng != nullptr ? *policy_rng : local;
    std::vector<double> rewards;
    rewards.reserve(static_cast<std::size_t>(n_frames));
    NetworkState state = initial_state(config, rng);
    for (int t = 0; t < n_frames; ++t) {
        StepOutcome out = step(config, state, policy(state, prng), rng);
        rewards.push_back(out.reward);
        state = std::move(out.next_state);
    }
    return batch_means(rewards);
}

} // namespace bcrn
