#include "bcrn/errors.hpp"
#include "bcrn/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

using namespace bcrn;

namespace {

ExplicitMdp chain(std::vector<std::vector<MdpChoice>> choices)
{
    ExplicitMdp mdp;
    mdp.choices = std::move(choices);
    mdp.num_actions = 0;
    for (const auto& row : mdp.choices) {
        mdp.num_actions = std::max(mdp.num_actions, row.size());
    }
    return mdp;
}

double max_abs(const std::vector<std::vector<double>>& q)
{
    double m = 0.0;
    for (const auto& row : q) {
        for (double v : row) {
            m = std::max(m, std::abs(v));
        }
    }
    return m;
}

NetworkConfig deterministic_tiny()
{
    NetworkConfig c = NetworkConfig::tiny_reference();
    c.transmitters[0].arrival_prob = 0.0;
    c.busy_distribution = point_busy(c.frame_slots, 2);
    return c;
}

} // namespace

TEST_CASE("binomial pmf")
{
    const auto p = binomial_pmf(10, 0.1);
    CHECK(p[0] == doctest::Approx(0.34868).epsilon(1e-4));
    double sum = 0.0;
    double mean = 0.0;
    for (std::size_t m = 0; m < p.size(); ++m) {
        sum += p[m];
        mean += static_cast<double>(m) * p[m];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(binomial_pmf(4, 0.0) == std::vector<double>{1, 0, 0, 0, 0});
    CHECK(binomial_pmf(4, 1.0) == std::vector<double>{0, 0, 0, 0, 1});
}

TEST_CASE("value iteration: single state, single action")
{
    const ExplicitMdp mdp = chain({{MdpChoice{0, 2.0, {{0, 1.0}}}}});
    const ValueSolution v = value_iteration(mdp, 0.9, 1e-10);
    CHECK(v.values[0] == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(v.policy[0] == 0);
}

TEST_CASE("value iteration: two-state swap chain")
{
    const ExplicitMdp mdp = chain({{MdpChoice{0, 1.0, {{1, 1.0}}}}, {MdpChoice{0, 0.0, {{0, 1.0}}}}});
    const ValueSolution v = value_iteration(mdp, 0.9, 1e-10);
    CHECK(std::abs(v.values[0] - 1.0 / (1.0 - 0.81)) < 1e-9);
    CHECK(std::abs(v.values[1] - 0.9 / (1.0 - 0.81)) < 1e-9);
    CHECK(v.values[0] == doctest::Approx(5.263).epsilon(1e-3));
    CHECK(v.values[1] == doctest::Approx(4.737).epsilon(1e-3));
}

TEST_CASE("value iteration with zero discount is myopic")
{
    const ExplicitMdp mdp = chain({{MdpChoice{0, 1.0, {{1, 1.0}}}, MdpChoice{1, 3.0, {{0, 1.0}}}},
                                   {MdpChoice{0, 2.0, {{0, 1.0}}}, MdpChoice{1, 2.0, {{1, 1.0}}}}});
    const ValueSolution v = value_iteration(mdp, 0.0, 1e-10);
    CHECK(v.iterations == 1);
    CHECK(v.values == std::vector<double>{3.0, 2.0});
    CHECK(v.policy == std::vector<std::uint32_t>{1, 0});
}

TEST_CASE("value iteration argument checks")
{
    const ExplicitMdp mdp = chain({{MdpChoice{0, 1.0, {{0, 1.0}}}}});
    CHECK_THROWS_AS(value_iteration(mdp, 1.0, 1e-6), ContractViolation);
    CHECK_THROWS_AS(value_iteration(mdp, 0.5, 0.0), ContractViolation);
}

TEST_CASE("tiny instance: 48 states, stochastic rows, nonnegative rewards")
{
    const NetworkConfig c = NetworkConfig::tiny_reference();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    CHECK(mdp.num_states() == 48);
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        const NetworkState state = mdp.space.state(s);
        CHECK(mdp.space.index_of(state) == s);
        CHECK(mdp.choices[s].size() == cat.feasible_indices(state.busy_slots).size());
        for (const auto& choice : mdp.choices[s]) {
            CHECK(cat.is_feasible(choice.action, state.busy_slots));
            CHECK(choice.reward >= 0.0);
            double sum = 0.0;
            for (const auto& o : choice.outcomes) {
                sum += o.probability;
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("no arrivals and a fixed busy count give a deterministic model")
{
    const NetworkConfig c = deterministic_tiny();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    for (const auto& row : mdp.choices) {
        for (const auto& choice : row) {
            REQUIRE(choice.outcomes.size() == 1);
            CHECK(choice.outcomes[0].probability == 1.0);
        }
    }
}

TEST_CASE("arrivals at a full queue all land on the capacity")
{
    NetworkConfig c = NetworkConfig::tiny_reference();
    c.busy_distribution = point_busy(c.frame_slots, 1);
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    const std::size_t s = *mdp.space.index_of(NetworkState{1, {{3, 0}}});
    const auto& idle = mdp.choices[s].front(); // the zero action
    REQUIRE(cat.action(idle.action) == ScheduleAction{0, {0}, {0}});
    REQUIRE(idle.outcomes.size() == 1);
    CHECK(mdp.space.state(idle.outcomes[0].next).transmitters[0].queue == 3);
    CHECK(idle.outcomes[0].probability == doctest::Approx(1.0));
}

TEST_CASE("instance cap")
{
    const NetworkConfig c = NetworkConfig::defaults();
    const ActionCatalog cat = enumerate_actions(c);
    try {
        build_exact_mdp(c, cat);
        FAIL("expected CapacityError");
    } catch (const CapacityError& e) {
        CHECK(std::string(e.what()).find("instance too large") != std::string::npos);
    }
}

TEST_CASE("model rewards and transitions agree with the simulator")
{
    const NetworkConfig c = NetworkConfig::tiny_reference();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    RandomStream rng(99);
    const std::vector<std::size_t> states{0, 7, 21, 30, 47};
    for (std::size_t s : states) {
        const NetworkState state = mdp.space.state(s);
        for (std::size_t k : {std::size_t{0}, mdp.choices[s].size() / 2, mdp.choices[s].size() - 1}) {
            const MdpChoice& choice = mdp.choices[s][k];
            const ScheduleAction a = cat.action(choice.action);
            const int n = 20000;
            std::vector<double> rewards(n);
            std::map<std::uint32_t, int> hits;
            for (int i = 0; i < n; ++i) {
                const StepOutcome out = step(c, state, a, rng);
                rewards[static_cast<std::size_t>(i)] = out.reward;
                ++hits[static_cast<std::uint32_t>(*mdp.space.index_of(out.next_state))];
            }
            const Estimate e = mean_stderr(rewards);
            CHECK(std::abs(e.mean - choice.reward) <= 3.0 * e.stderr_mean + 1e-12);
            for (const auto& o : choice.outcomes) {
                const double se = std::sqrt(o.probability * (1 - o.probability) / n);
                CHECK(std::abs(hits[o.next] / static_cast<double>(n) - o.probability) < 5.0 * se + 1e-12);
            }
        }
    }
}

TEST_CASE("value iteration on the tiny instance")
{
    const NetworkConfig c = NetworkConfig::tiny_reference();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    const ValueSolution v = value_iteration(mdp, 0.9, 1e-10);
    for (std::size_t i = 2; i < v.residual_history.size(); ++i) {
        CHECK(v.residual_history[i] <= v.residual_history[i - 1] + 1e-15);
    }
    // Greedy policy is a fixed point of one more backup.
    const auto q = q_from_values(mdp, v.values, 0.9);
    for (std::size_t s = 0; s < q.size(); ++s) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < q[s].size(); ++k) {
            if (q[s][k] > q[s][best]) {
                best = k;
            }
        }
        CHECK(mdp.choices[s][best].action == v.policy[s]);
        CHECK(cat.is_feasible(v.policy[s], mdp.space.state(s).busy_slots));
        CHECK(std::isfinite(v.values[s]));
    }
}

TEST_CASE("a Q-learning sweep with rate 1 is one Bellman backup on a deterministic model")
{
    const NetworkConfig c = deterministic_tiny();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    RandomStream rng(4);
    std::vector<std::vector<double>> q(mdp.num_states());
    for (std::size_t s = 0; s < q.size(); ++s) {
        for (std::size_t k = 0; k < mdp.choices[s].size(); ++k) {
            q[s].push_back(rng.uniform() * 5.0);
        }
    }
    const auto expected = bellman_backup(mdp, q, 0.9);
    q_learning_sweep(c, cat, mdp.space, q, 1.0, 0.9, rng);
    for (std::size_t s = 0; s < q.size(); ++s) {
        for (std::size_t k = 0; k < q[s].size(); ++k) {
            CHECK(q[s][k] == doctest::Approx(expected[s][k]).epsilon(1e-14));
        }
    }
}

TEST_CASE("learning rates")
{
    CHECK(LearningRate{LearningRate::Kind::Harmonic}.at(0) == 1.0);
    CHECK(LearningRate{LearningRate::Kind::Harmonic}.at(3) == 0.25);
    CHECK(LearningRate{LearningRate::Kind::Polynomial, 0.5}.at(3) == doctest::Approx(0.5));
    CHECK(LearningRate{LearningRate::Kind::RescaledLinear, 1.0, 10.0}.at(10) == doctest::Approx(0.5));
    CHECK(LearningRate{LearningRate::Kind::Constant, 1.0, 0.2}.at(100) == 0.2);
}

TEST_CASE("tabular Q with zero discount learns expected rewards")
{
    const NetworkConfig c = NetworkConfig::tiny_reference();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    TabularQOptions o;
    o.discount = 0.0;
    o.episodes = 2000;
    RandomStream rng(6);
    const TabularQResult r = tabular_q(c, cat, o, rng);
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        for (std::size_t k = 0; k < mdp.choices[s].size(); ++k) {
            if (r.visits[s][k] == 0) {
                continue;
            }
            const double truth = mdp.choices[s][k].reward;
            CHECK(std::abs(r.q[s][k] - truth) <= 0.05 * std::max(truth, 1.0));
        }
    }
}

TEST_CASE("tabular Q approaches Q* on the tiny instance")
{
    const NetworkConfig c = NetworkConfig::tiny_reference();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    const auto q_star = q_from_values(mdp, value_iteration(mdp, 0.9, 1e-10).values, 0.9);
    TabularQOptions o;
    o.episodes = 50000;
    o.rate = {LearningRate::Kind::Polynomial, 0.6, 1.0};
    RandomStream rng(derive_seed(1, "tabular"));
    const TabularQResult r = tabular_q(c, cat, o, rng);
    double gap = 0.0;
    for (std::size_t s = 0; s < q_star.size(); ++s) {
        for (std::size_t k = 0; k < q_star[s].size(); ++k) {
            gap = std::max(gap, std::abs(q_star[s][k] - r.q[s][k]));
        }
    }
    CHECK(gap < 0.05 * max_abs(q_star));
    CHECK(long_run_average_reward(mdp, c, r.policy) >= 0.9 * long_run_average_reward(mdp, c, value_iteration(mdp, 0.9, 1e-10).policy));
}

TEST_CASE("evaluate_policy")
{
    const NetworkConfig c = NetworkConfig::tiny_reference();
    const ActionCatalog cat = enumerate_actions(c);
    const Policy idle = [](const NetworkState&, RandomStream&) { return ScheduleAction{0, {0}, {0}}; };
    RandomStream rng(1);
    CHECK(evaluate_policy(c, idle, 1000, rng).mean == 0.0);
    CHECK_THROWS_AS(evaluate_policy(c, idle, 0, rng), ContractViolation);

    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    const ValueSolution v = value_iteration(mdp, 0.9, 1e-10);
    const Policy optimal = [&](const NetworkState& s, RandomStream&) {
        return cat.action(v.policy[*mdp.space.index_of(s)]);
    };
    const double exact = long_run_average_reward(mdp, c, v.policy);
    RandomStream a(5), b(5);
    const Estimate e = evaluate_policy(c, optimal, 100000, a);
    CHECK(std::abs(e.mean - exact) < 3.0 * e.stderr_mean);
    const Estimate again = evaluate_policy(c, optimal, 100000, b);
    CHECK(again.mean == e.mean);
    CHECK(again.stderr_mean == e.stderr_mean);
}

TEST_CASE("value csv")
{
    const NetworkConfig c = NetworkConfig::tiny_reference();
    const ActionCatalog cat = enumerate_actions(c);
    const ExplicitMdp mdp = build_exact_mdp(c, cat);
    const ValueSolution v = value_iteration(mdp, 0.9, 1e-6);
    std::ostringstream out;
    write_value_csv(out, mdp, cat, v);
    const std::string text = out.str();
    CHECK(text.rfind("b,q1,c1,value,mu,alpha1,beta1\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 49);
}
