#include "bcrn/env.hpp"
#include "bcrn/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

using namespace bcrn;

namespace {

NetworkConfig single(int b_lo, int b_hi, double lambda = 0.0)
{
    NetworkConfig c;
    c.frame_slots = 10;
    c.busy_distribution = uniform_busy(10, b_lo, b_hi);
    TransmitterParams t;
    t.arrival_prob = lambda;
    c.transmitters = {t};
    return c;
}

NetworkState make_state(int b, std::vector<TransmitterState> t)
{
    return NetworkState{b, std::move(t)};
}

ScheduleAction make_action(int mu, std::vector<int> alpha, std::vector<int> beta)
{
    return ScheduleAction{mu, std::move(alpha), std::move(beta)};
}

// Independent enumeration: every tuple in [0, F]^(2N+1), filtered.
std::vector<std::vector<int>> brute_force_catalog(int n, int f, int b_max)
{
    std::vector<std::vector<int>> out;
    const int width = 2 * n + 1;
    std::vector<int> t(static_cast<std::size_t>(width), 0);
    std::function<void(int)> rec = [&](int pos) {
        if (pos == width) {
            int busy = t[0];
            int total = t[0];
            for (int i = 1; i <= n; ++i) {
                busy += t[static_cast<std::size_t>(i)];
                total += t[static_cast<std::size_t>(i)] + t[static_cast<std::size_t>(i + n)];
            }
            if (busy <= b_max && total <= f) {
                out.push_back(t);
            }
            return;
        }
        for (int v = 0; v <= f; ++v) {
            t[static_cast<std::size_t>(pos)] = v;
            rec(pos + 1);
        }
        t[static_cast<std::size_t>(pos)] = 0;
    };
    rec(0);
    return out; // lexicographic by construction
}

long long choose(int n, int k)
{
    long long r = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
    }
    return r;
}

} // namespace

TEST_CASE("default config is valid")
{
    const NetworkConfig c = NetworkConfig::defaults();
    CHECK_NOTHROW(c.validate());
    CHECK(c.n_transmitters() == 3);
    CHECK(c.max_busy() == 9);
    CHECK_NOTHROW(NetworkConfig::tiny_reference().validate());
}

TEST_CASE("validate rejects bad configs")
{
    NetworkConfig c = NetworkConfig::defaults();
    c.busy_distribution[3] += 1e-6;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = NetworkConfig::defaults();
    c.transmitters[1].arrival_prob = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = NetworkConfig::defaults();
    c.transmitters[0].queue_capacity = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = NetworkConfig::defaults();
    c.transmitters[0].active_cost = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = NetworkConfig::defaults();
    c.busy_distribution.pop_back();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("catalog: N=1, F=2, b_max=1 has the seven hand-listed actions")
{
    NetworkConfig c = single(1, 1);
    c.frame_slots = 2;
    c.busy_distribution = point_busy(2, 1);
    const ActionCatalog cat = enumerate_actions(c);
    const std::vector<std::vector<int>> expected{{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 1, 0},
                                                 {0, 1, 1}, {1, 0, 0}, {1, 0, 1}};
    REQUIRE(cat.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto row = cat.row(i);
        CHECK(std::vector<int>(row.begin(), row.end()) == expected[i]);
    }
}

TEST_CASE("catalog: default network gives 19162 actions")
{
    const ActionCatalog cat = enumerate_actions(NetworkConfig::defaults());
    CHECK(cat.size() == 19162);
    CHECK(static_cast<long long>(cat.size()) == choose(17, 7) - choose(13, 3));
}

TEST_CASE("catalog: F=0 leaves only the zero action")
{
    NetworkConfig c = single(0, 0);
    c.frame_slots = 0;
    c.busy_distribution = {1.0};
    const ActionCatalog cat = enumerate_actions(c);
    REQUIRE(cat.size() == 1);
    CHECK(cat.action(0) == make_action(0, {0}, {0}));
}

TEST_CASE("catalog matches a brute-force filter on small shapes")
{
    for (int n = 1; n <= 2; ++n) {
        for (int f = 0; f <= 5; ++f) {
            for (int b_max = 0; b_max <= f; ++b_max) {
                NetworkConfig c;
                c.frame_slots = f;
                c.busy_distribution = point_busy(f, b_max);
                c.transmitters.assign(static_cast<std::size_t>(n), TransmitterParams{});
                const ActionCatalog cat = enumerate_actions(c);
                const auto expected = brute_force_catalog(n, f, b_max);
                REQUIRE(cat.size() == expected.size());
                for (std::size_t i = 0; i < expected.size(); ++i) {
                    const auto row = cat.row(i);
                    REQUIRE(std::vector<int>(row.begin(), row.end()) == expected[i]);
                    REQUIRE(cat.index_of(cat.action(i)) == i);
                }
            }
        }
    }
}

TEST_CASE("catalog cap")
{
    CHECK_THROWS_AS(enumerate_actions(NetworkConfig::defaults(), 1000), CapacityError);
    try {
        enumerate_actions(NetworkConfig::defaults(), 1000);
    } catch (const CapacityError& e) {
        CHECK(std::string(e.what()).find("catalog too large") != std::string::npos);
    }
}

TEST_CASE("feasible indices agree with the predicate")
{
    const NetworkConfig c = NetworkConfig::defaults();
    const ActionCatalog cat = enumerate_actions(c);
    for (int b = 0; b <= c.frame_slots; ++b) {
        std::vector<std::uint32_t> expected;
        for (std::size_t i = 0; i < cat.size(); ++i) {
            if (cat.busy_use(i) <= b) {
                expected.push_back(static_cast<std::uint32_t>(i));
            }
        }
        const auto got = cat.feasible_indices(b);
        CHECK(std::vector<std::uint32_t>(got.begin(), got.end()) == expected);
    }
}

TEST_CASE("feasible examples")
{
    NetworkConfig c = NetworkConfig::defaults();
    const NetworkState s = make_state(3, {{0, 0}, {0, 0}, {0, 0}});
    CHECK(feasible(c, s, make_action(1, {1, 1, 0}, {2, 2, 1})));
    CHECK_FALSE(feasible(c, s, make_action(2, {1, 1, 0}, {0, 0, 0})));
    CHECK(feasible(c, s, make_action(0, {0, 0, 0}, {0, 0, 0})));
    CHECK_FALSE(feasible(c, s, make_action(0, {1, 1, 1}, {3, 3, 2})));
}

TEST_CASE("step: backscatter, harvest and active phases")
{
    const NetworkConfig c = single(1, 9);
    RandomStream rng(1);
    const StepOutcome out = step(c, make_state(4, {{5, 2}}), make_action(1, {2}, {3}), rng);
    const TransmitterFlow& f = out.flows[0];
    CHECK(f.backscattered == 2);
    CHECK(f.active_slots_used == 2);
    CHECK(f.active == 3);
    CHECK(out.reward == 5.0);
    CHECK(out.next_state.transmitters[0].queue == 0);
    CHECK(out.next_state.transmitters[0].energy == 2);
}

TEST_CASE("step: zero allocation only harvests")
{
    const NetworkConfig c = single(1, 9);
    RandomStream rng(1);
    const StepOutcome out = step(c, make_state(3, {{4, 0}}), make_action(0, {0}, {0}), rng);
    CHECK(out.next_state.transmitters[0].queue == 4);
    CHECK(out.next_state.transmitters[0].energy == 3);
    CHECK(out.reward == 0.0);
}

TEST_CASE("step: energy-limited active transmission")
{
    const NetworkConfig c = single(0, 9);
    RandomStream rng(1);
    const StepOutcome out = step(c, make_state(0, {{4, 1}}), make_action(0, {0}, {2}), rng);
    CHECK(out.flows[0].active_slots_used == 1);
    CHECK(out.flows[0].active == 2);
    CHECK(out.next_state.transmitters[0].queue == 2);
    CHECK(out.next_state.transmitters[0].energy == 0);
    CHECK(out.reward == 2.0);
}

TEST_CASE("step: success probabilities weight the reward")
{
    NetworkConfig c = single(1, 9);
    c.transmitters[0].success_backscatter = 0.5;
    c.transmitters[0].success_active = 0.25;
    RandomStream rng(1);
    const StepOutcome out = step(c, make_state(4, {{5, 2}}), make_action(1, {2}, {3}), rng);
    CHECK(out.reward == doctest::Approx(0.5 * 2 + 0.25 * 3));
}

TEST_CASE("step: harvest clips at capacity and records the overflow")
{
    const NetworkConfig c = single(1, 9);
    RandomStream rng(1);
    const StepOutcome out = step(c, make_state(9, {{0, 8}}), make_action(9, {0}, {0}), rng);
    CHECK(out.next_state.transmitters[0].energy == 10);
    CHECK(out.flows[0].harvested == 9);
    CHECK(out.flows[0].energy_overflow == 7);
}

TEST_CASE("step: arrivals beyond the queue are dropped")
{
    NetworkConfig c = single(1, 9, 1.0);
    RandomStream rng(1);
    const StepOutcome out = step(c, make_state(1, {{7, 0}}), make_action(0, {0}, {0}), rng);
    CHECK(out.flows[0].arrivals == 10);
    CHECK(out.next_state.transmitters[0].queue == 10);
    CHECK(out.flows[0].dropped == 7);
}

TEST_CASE("step rejects infeasible actions")
{
    const NetworkConfig c = single(1, 9);
    RandomStream rng(1);
    CHECK_THROWS_AS(step(c, make_state(2, {{5, 5}}), make_action(2, {1}, {0}), rng), ContractViolation);
    CHECK_THROWS_AS(step(c, make_state(2, {{5, 5}}), make_action(0, {1}, {10}), rng), ContractViolation);
}

TEST_CASE("next busy count follows the distribution")
{
    NetworkConfig c = single(5, 5);
    c.busy_distribution = point_busy(10, 5);
    RandomStream rng(2);
    NetworkState s = initial_state(c, rng);
    for (int i = 0; i < 100; ++i) {
        CHECK(s.busy_slots == 5);
        s = step(c, s, make_action(0, {0}, {0}), rng).next_state;
    }
}

TEST_CASE("sample_arrivals degenerate and small-probability cases")
{
    NetworkConfig c = single(1, 9, 0.0);
    RandomStream rng(4);
    for (int i = 0; i < 100; ++i) {
        CHECK(sample_arrivals(c, 0, rng) == 0);
    }
    c.transmitters[0].arrival_prob = 1.0;
    for (int i = 0; i < 100; ++i) {
        CHECK(sample_arrivals(c, 0, rng) == 10);
    }
    c.transmitters[0].arrival_prob = 0.1;
    const int n = 100000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) {
        zeros += sample_arrivals(c, 0, rng) == 0 ? 1 : 0;
    }
    const double p0 = std::pow(0.9, 10);
    CHECK(p0 == doctest::Approx(0.34868).epsilon(1e-4));
    CHECK(std::abs(zeros / static_cast<double>(n) - p0) < 3.0 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("binomial sampler moments within three standard errors")
{
    for (double lambda : {0.1, 0.3, 0.5, 0.8}) {
        NetworkConfig c = single(1, 9, lambda);
        RandomStream rng(derive_seed(17, "moments", static_cast<std::uint64_t>(lambda * 100)));
        const int n = 100000;
        std::vector<double> x(n);
        for (auto& v : x) {
            v = sample_arrivals(c, 0, rng);
        }
        double mean = 0.0;
        for (double v : x) {
            mean += v;
        }
        mean /= n;
        double m2 = 0.0;
        double m4 = 0.0;
        for (double v : x) {
            m2 += (v - mean) * (v - mean);
            m4 += std::pow(v - mean, 4);
        }
        const double var = m2 / (n - 1);
        m4 /= n;
        const double mu = 10 * lambda;
        const double sigma2 = 10 * lambda * (1 - lambda);
        CHECK(std::abs(mean - mu) < 3.0 * std::sqrt(sigma2 / n));
        // se of the sample variance: sqrt((m4 - s^4) / n)
        CHECK(std::abs(var - sigma2) < 3.0 * std::sqrt((m4 - var * var) / n));
    }
}

TEST_CASE("encode_state")
{
    const NetworkConfig c = single(1, 9);
    const auto full = encode_state(c, make_state(10, {{10, 10}}));
    CHECK(full == std::vector<double>{1.0, 1.0, 1.0});
    const auto empty = encode_state(c, make_state(0, {{0, 0}}));
    CHECK(empty == std::vector<double>{0.0, 0.0, 0.0});
    const auto mid = encode_state(c, make_state(4, {{5, 2}}));
    CHECK(mid[0] == doctest::Approx(0.4));
    CHECK(mid[1] == doctest::Approx(0.5));
    CHECK(mid[2] == doctest::Approx(0.2));

    NetworkConfig zero = c;
    zero.transmitters[0].energy_capacity = 0;
    CHECK(encode_state(zero, make_state(4, {{5, 0}}))[2] == 0.0);
}

TEST_CASE("initial_state")
{
    const NetworkConfig c = NetworkConfig::defaults();
    RandomStream rng(8);
    for (int i = 0; i < 1000; ++i) {
        const NetworkState s = initial_state(c, rng);
        CHECK(s.busy_slots >= 1);
        CHECK(s.busy_slots <= 9);
        for (const auto& t : s.transmitters) {
            CHECK(t.queue == 0);
            CHECK(t.energy == 0);
        }
    }
    NetworkConfig point = c;
    point.busy_distribution = point_busy(10, 5);
    CHECK(initial_state(point, rng).busy_slots == 5);
}

TEST_CASE("random feasible pairs respect bounds and conservation")
{
    const NetworkConfig c = NetworkConfig::defaults();
    const ActionCatalog cat = enumerate_actions(c);
    RandomStream rng(2024);
    for (int trial = 0; trial < 100000; ++trial) {
        NetworkState s;
        s.busy_slots = static_cast<int>(rng.uniform_index(11));
        for (const auto& t : c.transmitters) {
            s.transmitters.push_back({static_cast<int>(rng.uniform_index(static_cast<std::size_t>(t.queue_capacity) + 1)),
                                      static_cast<int>(rng.uniform_index(static_cast<std::size_t>(t.energy_capacity) + 1))});
        }
        const auto options = cat.feasible_indices(s.busy_slots);
        const ScheduleAction a = cat.action(options[rng.uniform_index(options.size())]);
        REQUIRE(feasible(c, s, a));
        const StepOutcome out = step(c, s, a, rng);
        REQUIRE(state_in_bounds(c, out.next_state));
        REQUIRE(out.reward >= 0.0);
        double cap = 0.0;
        double reward = 0.0;
        for (std::size_t n = 0; n < c.transmitters.size(); ++n) {
            const auto& p = c.transmitters[n];
            const auto& f = out.flows[n];
            const auto& before = s.transmitters[n];
            const auto& after = out.next_state.transmitters[n];
            cap += std::max(p.success_backscatter, p.success_active) * before.queue;
            reward += p.success_backscatter * f.backscattered + p.success_active * f.active;
            REQUIRE(f.backscattered + f.active <= before.queue);
            REQUIRE(after.queue - before.queue == f.arrivals - f.backscattered - f.active - f.dropped);
            REQUIRE(after.energy - before.energy == f.harvested - f.energy_consumed - f.energy_overflow);
            REQUIRE(f.energy_consumed == f.active_slots_used * p.active_cost);
            REQUIRE(f.energy_overflow >= 0);
            if (f.energy_overflow > 0) {
                REQUIRE(before.energy + f.harvested > p.energy_capacity);
            }
        }
        REQUIRE(out.reward <= cap + 1e-12);
        REQUIRE(out.reward == doctest::Approx(reward));
    }
}

TEST_CASE("identical seeds give identical trajectories")
{
    const NetworkConfig c = NetworkConfig::defaults();
    const ActionCatalog cat = enumerate_actions(c);
    auto run = [&](std::uint64_t seed) {
        RandomStream rng(seed);
        RandomStream pick(seed + 1);
        std::vector<NetworkState> path;
        NetworkState s = initial_state(c, rng);
        for (int i = 0; i < 500; ++i) {
            const auto options = cat.feasible_indices(s.busy_slots);
            s = step(c, s, cat.action(options[pick.uniform_index(options.size())]), rng).next_state;
            path.push_back(s);
        }
        return path;
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
}
