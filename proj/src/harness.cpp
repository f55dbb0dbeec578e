#include "bcrn/harness.hpp"

#include "bcrn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

namespace bcrn {

namespace {

const std::vector<std::string> kTransmitterKeys{
    "queue_capacity", "energy_capacity", "arrival_prob",        "backscatter_rate", "active_rate",
    "harvest_rate",   "active_cost",     "success_backscatter", "success_active",
};

const std::vector<std::string> kGlobalKeys{
    // network
    "transmitters", "frame_slots", "busy_min", "busy_max", "busy_pmf",
    // agent
    "discount", "batch_size", "target_sync_period", "episode_length", "total_iterations", "learn_start",
    "replay_capacity", "boundary", "hidden_layers", "epsilon_start", "epsilon_end", "learning_rate", "adam_beta1",
    "adam_beta2", "adam_epsilon", "clip_norm",
    // experiment
    "policy", "seed", "out", "episodes", "eval_frames", "moving_average", "lambda_grid", "busy_grid", "sweep_mode",
    "action_cap", "tabular_episodes", "tabular_rate", "tabular_rate_exponent", "tabular_rate_scale"};

bool is_transmitter_key(const std::string& key)
{
    return std::find(kTransmitterKeys.begin(), kTransmitterKeys.end(), key) != kTransmitterKeys.end();
}

bool is_global_key(const std::string& key)
{
    return std::find(kGlobalKeys.begin(), kGlobalKeys.end(), key) != kGlobalKeys.end();
}

std::string trim(const std::string& text)
{
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t\r");
    return text.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            items.push_back(item);
        }
    }
    return items;
}

long long to_integer(const std::string& key, const std::string& value)
{
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size()) {
        throw ConfigError(key + ": expected an integer, got '" + value + "'");
    }
    return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value)
{
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        if (!value.empty() && value[0] != '-') {
            out = std::stoull(value, &used);
        }
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    }
    return out;
}

int to_int(const std::string& key, const std::string& value)
{
    const long long v = to_integer(key, value);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw ConfigError(key + ": value out of range");
    }
    return static_cast<int>(v);
}

double to_real(const std::string& key, const std::string& value)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size() || !std::isfinite(out)) {
        throw ConfigError(key + ": expected a finite number, got '" + value + "'");
    }
    return out;
}

void apply_transmitter_key(TransmitterParams& t, const std::string& key, const std::string& where,
                           const std::string& value)
{
    if (key == "queue_capacity") {
        t.queue_capacity = to_int(where, value);
    } else if (key == "energy_capacity") {
        t.energy_capacity = to_int(where, value);
    } else if (key == "arrival_prob") {
        t.arrival_prob = to_real(where, value);
    } else if (key == "backscatter_rate") {
        t.backscatter_rate = to_int(where, value);
    } else if (key == "active_rate") {
        t.active_rate = to_int(where, value);
    } else if (key == "harvest_rate") {
        t.harvest_rate = to_int(where, value);
    } else if (key == "active_cost") {
        t.active_cost = to_int(where, value);
    } else if (key == "success_backscatter") {
        t.success_backscatter = to_real(where, value);
    } else if (key == "success_active") {
        t.success_active = to_real(where, value);
    }
}

MetricRow row(const std::string& experiment, PolicyKind kind, double x, const Estimate& e)
{
    return {experiment, std::string(to_string(kind)), x, e.mean, e.stderr_mean};
}

constexpr PolicyKind kBaselines[] = {PolicyKind::Random, PolicyKind::HTT, PolicyKind::Backscatter};

std::uint64_t agent_seed(const ExperimentSpec& spec)
{
    return derive_seed(spec.seed, "agent");
}

} // namespace

// ---------------------------------------------------------------------------
// Spec

void ExperimentSpec::validate() const
{
    network.validate();
    agent.validate();
    if (episodes < 0) {
        throw ConfigError("episodes must be >= 0");
    }
    if (eval_frames < 1) {
        throw ConfigError("eval_frames must be >= 1");
    }
    if (moving_average < 1) {
        throw ConfigError("moving_average must be >= 1");
    }
    for (double l : lambda_grid) {
        if (!(l >= 0.0 && l <= 1.0)) {
            throw ConfigError("lambda_grid values must lie in [0, 1]");
        }
    }
    for (int b : busy_grid) {
        if (b < 0 || b > network.frame_slots) {
            throw ConfigError("busy_grid values must lie in [0, frame_slots]");
        }
    }
    if (tabular_episodes < 0) {
        throw ConfigError("tabular_episodes must be >= 0");
    }
}

const std::vector<std::string>& known_config_keys()
{
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> all = kGlobalKeys;
        all.insert(all.end(), kTransmitterKeys.begin(), kTransmitterKeys.end());
        return all;
    }();
    return keys;
}

void SpecBuilder::set(const std::string& key, const std::string& value, int transmitter)
{
    if (transmitter > 0) {
        if (!is_transmitter_key(key)) {
            throw ConfigError("unknown transmitter key '" + key + "'");
        }
        sections_[transmitter][key] = value;
        origins_["transmitter." + std::to_string(transmitter) + "." + key] = origin_;
        return;
    }
    if (!is_global_key(key) && !is_transmitter_key(key)) {
        throw ConfigError("unknown key '" + key + "'");
    }
    globals_[key] = value;
    origins_[key] = origin_;
}

void SpecBuilder::set(const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("expected key=value, got '" + assignment + "'");
    }
    std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    int transmitter = 0;
    if (key.rfind("transmitter.", 0) == 0) {
        const auto dot = key.find('.', 12);
        if (dot == std::string::npos) {
            throw ConfigError("expected transmitter.k.key, got '" + key + "'");
        }
        transmitter = to_int("transmitter index", key.substr(12, dot - 12));
        if (transmitter < 1) {
            throw ConfigError("transmitter sections count from 1");
        }
        key = key.substr(dot + 1);
    }
    set(key, value, transmitter);
}

void SpecBuilder::parse(std::istream& in, const std::string& source)
{
    std::string line;
    int line_no = 0;
    int section = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        try {
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw ConfigError("unterminated section header");
                }
                const std::string name = trim(line.substr(1, line.size() - 2));
                if (name == "global") {
                    section = 0;
                } else if (name.rfind("transmitter.", 0) == 0) {
                    section = to_int("transmitter index", name.substr(12));
                    if (section < 1) {
                        throw ConfigError("transmitter sections count from 1");
                    }
                } else {
                    throw ConfigError("unknown section '" + name + "'");
                }
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("expected key = value");
            }
            origin_ = source + ":" + std::to_string(line_no);
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), section);
            origin_.clear();
        } catch (const ConfigError& e) {
            origin_.clear();
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void SpecBuilder::parse_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    parse(in, path.string());
}

ExperimentSpec SpecBuilder::build() const
{
    ExperimentSpec spec;
    auto get = [this](const std::string& key) -> const std::string* {
        const auto it = globals_.find(key);
        return it == globals_.end() ? nullptr : &it->second;
    };
    // "file:line: key" for values that came from a config file.
    auto label = [this](const std::string& key) {
        const auto it = origins_.find(key);
        return it == origins_.end() || it->second.empty() ? key : it->second + ": " + key;
    };

    // Network shape first; everything else refers to it.
    int n = spec.network.n_transmitters();
    if (auto v = get("transmitters")) {
        n = to_int(label("transmitters"), *v);
        if (n < 1) {
            throw ConfigError("transmitters must be >= 1");
        }
    }
    if (auto v = get("frame_slots")) {
        spec.network.frame_slots = to_int(label("frame_slots"), *v);
        if (spec.network.frame_slots < 0) {
            throw ConfigError("frame_slots must be >= 0");
        }
    }
    const int f = spec.network.frame_slots;
    if (auto v = get("busy_pmf")) {
        if (get("busy_min") || get("busy_max")) {
            throw ConfigError("busy_pmf cannot be combined with busy_min/busy_max");
        }
        std::vector<double> pmf;
        for (const auto& item : split_list(*v)) {
            pmf.push_back(to_real(label("busy_pmf"), item));
        }
        if (static_cast<int>(pmf.size()) != f + 1) {
            throw ConfigError("busy_pmf needs frame_slots + 1 entries");
        }
        spec.network.busy_distribution = pmf;
    } else {
        const int lo = get("busy_min") ? to_int(label("busy_min"), *get("busy_min")) : std::min(1, f);
        const int hi = get("busy_max") ? to_int(label("busy_max"), *get("busy_max")) : std::max(f - 1, lo);
        if (lo < 0 || hi > f || lo > hi) {
            throw ConfigError("need 0 <= busy_min <= busy_max <= frame_slots");
        }
        spec.network.busy_distribution = uniform_busy(f, lo, hi);
    }

    TransmitterParams shared;
    for (const auto& key : kTransmitterKeys) {
        if (auto v = get(key)) {
            apply_transmitter_key(shared, key, label(key), *v);
        }
    }
    spec.network.transmitters.assign(static_cast<std::size_t>(n), shared);
    for (const auto& [k, keys] : sections_) {
        if (k > n) {
            throw ConfigError("section [transmitter." + std::to_string(k) + "] but only " + std::to_string(n) +
                              " transmitters");
        }
        for (const auto& [key, value] : keys) {
            apply_transmitter_key(spec.network.transmitters[static_cast<std::size_t>(k - 1)], key,
                                  label("transmitter." + std::to_string(k) + "." + key), value);
        }
    }

    AgentConfig& a = spec.agent;
    if (auto v = get("discount")) a.discount = to_real(label("discount"), *v);
    if (auto v = get("batch_size")) a.batch_size = to_unsigned(label("batch_size"), *v);
    if (auto v = get("target_sync_period")) a.target_sync_period = to_unsigned(label("target_sync_period"), *v);
    if (auto v = get("episode_length")) a.episode_length = to_int(label("episode_length"), *v);
    if (auto v = get("learn_start")) a.learn_start = to_unsigned(label("learn_start"), *v);
    if (auto v = get("replay_capacity")) a.replay_capacity = to_unsigned(label("replay_capacity"), *v);
    if (auto v = get("epsilon_start")) a.epsilon_start = to_real(label("epsilon_start"), *v);
    if (auto v = get("epsilon_end")) a.epsilon_end = to_real(label("epsilon_end"), *v);
    if (auto v = get("learning_rate")) a.adam.learning_rate = to_real(label("learning_rate"), *v);
    if (auto v = get("adam_beta1")) a.adam.beta1 = to_real(label("adam_beta1"), *v);
    if (auto v = get("adam_beta2")) a.adam.beta2 = to_real(label("adam_beta2"), *v);
    if (auto v = get("adam_epsilon")) a.adam.epsilon = to_real(label("adam_epsilon"), *v);
    if (auto v = get("clip_norm")) a.adam.clip_norm = to_real(label("clip_norm"), *v);
    if (auto v = get("boundary")) {
        if (*v == "terminate") {
            a.boundary = BoundaryMode::Terminate;
        } else if (*v == "bootstrap") {
            a.boundary = BoundaryMode::Bootstrap;
        } else {
            throw ConfigError("boundary: expected terminate or bootstrap, got '" + *v + "'");
        }
    }
    if (auto v = get("hidden_layers")) {
        a.hidden_layers.clear();
        for (const auto& item : split_list(*v)) {
            a.hidden_layers.push_back(to_int(label("hidden_layers"), item));
        }
    }

    if (auto v = get("policy")) {
        const auto kind = parse_policy_kind(*v);
        if (!kind) {
            throw ConfigError("policy: expected ddqn, random, htt or backscatter, got '" + *v + "'");
        }
        spec.policy = *kind;
    }
    if (auto v = get("seed")) spec.seed = to_unsigned(label("seed"), *v);
    if (auto v = get("out")) spec.out_dir = *v;
    if (auto v = get("episodes")) spec.episodes = to_int(label("episodes"), *v);
    if (auto v = get("eval_frames")) spec.eval_frames = to_int(label("eval_frames"), *v);
    if (auto v = get("moving_average")) spec.moving_average = to_int(label("moving_average"), *v);
    if (auto v = get("action_cap")) spec.action_cap = to_unsigned(label("action_cap"), *v);
    if (auto v = get("tabular_episodes")) spec.tabular_episodes = to_int(label("tabular_episodes"), *v);
    if (auto v = get("lambda_grid")) {
        spec.lambda_grid.clear();
        for (const auto& item : split_list(*v)) {
            spec.lambda_grid.push_back(to_real(label("lambda_grid"), item));
        }
    }
    if (auto v = get("busy_grid")) {
        spec.busy_grid.clear();
        for (const auto& item : split_list(*v)) {
            spec.busy_grid.push_back(to_int(label("busy_grid"), item));
        }
    } else {
        spec.busy_grid.clear();
        for (int b = 0; b <= f; ++b) {
            spec.busy_grid.push_back(b);
        }
    }
    if (auto v = get("sweep_mode")) {
        if (*v == "retrain") {
            spec.sweep_mode = SweepMode::Retrain;
        } else if (*v == "frozen") {
            spec.sweep_mode = SweepMode::Frozen;
        } else {
            throw ConfigError("sweep_mode: expected retrain or frozen, got '" + *v + "'");
        }
    }
    if (auto v = get("tabular_rate")) {
        using K = LearningRate::Kind;
        if (*v == "harmonic") {
            spec.tabular_rate.kind = K::Harmonic;
        } else if (*v == "polynomial") {
            spec.tabular_rate.kind = K::Polynomial;
        } else if (*v == "linear") {
            spec.tabular_rate.kind = K::RescaledLinear;
        } else if (*v == "constant") {
            spec.tabular_rate.kind = K::Constant;
        } else {
            throw ConfigError("tabular_rate: expected harmonic, polynomial, linear or constant");
        }
    }
    if (auto v = get("tabular_rate_exponent")) spec.tabular_rate.exponent = to_real(label("tabular_rate_exponent"), *v);
    if (auto v = get("tabular_rate_scale")) spec.tabular_rate.scale = to_real(label("tabular_rate_scale"), *v);

    // The epsilon horizon defaults to the whole training run.
    if (auto v = get("total_iterations")) {
        a.total_iterations = to_unsigned(label("total_iterations"), *v);
    } else {
        a.total_iterations = static_cast<std::uint64_t>(std::max(spec.episodes, 1)) *
                             static_cast<std::uint64_t>(std::max(a.episode_length, 1));
    }

    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Output

std::string format_number(double value)
{
    if (std::isnan(value)) {
        return "nan";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    // Avoid "-0.000000" so equal results compare equal as text.
    if (std::string_view(buf) == "-0.000000") {
        return "0.000000";
    }
    return buf;
}

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

void write_training_header(std::ostream& out)
{
    out << "episode,scheme,throughput,stderr,moving_avg\n";
}

void write_sweep_csv(std::ostream& out, const std::string& x_name, const std::vector<MetricRow>& rows)
{
    out << x_name << ",scheme,throughput,stderr\n";
    for (const auto& r : rows) {
        if (x_name == "busy_slots") {
            out << static_cast<long long>(r.x);
        } else {
            out << format_number(r.x);
        }
        out << ',' << r.scheme << ',' << format_number(r.throughput) << ',' << format_number(r.stderr_mean) << '\n';
    }
}

void write_oracle_csv(std::ostream& out, const OracleComparison& comparison)
{
    out << "scheme,exact_average,throughput,stderr\n";
    for (const auto& r : comparison.rows) {
        out << r.scheme << ',' << (std::isnan(r.x) ? std::string() : format_number(r.x)) << ','
            << format_number(r.throughput) << ',' << format_number(r.stderr_mean) << '\n';
    }
}

void write_heatmap_csv(std::ostream& out, const std::vector<HeatmapCell>& cells)
{
    out << "q1,c1,mean_alpha1,mean_beta1,visit_count\n";
    for (const auto& c : cells) {
        out << c.q1 << ',' << c.c1 << ',' << format_number(c.mean_alpha1) << ',' << format_number(c.mean_beta1) << ','
            << c.visits << '\n';
    }
}

// ---------------------------------------------------------------------------
// Experiments

std::shared_ptr<const ActionCatalog> make_catalog(const NetworkConfig& config, std::size_t cap)
{
    return std::make_shared<const ActionCatalog>(enumerate_actions(config, cap));
}

std::unique_ptr<DdqnAgent> make_agent(const ExperimentSpec& spec, const NetworkConfig& network)
{
    return std::make_unique<DdqnAgent>(network, make_catalog(network, spec.action_cap), spec.agent, agent_seed(spec));
}

TrainingRun run_training(const ExperimentSpec& spec, std::ostream* curve, const ProgressFn& progress)
{
    spec.validate();
    TrainingRun run;
    run.agent = make_agent(spec, spec.network);
    const ActionCatalog& catalog = run.agent->catalog();
    if (curve != nullptr) {
        write_training_header(*curve);
    }

    std::vector<Policy> baselines;
    for (PolicyKind kind : kBaselines) {
        baselines.push_back(make_baseline(kind, spec.network, catalog));
    }
    std::map<std::string, std::deque<double>> windows;

    for (int e = 0; e < spec.episodes; ++e) {
        std::vector<MetricRow> rows;
        RandomStream env(derive_seed(spec.seed, "env", static_cast<std::uint64_t>(e)));
        const EpisodeMetrics m = run.agent->run_episode(e, env, true);
        rows.push_back({"training", "ddqn", static_cast<double>(e), m.mean_reward, m.stderr_reward});

        for (std::size_t k = 0; k < baselines.size(); ++k) {
            // Same environment stream as the DDQN episode: paired comparison.
            RandomStream paired(derive_seed(spec.seed, "env", static_cast<std::uint64_t>(e)));
            RandomStream choice(derive_seed(spec.seed, "baseline", static_cast<std::uint64_t>(e)));
            std::vector<double> rewards;
            rewards.reserve(static_cast<std::size_t>(spec.agent.episode_length));
            NetworkState state = initial_state(spec.network, paired);
            for (int t = 0; t < spec.agent.episode_length; ++t) {
                StepOutcome out = step(spec.network, state, baselines[k](state, choice), paired);
                rewards.push_back(out.reward);
                state = std::move(out.next_state);
            }
            rows.push_back(row("training", kBaselines[k], static_cast<double>(e), mean_stderr(rewards)));
        }

        if (curve != nullptr) {
            for (const auto& r : rows) {
                auto& w = windows[r.scheme];
                w.push_back(r.throughput);
                if (static_cast<int>(w.size()) > spec.moving_average) {
                    w.pop_front();
                }
                double sum = 0.0;
                for (double v : w) {
                    sum += v;
                }
                *curve << e << ',' << r.scheme << ',' << format_number(r.throughput) << ','
                       << format_number(r.stderr_mean) << ',' << format_number(sum / static_cast<double>(w.size()))
                       << '\n';
            }
            curve->flush();
        }
        if (progress && ((e + 1) % 50 == 0 || e + 1 == spec.episodes)) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "episode %d/%d ddqn %.3f epsilon %.3f loss %.4g", e + 1, spec.episodes,
                          m.mean_reward, m.epsilon, m.mean_loss);
            progress(buf);
        }
        run.rows.insert(run.rows.end(), rows.begin(), rows.end());
    }
    return run;
}

Estimate evaluate_scheme(const ExperimentSpec& spec, const NetworkConfig& network, PolicyKind kind,
                         const DdqnAgent* agent, std::uint64_t point)
{
    RandomStream env(derive_seed(spec.seed, "evaluation", point));
    RandomStream choice(derive_seed(spec.seed, "evaluation-policy", point));
    if (kind == PolicyKind::GreedyDDQN) {
        if (agent == nullptr) {
            throw ContractViolation("evaluate_scheme: ddqn needs a trained agent");
        }
        return evaluate_policy(network, agent->greedy_policy(), spec.eval_frames, env, &choice);
    }
    const auto catalog = make_catalog(network, spec.action_cap);
    return evaluate_policy(network, make_baseline(kind, network, *catalog), spec.eval_frames, env, &choice);
}

namespace {

std::vector<MetricRow> sweep(const ExperimentSpec& spec, const std::string& name, const std::vector<double>& grid,
                             const std::function<NetworkConfig(double)>& configure, const ProgressFn& progress)
{
    spec.validate();
    std::vector<MetricRow> rows;
    std::unique_ptr<DdqnAgent> frozen;
    if (spec.sweep_mode == SweepMode::Frozen) {
        frozen = run_training(spec, nullptr, progress).agent;
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        ExperimentSpec point = spec;
        point.network = configure(grid[i]);
        point.network.validate();
        std::unique_ptr<DdqnAgent> trained;
        const DdqnAgent* agent = frozen.get();
        if (spec.sweep_mode == SweepMode::Retrain) {
            trained = run_training(point, nullptr).agent;
            agent = trained.get();
        }
        rows.push_back(row(name, PolicyKind::GreedyDDQN, grid[i],
                           evaluate_scheme(point, point.network, PolicyKind::GreedyDDQN, agent, i)));
        for (PolicyKind kind : kBaselines) {
            rows.push_back(row(name, kind, grid[i], evaluate_scheme(point, point.network, kind, nullptr, i)));
        }
        if (progress) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s %g: ddqn %.3f random %.3f htt %.3f backscatter %.3f", name.c_str(),
                          grid[i], rows[rows.size() - 4].throughput, rows[rows.size() - 3].throughput,
                          rows[rows.size() - 2].throughput, rows[rows.size() - 1].throughput);
            progress(buf);
        }
    }
    return rows;
}

} // namespace

std::vector<MetricRow> sweep_lambda(const ExperimentSpec& spec, const ProgressFn& progress)
{
    auto configure = [&spec](double lambda) {
        NetworkConfig c = spec.network;
        for (auto& t : c.transmitters) {
            t.arrival_prob = lambda;
        }
        return c;
    };
    return sweep(spec, "lambda", spec.lambda_grid, configure, progress);
}

std::vector<MetricRow> sweep_busy(const ExperimentSpec& spec, const ProgressFn& progress)
{
    std::vector<double> grid(spec.busy_grid.begin(), spec.busy_grid.end());
    auto configure = [&spec](double b) {
        NetworkConfig c = spec.network;
        c.busy_distribution = point_busy(c.frame_slots, static_cast<int>(b));
        return c;
    };
    return sweep(spec, "busy_slots", grid, configure, progress);
}

std::vector<HeatmapCell> policy_heatmap(const DdqnAgent& agent, const ExperimentSpec& spec)
{
    const NetworkConfig& config = agent.network();
    const TransmitterParams& t1 = config.transmitters.front();
    const std::size_t width = static_cast<std::size_t>(t1.energy_capacity) + 1;
    std::vector<HeatmapCell> grid((static_cast<std::size_t>(t1.queue_capacity) + 1) * width);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid[i].q1 = static_cast<int>(i / width);
        grid[i].c1 = static_cast<int>(i % width);
    }

    RandomStream env(derive_seed(spec.seed, "evaluation", 0));
    NetworkState state = initial_state(config, env);
    for (int frame = 0; frame < spec.eval_frames; ++frame) {
        const ScheduleAction action = agent.catalog().action(agent.greedy(state));
        HeatmapCell& cell = grid[static_cast<std::size_t>(state.transmitters[0].queue) * width +
                                 static_cast<std::size_t>(state.transmitters[0].energy)];
        cell.mean_alpha1 += action.backscatter_slots[0];
        cell.mean_beta1 += action.active_slots[0];
        ++cell.visits;
        state = step(config, state, action, env).next_state;
    }

    std::vector<HeatmapCell> cells;
    for (auto& c : grid) {
        if (c.visits > 0) {
            c.mean_alpha1 /= static_cast<double>(c.visits);
            c.mean_beta1 /= static_cast<double>(c.visits);
            cells.push_back(c);
        }
    }
    return cells;
}

double pooled_rank_correlation(const std::vector<HeatmapCell>& cells, bool alpha_against_queue)
{
    // alpha vs q1 within fixed c1, or beta vs c1 within fixed q1.
    std::map<int, std::vector<const HeatmapCell*>> slices;
    for (const auto& c : cells) {
        slices[alpha_against_queue ? c.c1 : c.q1].push_back(&c);
    }
    double weighted = 0.0;
    double weight = 0.0;
    for (const auto& [key, slice] : slices) {
        if (slice.size() < 2) {
            continue;
        }
        std::vector<double> x;
        std::vector<double> y;
        double visits = 0.0;
        for (const HeatmapCell* c : slice) {
            x.push_back(alpha_against_queue ? c->q1 : c->c1);
            y.push_back(alpha_against_queue ? c->mean_alpha1 : c->mean_beta1);
            visits += static_cast<double>(c->visits);
        }
        weighted += visits * spearman(x, y);
        weight += visits;
    }
    return weight > 0.0 ? weighted / weight : 0.0;
}

OracleComparison oracle_compare(const ExperimentSpec& spec, const ProgressFn& progress)
{
    spec.validate();
    OracleComparison result;
    const auto catalog = make_catalog(spec.network, spec.action_cap);
    const ExplicitMdp mdp = build_exact_mdp(spec.network, *catalog);
    const double discount = spec.agent.discount;
    const ValueSolution vi = value_iteration(mdp, discount, 1e-10);
    {
        auto out = open_output(spec.out_dir, "value_function.csv");
        write_value_csv(out, mdp, *catalog, vi);
    }
    result.optimal_average = long_run_average_reward(mdp, spec.network, vi.policy);
    if (progress) {
        progress("value iteration: " + std::to_string(mdp.num_states()) + " states, " +
                 std::to_string(vi.iterations) + " sweeps");
    }

    const auto q_star = q_from_values(mdp, vi.values, discount);
    double q_max = 0.0;
    for (const auto& r : q_star) {
        for (double v : r) {
            q_max = std::max(q_max, std::abs(v));
        }
    }

    TabularQOptions options;
    options.discount = discount;
    options.episodes = spec.tabular_episodes;
    options.episode_length = spec.agent.episode_length;
    options.rate = spec.tabular_rate;
    RandomStream tabular_rng(derive_seed(spec.seed, "tabular"));
    const TabularQResult tq = tabular_q(spec.network, *catalog, options, tabular_rng);
    double distance = 0.0;
    for (std::size_t s = 0; s < q_star.size(); ++s) {
        for (std::size_t k = 0; k < q_star[s].size(); ++k) {
            distance = std::max(distance, std::abs(q_star[s][k] - tq.q[s][k]));
        }
    }
    result.tabular_q_distance = q_max > 0.0 ? distance / q_max : distance;
    if (progress) {
        progress("tabular q: relative sup-norm distance " + format_number(result.tabular_q_distance));
    }

    const auto agent = run_training(spec, nullptr, progress).agent;
    std::vector<std::uint32_t> greedy(mdp.num_states());
    for (std::size_t s = 0; s < greedy.size(); ++s) {
        greedy[s] = static_cast<std::uint32_t>(agent->greedy(mdp.space.state(s)));
    }

    auto policy_of = [&](const std::vector<std::uint32_t>& table) -> Policy {
        return [&mdp, &catalog, table](const NetworkState& s, RandomStream&) {
            return catalog->action(table[*mdp.space.index_of(s)]);
        };
    };
    auto add = [&](const std::string& scheme, double exact, const Policy& policy) {
        RandomStream env(derive_seed(spec.seed, "evaluation", 0));
        RandomStream choice(derive_seed(spec.seed, "evaluation-policy", 0));
        const Estimate e = evaluate_policy(spec.network, policy, spec.eval_frames, env, &choice);
        result.rows.push_back({"oracle", scheme, exact, e.mean, e.stderr_mean});
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    add("optimal", result.optimal_average, policy_of(vi.policy));
    add("tabular_q", long_run_average_reward(mdp, spec.network, tq.policy), policy_of(tq.policy));
    add("ddqn", long_run_average_reward(mdp, spec.network, greedy), policy_of(greedy));
    for (PolicyKind kind : kBaselines) {
        add(std::string(to_string(kind)), nan, make_baseline(kind, spec.network, *catalog));
    }
    return result;
}

} // namespace bcrn
