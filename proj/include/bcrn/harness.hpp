#pragma once

#include "bcrn/agent.hpp"
#include "bcrn/baselines.hpp"
#include "bcrn/env.hpp"
#include "bcrn/oracle.hpp"
#include "bcrn/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace bcrn {

enum class SweepMode {
    Retrain, // fresh agent per grid point
    Frozen,  // one agent trained on the base config, re-evaluated per point
};

struct ExperimentSpec {
    NetworkConfig network = NetworkConfig::defaults();
    AgentConfig agent;
    PolicyKind policy = PolicyKind::GreedyDDQN;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = ".";
    int episodes = 2000;
    int eval_frames = 10'000;
    int moving_average = 50;
    std::vector<double> lambda_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<int> busy_grid{1, 2, 3, 4, 5, 6, 7, 8, 9};
    SweepMode sweep_mode = SweepMode::Retrain;
    std::size_t action_cap = 1'000'000;
    int tabular_episodes = 50'000;
    LearningRate tabular_rate{LearningRate::Kind::Polynomial, 0.6, 1.0};

    /// Throws ConfigError on out-of-range grids or settings.
    void validate() const;
};

/// Collects key=value settings and turns them into an ExperimentSpec.
///
/// Global keys apply to the whole experiment; transmitter keys given at the
/// global level are defaults for every transmitter and may be overridden in
/// `[transmitter.k]` sections (k counts from 1). `[global]` switches back.
class SpecBuilder {
public:
    /// Parses a config file; `source` names it in error messages.
    void parse(std::istream& in, const std::string& source);
    void parse_file(const std::filesystem::path& path);

    /// `key=value`, or `transmitter.k.key=value` for a single transmitter.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value, int transmitter = 0);

    bool has(const std::string& key) const { return globals_.count(key) != 0; }

    ExperimentSpec build() const;

private:
    std::map<std::string, std::string> globals_;
    std::map<int, std::map<std::string, std::string>> sections_;
    std::map<std::string, std::string> origins_; // key -> "file:line"
    std::string origin_;
};

/// Every key understood by SpecBuilder, for help output.
const std::vector<std::string>& known_config_keys();

struct MetricRow {
    std::string experiment;
    std::string scheme;
    double x = 0.0; // episode or sweep value
    double throughput = 0.0;
    double stderr_mean = 0.0;
};

struct HeatmapCell {
    int q1 = 0;
    int c1 = 0;
    double mean_alpha1 = 0.0;
    double mean_beta1 = 0.0;
    std::uint64_t visits = 0;
};

struct TrainingRun {
    std::unique_ptr<DdqnAgent> agent;
    std::vector<MetricRow> rows; // per episode: ddqn, random, htt, backscatter
};

using ProgressFn = std::function<void(const std::string&)>;

/// Builds the action catalog for `config`, refusing more than `cap` actions.
std::shared_ptr<const ActionCatalog> make_catalog(const NetworkConfig& config, std::size_t cap);

/// Fresh agent seeded from the spec.
std::unique_ptr<DdqnAgent> make_agent(const ExperimentSpec& spec, const NetworkConfig& network);

/// Trains the DDQN and, for every episode, runs each baseline over the same
/// environment stream. Rows are appended to `curve` (may be null) as they are
/// produced, so an interrupted run leaves a readable prefix.
TrainingRun run_training(const ExperimentSpec& spec, std::ostream* curve = nullptr, const ProgressFn& progress = {});

/// Header of training_curve.csv.
void write_training_header(std::ostream& out);

/// Mean throughput of `kind` over spec.eval_frames frames on the evaluation
/// stream for `point`; GreedyDDQN needs an agent.
Estimate evaluate_scheme(const ExperimentSpec& spec, const NetworkConfig& network, PolicyKind kind,
                         const DdqnAgent* agent, std::uint64_t point);

std::vector<MetricRow> sweep_lambda(const ExperimentSpec& spec, const ProgressFn& progress = {});
std::vector<MetricRow> sweep_busy(const ExperimentSpec& spec, const ProgressFn& progress = {});

/// (x_name, scheme, throughput, stderr) CSV.
void write_sweep_csv(std::ostream& out, const std::string& x_name, const std::vector<MetricRow>& rows);

/// Buckets greedy-policy frames by transmitter 1's pre-step (q1, c1).
std::vector<HeatmapCell> policy_heatmap(const DdqnAgent& agent, const ExperimentSpec& spec);
void write_heatmap_csv(std::ostream& out, const std::vector<HeatmapCell>& cells);

/// Rank correlation of a heatmap column with q1 inside each fixed-c1 slice
/// (or with c1 inside each fixed-q1 slice), averaged with visit weights.
/// Slices with fewer than two buckets are skipped.
double pooled_rank_correlation(const std::vector<HeatmapCell>& cells, bool alpha_against_queue);

struct OracleComparison {
    std::vector<MetricRow> rows; // x holds the exact long-run average (NaN if none)
    double optimal_average = 0.0;
    double tabular_q_distance = 0.0; // sup-norm to Q*, relative to max|Q*|
};

/// Exact solution of spec.network against tabular Q, the DDQN and the
/// baselines. Writes value_function.csv into spec.out_dir.
OracleComparison oracle_compare(const ExperimentSpec& spec, const ProgressFn& progress = {});

/// scheme,exact_average,throughput,stderr; exact_average is empty for
/// randomized schemes.
void write_oracle_csv(std::ostream& out, const OracleComparison& comparison);

/// Fixed-precision formatting used by every CSV writer.
std::string format_number(double value);

/// Opens `dir/name` for writing (creating `dir`); throws std::runtime_error
/// naming the path on failure.
std::ofstream open_output(const std::filesystem::path& dir, const std::string& name);

} // namespace bcrn
