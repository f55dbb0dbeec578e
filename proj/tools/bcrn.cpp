// Command-line front end: training, evaluation, sweeps, heatmaps and the
// exact-solver comparison. Every subcommand writes CSV into --out.

#include "bcrn/errors.hpp"
#include "bcrn/harness.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace bcrn;

struct CommonOptions {
    std::string config;
    std::vector<std::string> settings;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> iterations;
    std::optional<int> episodes;
    std::optional<std::string> policy;
    std::optional<std::string> out;
    std::string checkpoint;
    bool frozen = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--config", o.config, "key=value config file");
    cmd->add_option("--set", o.settings, "override a config key (key=value or transmitter.k.key=value)");
    cmd->add_option("--seed", o.seed, "experiment seed");
    cmd->add_option("--iterations", o.iterations, "training iterations (epsilon horizon)");
    cmd->add_option("--episodes", o.episodes, "training episodes");
    cmd->add_option("--policy", o.policy, "ddqn, random, htt or backscatter");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_flag("--quiet", o.quiet, "no progress on stderr");
}

ExperimentSpec make_spec(const CommonOptions& o)
{
    SpecBuilder builder;
    if (!o.config.empty()) {
        builder.parse_file(o.config);
    }
    for (const auto& s : o.settings) {
        builder.set(s);
    }
    if (o.seed) builder.set("seed", std::to_string(*o.seed));
    if (o.episodes) builder.set("episodes", std::to_string(*o.episodes));
    if (o.policy) builder.set("policy", *o.policy);
    if (o.out) builder.set("out", *o.out);
    if (o.frozen) builder.set("sweep_mode", "frozen");
    if (o.iterations) {
        builder.set("total_iterations", std::to_string(*o.iterations));
        if (!o.episodes && !builder.has("episodes")) {
            // Peek at the episode length to turn iterations into episodes.
            const ExperimentSpec probe = builder.build();
            const auto len = static_cast<std::uint64_t>(probe.agent.episode_length);
            builder.set("episodes", std::to_string((*o.iterations + len - 1) / len));
        }
    }
    return builder.build();
}

ProgressFn progress_for(const CommonOptions& o)
{
    if (o.quiet) {
        return {};
    }
    return [](const std::string& line) { std::cerr << line << '\n'; };
}

std::unique_ptr<DdqnAgent> trained_agent(const ExperimentSpec& spec, const CommonOptions& o)
{
    if (!o.checkpoint.empty()) {
        auto agent = make_agent(spec, spec.network);
        std::ifstream in(o.checkpoint);
        if (!in) {
            throw std::runtime_error("cannot open checkpoint " + o.checkpoint);
        }
        agent->load(in);
        return agent;
    }
    return run_training(spec, nullptr, progress_for(o)).agent;
}

void save_agent(const ExperimentSpec& spec, const DdqnAgent& agent)
{
    auto out = open_output(spec.out_dir, "agent.ckpt");
    agent.save(out);
}

int cmd_train(const CommonOptions& o)
{
    const ExperimentSpec spec = make_spec(o);
    auto curve = open_output(spec.out_dir, "training_curve.csv");
    const TrainingRun run = run_training(spec, &curve, progress_for(o));
    save_agent(spec, *run.agent);
    return 0;
}

int cmd_evaluate(const CommonOptions& o)
{
    const ExperimentSpec spec = make_spec(o);
    std::unique_ptr<DdqnAgent> agent;
    if (spec.policy == PolicyKind::GreedyDDQN) {
        agent = trained_agent(spec, o);
    }
    const Estimate e = evaluate_scheme(spec, spec.network, spec.policy, agent.get(), 0);
    auto out = open_output(spec.out_dir, "evaluation.csv");
    out << "scheme,throughput,stderr,frames\n"
        << to_string(spec.policy) << ',' << format_number(e.mean) << ',' << format_number(e.stderr_mean) << ','
        << spec.eval_frames << '\n';
    return 0;
}

int cmd_sweep(const CommonOptions& o, bool lambda)
{
    const ExperimentSpec spec = make_spec(o);
    const auto rows = lambda ? sweep_lambda(spec, progress_for(o)) : sweep_busy(spec, progress_for(o));
    auto out = open_output(spec.out_dir, lambda ? "lambda_sweep.csv" : "busy_sweep.csv");
    write_sweep_csv(out, lambda ? "lambda" : "busy_slots", rows);
    return 0;
}

int cmd_heatmap(const CommonOptions& o)
{
    const ExperimentSpec spec = make_spec(o);
    const auto agent = trained_agent(spec, o);
    const auto cells = policy_heatmap(*agent, spec);
    auto out = open_output(spec.out_dir, "heatmap.csv");
    write_heatmap_csv(out, cells);
    if (!o.quiet) {
        std::fprintf(stderr, "rank correlation: alpha1~q1 %.3f, beta1~c1 %.3f\n",
                     pooled_rank_correlation(cells, true), pooled_rank_correlation(cells, false));
    }
    return 0;
}

int cmd_oracle(const CommonOptions& o)
{
    const ExperimentSpec spec = make_spec(o);
    const OracleComparison cmp = oracle_compare(spec, progress_for(o));
    auto out = open_output(spec.out_dir, "oracle_compare.csv");
    write_oracle_csv(out, cmp);
    return 0;
}

std::string one_line(std::string text)
{
    for (char& c : text) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return text;
}

int fail(const char* category, const std::string& message, int code)
{
    std::cerr << "error: " << category << ": " << one_line(message) << '\n';
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Slot scheduling for backscatter cognitive radio networks"};
    app.require_subcommand(1);

    CommonOptions o;
    auto* train = app.add_subcommand("train", "train the DDQN; writes training_curve.csv and agent.ckpt");
    auto* evaluate = app.add_subcommand("evaluate", "evaluate one scheme; writes evaluation.csv");
    auto* lambda = app.add_subcommand("sweep-lambda", "throughput versus arrival probability");
    auto* busy = app.add_subcommand("sweep-busy", "throughput versus busy slots");
    auto* heatmap = app.add_subcommand("heatmap", "greedy allocation of transmitter 1 by (q1, c1)");
    auto* oracle = app.add_subcommand("oracle-compare", "learners against value iteration on a small instance");
    for (auto* cmd : {train, evaluate, lambda, busy, heatmap, oracle}) {
        add_common(cmd, o);
    }
    for (auto* cmd : {evaluate, heatmap}) {
        cmd->add_option("--checkpoint", o.checkpoint, "agent checkpoint from train (skips training)");
    }
    for (auto* cmd : {lambda, busy}) {
        cmd->add_flag("--frozen", o.frozen, "train once and re-evaluate at every grid point");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        if (*train) return cmd_train(o);
        if (*evaluate) return cmd_evaluate(o);
        if (*lambda) return cmd_sweep(o, true);
        if (*busy) return cmd_sweep(o, false);
        if (*heatmap) return cmd_heatmap(o);
        if (*oracle) return cmd_oracle(o);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const CapacityError& e) {
        return fail("capacity", e.what(), 3);
    } catch (const NumericalError& e) {
        return fail("numerical", e.what(), 4);
    } catch (const ContractViolation& e) {
        return fail("contract", e.what(), 5);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), 1);
    }
    return 1;
}
