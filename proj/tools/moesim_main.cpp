// moesim: trace-driven policy engine and discrete-event simulator for
// MoE inference under expert offloading.
//
// Pipeline: generate -> calibrate -> profile -> allocate -> simulate,
// with compare (ablation grid) and report (plot-ready tables) on top.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moesim/io.hpp"
#include "moesim/manifest.hpp"
#include "moesim/simulator.hpp"
#include "moesim/workload.hpp"

namespace {

using namespace moesim;

// exit codes, also listed in --help
constexpr int kOkExit = 0;
constexpr int kUsageExit = 1;       // bad arguments or config values
constexpr int kMissingFileExit = 2;  // unreadable input file
constexpr int kFormatExit = 3;       // parse, schema, or version failure
constexpr int kValidationExit = 4;   // inputs fail cross-validation
constexpr int kInfeasibleExit = 5;   // infeasible budget or allocation

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  invalid arguments or configuration values\n"
    "  2  missing or unreadable input file\n"
    "  3  malformed input file (parse, schema, or format_version)\n"
    "  4  input validation failure (e.g. trace does not match the model)\n"
    "  5  infeasible budget or allocation";

struct CliError : std::runtime_error {
    int code;
    CliError(int code_, const std::string& what_) : std::runtime_error(what_), code(code_) {}
};

// Optional JSON config file: any long flag may appear as a key (without the
// leading dashes); values given on the command line win.
class ConfigOverlay {
public:
    void load(const std::string& path) {
        if (path.empty()) return;
        data_ = detail::load_json_file(path);
        if (!data_.is_object()) throw schema_error(path + ": config must be a JSON object");
    }

    template <typename T>
    void apply(const CLI::App& app, const std::string& flag, T& var) const {
        const std::string key = flag.substr(2);
        if (!data_.contains(key)) return;
        const CLI::Option* opt = app.get_option_no_throw(flag);
        if (opt != nullptr && opt->count() > 0) return;  // explicit flag wins
        try {
            var = data_.at(key).get<T>();
        } catch (const json::exception&) {
            throw CliError(kUsageExit, "config key \"" + key + "\" has the wrong type");
        }
    }

private:
    json data_ = json::object();
};

std::vector<double> parse_scales(const std::string& csv, int expected, const char* what) {
    if (csv.empty()) return {};
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw CliError(kUsageExit, std::string(what) + ": cannot parse \"" + item + "\"");
        }
    }
    if (expected > 0 && static_cast<int>(out.size()) != expected)
        throw CliError(kUsageExit, std::string(what) + ": expected " + std::to_string(expected) + " values");
    return out;
}

TraceFile load_trace_checked(const std::string& path) {
    TraceFile file = load_trace(path);
    file.spec.validate();
    ValidationReport report = validate_trace(file.traces, file.spec);
    if (!report.ok())
        throw CliError(kValidationExit, path + ": trace invalid: " + report.violations.front() + " (" +
                                            std::to_string(report.violations.size()) + " violation(s))");
    if (file.traces.empty()) throw CliError(kValidationExit, path + ": trace holds no tokens");
    return file;
}

void require_same_model(const ModelSpec& a, const ModelSpec& b, const std::string& what) {
    if (!(a == b)) throw CliError(kValidationExit, what + ": model spec mismatch between input files");
}

double resolve_tau(const CLI::App& cmd, const std::string& threshold_path, double tau_flag) {
    const CLI::Option* tau_opt = cmd.get_option_no_throw("--tau");
    const bool tau_given = tau_opt != nullptr && tau_opt->count() > 0;
    if (!threshold_path.empty() && !tau_given) return load_threshold(threshold_path).tau;
    return tau_flag;
}

// --- commands ---------------------------------------------------------------

struct GenerateArgs {
    int layers = 8, experts = 8, top_k = 2, hidden_dim = 16, tokens = 1000;
    double concentration = 0.7, drift = 0.33;
    std::uint64_t gate_seed = 1, token_seed = 2;
    bool shared_gates = false;
    std::string fisher_scales, drift_scales;
    std::string out_trace = "trace.jsonl", out_gates = "gates.json", out_profiles;
};

int cmd_generate(const GenerateArgs& args) {
    SynthConfig config;
    config.spec = ModelSpec{args.layers, args.experts, args.top_k, args.hidden_dim};
    config.tokens = args.tokens;
    config.dirichlet_concentration = args.concentration;
    config.residual_drift = args.drift;
    config.gate_seed = args.gate_seed;
    config.token_seed = args.token_seed;
    config.shared_gates = args.shared_gates;
    config.scales.fisher = parse_scales(args.fisher_scales, args.layers, "--fisher-scales");
    config.scales.drift = parse_scales(args.drift_scales, args.layers, "--drift-scales");
    try {
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw CliError(kUsageExit, e.what());
    }

    GeneratedWorkload workload = generate_trace(config);
    save_trace(args.out_trace, workload.traces, config.spec);
    save_gates(args.out_gates, GatesFile{config.spec, workload.gates, std::nullopt});
    if (!args.out_profiles.empty()) {
        ProfilesFile profiles;
        profiles.spec = config.spec;
        for (double fisher : workload.fisher_diag_sum) profiles.profiles.push_back(LayerProfile{0.0, 0.0, fisher});
        save_profiles(args.out_profiles, profiles);
    }
    std::cout << "generated " << config.tokens << " tokens over " << args.layers << " layers -> " << args.out_trace
              << "\n";
    return kOkExit;
}

struct CalibrateArgs {
    std::string trace, profiles, out = "threshold.json";
    double target = 0.24;
};

int cmd_calibrate(const CalibrateArgs& args) {
    if (args.target < 0.0 || args.target > 1.0)
        throw CliError(kUsageExit, "--target-single-ratio must lie in [0, 1]");
    TraceFile trace = load_trace_checked(args.trace);
    ProfilesFile profiles = load_profiles(args.profiles);
    require_same_model(trace.spec, profiles.spec, "calibrate");

    std::vector<double> fisher;
    for (const LayerProfile& p : profiles.profiles) fisher.push_back(p.fisher_diag_sum);
    GatingThreshold tau = calibrate_threshold(trace.traces, fisher, args.target);

    long long singles = 0, total = 0;
    for (const TokenTrace& token : trace.traces)
        for (int l = 0; l < trace.spec.num_layers; ++l) {
            LayerProfile probe{0.0, 0.0, fisher[l]};
            singles += gate_decide_sensitivity(token.layers[l].gate.scores, probe, tau, trace.spec).single ? 1 : 0;
            ++total;
        }
    const double realized = static_cast<double>(singles) / static_cast<double>(total);

    save_threshold(args.out, ThresholdFile{tau.tau, args.target, realized});
    std::cout << "tau " << tau.tau << " reaches single-expert ratio " << realized << " (target " << args.target
              << ")\n";
    return kOkExit;
}

struct ProfileArgs {
    std::string trace, gates, profiles_in, threshold;
    double tau = 0.0;
    bool train_first_gate = false;
    double learning_rate = 0.1;
    int steps = 500;
    std::uint64_t train_seed = 0;
    std::string out_profiles = "profiles.json", out_gates;
};

int cmd_profile(const CLI::App& cmd, const ProfileArgs& args) {
    TraceFile trace = load_trace_checked(args.trace);
    GatesFile gates = load_gates(args.gates);
    require_same_model(trace.spec, gates.spec, "profile");
    ProfilesFile base = load_profiles(args.profiles_in);
    require_same_model(trace.spec, base.spec, "profile");
    if (static_cast<int>(base.profiles.size()) != trace.spec.num_layers)
        throw CliError(kValidationExit, args.profiles_in + ": layer count mismatch");

    const double tau_value = resolve_tau(cmd, args.threshold, args.tau);
    std::vector<double> fisher;
    for (const LayerProfile& p : base.profiles) fisher.push_back(p.fisher_diag_sum);

    std::optional<PredictiveGate> first_gate = gates.first_layer_gate;
    if (args.train_first_gate) {
        auto pairs = first_layer_training_pairs(trace.traces);
        if (pairs.empty()) throw CliError(kValidationExit, "training the first-layer gate needs at least 2 tokens");
        first_gate = train_predictive_gate(pairs, trace.spec.hidden_dim, trace.spec.experts_per_layer,
                                           TrainingConfig{args.learning_rate, args.steps, args.train_seed});
    }

    auto profiles = generate_profiles(trace.traces, gates.gates, GatingThreshold{tau_value}, trace.spec, fisher,
                                      first_gate ? &*first_gate : nullptr);
    save_profiles(args.out_profiles, ProfilesFile{trace.spec, profiles});
    if (!args.out_gates.empty()) save_gates(args.out_gates, GatesFile{gates.spec, gates.gates, first_gate});

    std::cout << "profiled " << trace.traces.size() << " tokens at tau " << tau_value << " -> " << args.out_profiles
              << "\n";
    return kOkExit;
}

struct AllocateArgs {
    std::string profiles, out = "allocation.json", out_costs;
    int budget = 0;
};

int cmd_allocate(const AllocateArgs& args) {
    ProfilesFile profiles = load_profiles(args.profiles);
    profiles.spec.validate();
    if (args.budget < 0) throw CliError(kInfeasibleExit, "--budget must be >= 0");

    int budget = args.budget;
    const int full = profiles.spec.num_layers * profiles.spec.experts_per_layer;
    if (budget > full) {
        std::cerr << "warning: budget " << budget << " exceeds " << full << " total experts; clamping\n";
        budget = full;
    }

    CostTable table = build_cost_table(profiles.profiles, profiles.spec);
    if (!args.out_costs.empty()) save_cost_table(args.out_costs, table);
    AllocationResult result = dp_allocate(table, budget, profiles.spec);

    AllocationFile out;
    out.allocation = result.allocation;
    out.total_cost = result.total_cost;
    out.profile_hash = profile_hash(profiles);
    save_allocation(args.out, out);

    std::cout << "allocated " << budget << " slots, expected loads per token " << result.total_cost << " -> "
              << args.out << "\n";
    return kOkExit;
}

struct SimArgsCommon {
    std::string trace, gates, profiles, threshold;
    double tau = 0.0;
    int tiles = 4;
    Tick tile_transfer = 2, tile_compute = 1, attention = 8, gate_time = 1;
    int lookahead = 2;
    bool gating = true, prefetch = true;
    std::uint64_t seed = 0;
};

SimConfig sim_config_from(const SimArgsCommon& args) {
    SimConfig config;
    config.tile_count_per_expert = args.tiles;
    config.tile_transfer_time = args.tile_transfer;
    config.tile_compute_time = args.tile_compute;
    config.attention_compute_time = args.attention;
    config.gate_compute_time = args.gate_time;
    config.lookahead_depth = args.lookahead;
    config.policy = PolicyFlags{args.gating, args.prefetch, false};
    try {
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw CliError(kUsageExit, e.what());
    }
    return config;
}

struct SimulateArgs : SimArgsCommon {
    std::string allocation;
    std::string out_metrics = "metrics.json", out_csv, out_timeline;
};

int cmd_simulate(const CLI::App& cmd, const SimulateArgs& args) {
    TraceFile trace = load_trace_checked(args.trace);
    GatesFile gates = load_gates(args.gates);
    ProfilesFile profiles = load_profiles(args.profiles);
    AllocationFile allocation = load_allocation(args.allocation);
    require_same_model(trace.spec, gates.spec, "simulate");
    require_same_model(trace.spec, profiles.spec, "simulate");

    const double tau_value = resolve_tau(cmd, args.threshold, args.tau);
    SimConfig config = sim_config_from(args);
    config.policy.adaptive_cache = true;  // whatever allocation file the user passed rules

    SimulationInputs inputs;
    inputs.traces = trace.traces;
    inputs.spec = trace.spec;
    inputs.profiles = profiles.profiles;
    inputs.allocation = allocation.allocation;
    inputs.tau = GatingThreshold{tau_value};
    inputs.gates = gates.gates;
    inputs.first_layer_gate = gates.first_layer_gate ? &*gates.first_layer_gate : nullptr;

    SimResult result;
    try {
        result = simulate_trace(inputs, config, args.seed);
    } catch (const std::invalid_argument& e) {
        throw CliError(kInfeasibleExit, e.what());
    }

    RunManifest manifest;
    manifest.command = "simulate";
    manifest.add_input("trace", args.trace);
    manifest.add_input("gates", args.gates);
    manifest.add_input("profiles", args.profiles);
    manifest.add_input("allocation", args.allocation);
    manifest.seeds = {{"sim", args.seed}};
    manifest.config = json{{"tau", tau_value},
                           {"tiles", args.tiles},
                           {"tile_transfer", args.tile_transfer},
                           {"tile_compute", args.tile_compute},
                           {"attention", args.attention},
                           {"gate_time", args.gate_time},
                           {"lookahead", args.lookahead},
                           {"gating", args.gating},
                           {"prefetch", args.prefetch}};
    manifest.outputs = {args.out_metrics};
    if (!args.out_csv.empty()) manifest.outputs.push_back(args.out_csv);
    if (!args.out_timeline.empty()) manifest.outputs.push_back(args.out_timeline);

    save_metrics_json(args.out_metrics, result.metrics, manifest.to_json());
    if (!args.out_csv.empty()) save_metrics_csv(args.out_csv, result.metrics);
    if (!args.out_timeline.empty()) save_timeline_jsonl(args.out_timeline, result.timeline);

    std::cout << "simulated " << trace.traces.size() << " tokens: mean latency " << result.metrics.mean_latency()
              << ", on-demand loads " << result.metrics.on_demand_loads << ", stall " << result.metrics.stall_time
              << "\n";
    return kOkExit;
}

struct CompareArgs : SimArgsCommon {
    int budget = 0;
    std::string grid = "all";
    int jobs = 1;
    std::string out_json = "compare.json", out_csv = "compare.csv";
};

int cmd_compare(const CLI::App& cmd, const CompareArgs& args) {
    if (args.grid != "all") throw CliError(kUsageExit, "--grid supports only \"all\"");
    if (args.budget < 0) throw CliError(kInfeasibleExit, "--budget must be >= 0");
    TraceFile trace = load_trace_checked(args.trace);
    GatesFile gates = load_gates(args.gates);
    ProfilesFile profiles = load_profiles(args.profiles);
    require_same_model(trace.spec, gates.spec, "compare");
    require_same_model(trace.spec, profiles.spec, "compare");

    const double tau_value = resolve_tau(cmd, args.threshold, args.tau);
    SimConfig config = sim_config_from(args);

    SimulationInputs inputs;
    inputs.traces = trace.traces;
    inputs.spec = trace.spec;
    inputs.profiles = profiles.profiles;
    inputs.tau = GatingThreshold{tau_value};
    inputs.gates = gates.gates;
    inputs.first_layer_gate = gates.first_layer_gate ? &*gates.first_layer_gate : nullptr;

    ComparisonReport report;
    try {
        report = compare_policies(inputs, config, args.budget, args.seed, args.jobs);
    } catch (const std::invalid_argument& e) {
        throw CliError(kInfeasibleExit, e.what());
    }

    RunManifest manifest;
    manifest.command = "compare";
    manifest.add_input("trace", args.trace);
    manifest.add_input("gates", args.gates);
    manifest.add_input("profiles", args.profiles);
    manifest.seeds = {{"sim", args.seed}};
    manifest.config = json{{"tau", tau_value}, {"budget", args.budget}, {"grid", args.grid}};
    manifest.outputs = {args.out_json, args.out_csv};

    save_comparison_json(args.out_json, report, manifest.to_json());
    save_comparison_csv(args.out_csv, report);

    for (const ComparisonRow& row : report.rows)
        std::cout << row.name << ": mean latency " << row.metrics.mean_latency() << ", loads "
                  << row.metrics.on_demand_loads << ", speedup " << row.speedup_vs_baseline << "\n";
    return kOkExit;
}

struct ReportArgs : SimArgsCommon {
    std::string allocation;
    int budget = -1;
    std::string out_dir = "report";
    int jobs = 1;
};

int cmd_report(const CLI::App& cmd, const ReportArgs& args) {
    TraceFile trace = load_trace_checked(args.trace);
    GatesFile gates = load_gates(args.gates);
    ProfilesFile profiles = load_profiles(args.profiles);
    require_same_model(trace.spec, gates.spec, "report");
    require_same_model(trace.spec, profiles.spec, "report");
    const ModelSpec& spec = trace.spec;

    Allocation allocation;
    if (!args.allocation.empty()) {
        allocation = load_allocation(args.allocation).allocation;
    } else {
        if (args.budget < 0) throw CliError(kUsageExit, "report needs --allocation or --budget");
        allocation = dp_allocate(build_cost_table(profiles.profiles, spec),
                                 std::min(args.budget, spec.num_layers * spec.experts_per_layer), spec)
                         .allocation;
    }
    const double tau_value = resolve_tau(cmd, args.threshold, args.tau);
    SimConfig config = sim_config_from(args);

    std::filesystem::create_directories(args.out_dir);
    auto path = [&](const std::string& name) { return (std::filesystem::path(args.out_dir) / name).string(); };

    // threshold sweep: realized single-expert ratio across calibration targets
    {
        std::vector<double> fisher;
        for (const LayerProfile& p : profiles.profiles) fisher.push_back(p.fisher_diag_sum);
        std::ostringstream out;
        out << "target_single_ratio,tau,realized_single_ratio\n";
        for (int i = 0; i <= 20; ++i) {
            const double target = i / 20.0;
            GatingThreshold tau = calibrate_threshold(trace.traces, fisher, target);
            long long singles = 0, total = 0;
            for (const TokenTrace& token : trace.traces)
                for (int l = 0; l < spec.num_layers; ++l) {
                    LayerProfile probe{0.0, 0.0, fisher[l]};
                    singles += gate_decide_sensitivity(token.layers[l].gate.scores, probe, tau, spec).single;
                    ++total;
                }
            out << target << "," << tau.tau << "," << static_cast<double>(singles) / static_cast<double>(total)
                << "\n";
        }
        detail::write_text_file(path("threshold_sweep.csv"), out.str());
    }

    // per-layer prefetch accuracy
    {
        std::ostringstream out;
        out << "layer,prefetch_accuracy\n";
        for (int l = 0; l < spec.num_layers; ++l) out << l << "," << profiles.profiles[l].prefetch_accuracy << "\n";
        detail::write_text_file(path("layer_beta.csv"), out.str());
    }

    // per-layer cache allocation
    {
        std::ostringstream out;
        out << "layer,capacity\n";
        for (int l = 0; l < spec.num_layers; ++l) out << l << "," << allocation.capacities[l] << "\n";
        detail::write_text_file(path("allocation.csv"), out.str());
    }

    // ablation grid over the same workload
    SimulationInputs inputs;
    inputs.traces = trace.traces;
    inputs.spec = spec;
    inputs.profiles = profiles.profiles;
    inputs.allocation = allocation;
    inputs.tau = GatingThreshold{tau_value};
    inputs.gates = gates.gates;
    inputs.first_layer_gate = gates.first_layer_gate ? &*gates.first_layer_gate : nullptr;
    {
        int budget = args.budget;
        if (budget < 0) {
            budget = 0;
            for (int t : allocation.capacities) budget += t;
        }
        ComparisonReport ablation = compare_policies(inputs, config, budget, args.seed, args.jobs);
        save_comparison_csv(path("ablation.csv"), ablation);
    }

    // closed-form uniform-cache prediction vs realized LRU loads
    {
        SimConfig measured = config;
        measured.policy = PolicyFlags{args.gating, args.prefetch, true};
        SimResult sim = simulate_trace(inputs, measured, args.seed);
        const double tokens = static_cast<double>(trace.traces.size());
        std::ostringstream out;
        out << "layer,capacity,alpha,beta,predicted_loads_per_token,realized_loads_per_token,gap,relative_gap\n";
        for (int l = 0; l < spec.num_layers; ++l) {
            const LayerProfile& p = profiles.profiles[l];
            const double alpha = args.gating ? p.single_expert_prob : 0.0;
            const double beta = args.prefetch ? p.prefetch_accuracy : 0.0;
            const double predicted = expected_cost(allocation.capacities[l], spec.experts_per_layer, alpha, beta);
            const double realized = sim.metrics.on_demand_loads_per_layer[l] / tokens;
            const double gap = realized - predicted;
            const double rel = predicted > 0.0 ? gap / predicted : 0.0;
            out << l << "," << allocation.capacities[l] << "," << alpha << "," << beta << "," << predicted << ","
                << realized << "," << gap << "," << rel << "\n";
        }
        detail::write_text_file(path("model_vs_sim.csv"), out.str());
    }

    RunManifest manifest;
    manifest.command = "report";
    manifest.add_input("trace", args.trace);
    manifest.add_input("gates", args.gates);
    manifest.add_input("profiles", args.profiles);
    if (!args.allocation.empty()) manifest.add_input("allocation", args.allocation);
    manifest.seeds = {{"sim", args.seed}};
    manifest.config = json{{"tau", tau_value}, {"budget", args.budget}};
    manifest.outputs = {path("threshold_sweep.csv"), path("layer_beta.csv"), path("allocation.csv"),
                        path("ablation.csv"), path("model_vs_sim.csv")};
    detail::write_text_file(path("report.json"),
                            json{{"format_version", kFormatVersion},
                                 {"kind", "report"},
                                 {"manifest", manifest.to_json()}}
                                    .dump(2) +
                                "\n");

    std::cout << "report written under " << args.out_dir << "\n";
    return kOkExit;
}

void add_sim_options(CLI::App* cmd, SimArgsCommon& args) {
    cmd->add_option("--trace", args.trace, "trace file (JSON Lines)")->required();
    cmd->add_option("--gates", args.gates, "gates file (JSON)")->required();
    cmd->add_option("--profiles", args.profiles, "profiles file (JSON)")->required();
    cmd->add_option("--threshold", args.threshold, "calibrated threshold file; --tau overrides");
    cmd->add_option("--tau", args.tau, "sensitivity threshold value");
    cmd->add_option("--tiles", args.tiles, "tiles per expert");
    cmd->add_option("--tile-transfer", args.tile_transfer, "ticks to transfer one tile");
    cmd->add_option("--tile-compute", args.tile_compute, "ticks to compute one tile");
    cmd->add_option("--attention", args.attention, "attention ticks per layer");
    cmd->add_option("--gate-time", args.gate_time, "gate evaluation ticks per layer");
    cmd->add_option("--lookahead", args.lookahead, "prefetch lookahead depth (0-3)");
    cmd->add_option("--gating", args.gating, "adaptive gating on/off");
    cmd->add_option("--prefetch", args.prefetch, "prefetching on/off");
    cmd->add_option("--seed", args.seed, "simulation seed");
}

void apply_sim_config(const ConfigOverlay& overlay, const CLI::App& cmd, SimArgsCommon& args) {
    overlay.apply(cmd, "--trace", args.trace);
    overlay.apply(cmd, "--gates", args.gates);
    overlay.apply(cmd, "--profiles", args.profiles);
    overlay.apply(cmd, "--threshold", args.threshold);
    overlay.apply(cmd, "--tau", args.tau);
    overlay.apply(cmd, "--tiles", args.tiles);
    overlay.apply(cmd, "--tile-transfer", args.tile_transfer);
    overlay.apply(cmd, "--tile-compute", args.tile_compute);
    overlay.apply(cmd, "--attention", args.attention);
    overlay.apply(cmd, "--gate-time", args.gate_time);
    overlay.apply(cmd, "--lookahead", args.lookahead);
    overlay.apply(cmd, "--gating", args.gating);
    overlay.apply(cmd, "--prefetch", args.prefetch);
    overlay.apply(cmd, "--seed", args.seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"moesim: MoE expert-offloading policy engine and simulator"};
    app.footer(kExitCodeHelp);
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON file supplying any long option by name; flags win")
        ->expected(1);

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "synthesize a workload (trace + gates + base profiles)");
    generate->fallthrough();
    generate->add_option("--layers", gen.layers, "model layers");
    generate->add_option("--experts", gen.experts, "experts per layer");
    generate->add_option("--top-k", gen.top_k, "nominal top-k routing");
    generate->add_option("--hidden-dim", gen.hidden_dim, "activation dimensionality");
    generate->add_option("--tokens", gen.tokens, "tokens to generate");
    generate->add_option("--concentration", gen.concentration, "score temperature; larger = flatter");
    generate->add_option("--drift", gen.drift, "relative residual drift per layer");
    generate->add_option("--gate-seed", gen.gate_seed, "seed for gate matrices");
    generate->add_option("--token-seed", gen.token_seed, "seed for activations");
    generate->add_flag("--shared-gates", gen.shared_gates, "reuse layer 0's gate everywhere");
    generate->add_option("--fisher-scales", gen.fisher_scales, "comma list: per-layer fisher diag sums");
    generate->add_option("--drift-scales", gen.drift_scales, "comma list: per-layer drift multipliers");
    generate->add_option("--out-trace", gen.out_trace, "trace output path");
    generate->add_option("--out-gates", gen.out_gates, "gates output path");
    generate->add_option("--out-profiles", gen.out_profiles, "base profiles output path (fisher only)");

    CalibrateArgs cal;
    CLI::App* calibrate = app.add_subcommand("calibrate", "pick the smallest tau reaching a single-expert ratio");
    calibrate->fallthrough();
    calibrate->add_option("--trace", cal.trace, "trace file")->required();
    calibrate->add_option("--profiles", cal.profiles, "profiles file carrying fisher values")->required();
    calibrate->add_option("--target-single-ratio", cal.target, "desired fraction of single-expert decisions");
    calibrate->add_option("--out", cal.out, "threshold output path");

    ProfileArgs prof;
    CLI::App* profile = app.add_subcommand("profile", "measure per-layer alpha and beta at a given tau");
    profile->fallthrough();
    profile->add_option("--trace", prof.trace, "trace file")->required();
    profile->add_option("--gates", prof.gates, "gates file")->required();
    profile->add_option("--profiles", prof.profiles_in, "base profiles with fisher values")->required();
    profile->add_option("--threshold", prof.threshold, "calibrated threshold file; --tau overrides");
    profile->add_option("--tau", prof.tau, "sensitivity threshold value");
    profile->add_flag("--train-first-gate", prof.train_first_gate, "train the first-layer predictive gate");
    profile->add_option("--learning-rate", prof.learning_rate, "trainer learning rate");
    profile->add_option("--steps", prof.steps, "trainer steps");
    profile->add_option("--train-seed", prof.train_seed, "trainer init seed");
    profile->add_option("--out-profiles", prof.out_profiles, "measured profiles output path");
    profile->add_option("--out-gates", prof.out_gates, "optional gates output incl. the trained gate");

    AllocateArgs alloc;
    CLI::App* allocate = app.add_subcommand("allocate", "DP cache-size allocation from profiles");
    allocate->fallthrough();
    allocate->add_option("--profiles", alloc.profiles, "measured profiles file")->required();
    allocate->add_option("--budget", alloc.budget, "total expert cache slots")->required();
    allocate->add_option("--out", alloc.out, "allocation output path");
    allocate->add_option("--out-costs", alloc.out_costs, "optional cost-table JSON output");

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "discrete-event simulation of one configuration");
    simulate->fallthrough();
    add_sim_options(simulate, sim);
    simulate->add_option("--allocation", sim.allocation, "allocation file")->required();
    simulate->add_option("--out-metrics", sim.out_metrics, "metrics JSON output");
    simulate->add_option("--out-csv", sim.out_csv, "per-token CSV output");
    simulate->add_option("--out-timeline", sim.out_timeline, "timeline JSON Lines output");

    CompareArgs cmp;
    CLI::App* compare = app.add_subcommand("compare", "ablation grid across technique combinations");
    compare->fallthrough();
    add_sim_options(compare, cmp);
    compare->add_option("--budget", cmp.budget, "cache budget shared by every row")->required();
    compare->add_option("--grid", cmp.grid, "grid selection (only: all)");
    compare->add_option("--jobs", cmp.jobs, "parallel simulations");
    compare->add_option("--out-json", cmp.out_json, "comparison JSON output");
    compare->add_option("--out-csv", cmp.out_csv, "comparison CSV output");

    ReportArgs rep;
    CLI::App* report = app.add_subcommand("report", "plot-ready tables incl. the model-vs-simulator gap");
    report->fallthrough();
    add_sim_options(report, rep);
    report->add_option("--allocation", rep.allocation, "allocation file (alternative to --budget)");
    report->add_option("--budget", rep.budget, "budget for a DP allocation computed on the fly");
    report->add_option("--jobs", rep.jobs, "parallel simulations");
    report->add_option("--out-dir", rep.out_dir, "directory for the report tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" || e.get_name() == "CallForVersion")
            return app.exit(e);
        std::cerr << "error: " << e.what() << "\n";
        return kUsageExit;
    }

    try {
        ConfigOverlay overlay;
        overlay.load(config_path);

        if (generate->parsed()) {
            overlay.apply(*generate, "--layers", gen.layers);
            overlay.apply(*generate, "--experts", gen.experts);
            overlay.apply(*generate, "--top-k", gen.top_k);
            overlay.apply(*generate, "--hidden-dim", gen.hidden_dim);
            overlay.apply(*generate, "--tokens", gen.tokens);
            overlay.apply(*generate, "--concentration", gen.concentration);
            overlay.apply(*generate, "--drift", gen.drift);
            overlay.apply(*generate, "--gate-seed", gen.gate_seed);
            overlay.apply(*generate, "--token-seed", gen.token_seed);
            overlay.apply(*generate, "--shared-gates", gen.shared_gates);
            overlay.apply(*generate, "--fisher-scales", gen.fisher_scales);
            overlay.apply(*generate, "--drift-scales", gen.drift_scales);
            overlay.apply(*generate, "--out-trace", gen.out_trace);
            overlay.apply(*generate, "--out-gates", gen.out_gates);
            overlay.apply(*generate, "--out-profiles", gen.out_profiles);
            return cmd_generate(gen);
        }
        if (calibrate->parsed()) {
            overlay.apply(*calibrate, "--trace", cal.trace);
            overlay.apply(*calibrate, "--profiles", cal.profiles);
            overlay.apply(*calibrate, "--target-single-ratio", cal.target);
            overlay.apply(*calibrate, "--out", cal.out);
            return cmd_calibrate(cal);
        }
        if (profile->parsed()) {
            overlay.apply(*profile, "--trace", prof.trace);
            overlay.apply(*profile, "--gates", prof.gates);
            overlay.apply(*profile, "--profiles", prof.profiles_in);
            overlay.apply(*profile, "--threshold", prof.threshold);
            overlay.apply(*profile, "--tau", prof.tau);
            overlay.apply(*profile, "--train-first-gate", prof.train_first_gate);
            overlay.apply(*profile, "--learning-rate", prof.learning_rate);
            overlay.apply(*profile, "--steps", prof.steps);
            overlay.apply(*profile, "--train-seed", prof.train_seed);
            overlay.apply(*profile, "--out-profiles", prof.out_profiles);
            overlay.apply(*profile, "--out-gates", prof.out_gates);
            return cmd_profile(*profile, prof);
        }
        if (allocate->parsed()) {
            overlay.apply(*allocate, "--profiles", alloc.profiles);
            overlay.apply(*allocate, "--budget", alloc.budget);
            overlay.apply(*allocate, "--out", alloc.out);
            overlay.apply(*allocate, "--out-costs", alloc.out_costs);
            return cmd_allocate(alloc);
        }
        if (simulate->parsed()) {
            apply_sim_config(overlay, *simulate, sim);
            overlay.apply(*simulate, "--allocation", sim.allocation);
            overlay.apply(*simulate, "--out-metrics", sim.out_metrics);
            overlay.apply(*simulate, "--out-csv", sim.out_csv);
            overlay.apply(*simulate, "--out-timeline", sim.out_timeline);
            return cmd_simulate(*simulate, sim);
        }
        if (compare->parsed()) {
            apply_sim_config(overlay, *compare, cmp);
            overlay.apply(*compare, "--budget", cmp.budget);
            overlay.apply(*compare, "--grid", cmp.grid);
            overlay.apply(*compare, "--jobs", cmp.jobs);
            overlay.apply(*compare, "--out-json", cmp.out_json);
            overlay.apply(*compare, "--out-csv", cmp.out_csv);
            return cmd_compare(*compare, cmp);
        }
        if (report->parsed()) {
            apply_sim_config(overlay, *report, rep);
            overlay.apply(*report, "--allocation", rep.allocation);
            overlay.apply(*report, "--budget", rep.budget);
            overlay.apply(*report, "--jobs", rep.jobs);
            overlay.apply(*report, "--out-dir", rep.out_dir);
            return cmd_report(*report, rep);
        }
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code;
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFormatExit;
    } catch (const schema_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFormatExit;
    } catch (const version_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFormatExit;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingFileExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageExit;
    }
    return kUsageExit;
}
