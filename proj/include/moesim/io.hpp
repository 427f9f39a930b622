#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moesim/allocator.hpp"
#include "moesim/cache_model.hpp"
#include "moesim/core.hpp"
#include "moesim/prefetch.hpp"
#include "moesim/simulator.hpp"

namespace moesim {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Unreadable JSON; message carries the file and, for line-oriented files, the
// line number.
struct parse_error : io_error {
    using io_error::io_error;
};
// Readable JSON that does not match the expected shape.
struct schema_error : io_error {
    using io_error::io_error;
};
struct version_error : io_error {
    using io_error::io_error;
};

namespace detail {

inline void check_header(const json& j, const std::string& kind, const std::string& path) {
    if (!j.is_object()) throw schema_error(path + ": expected a JSON object");
    if (!j.contains("format_version") || !j["format_version"].is_number_integer())
        throw schema_error(path + ": missing format_version");
    if (j["format_version"].get<int>() != kFormatVersion)
        throw version_error(path + ": unsupported format_version " + j["format_version"].dump());
    if (!j.contains("kind") || j["kind"] != kind)
        throw schema_error(path + ": expected kind \"" + kind + "\"");
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw parse_error(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw io_error("write failed: " + path);
}

template <typename T>
T require(const json& j, const char* field, const std::string& path) {
    if (!j.contains(field)) throw schema_error(path + ": missing field \"" + field + "\"");
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        throw schema_error(path + ": field \"" + field + "\" has the wrong type");
    }
}

}  // namespace detail

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return hex64(fnv1a(buf.str()));
}

// --- ModelSpec -------------------------------------------------------------

inline json to_json(const ModelSpec& spec) {
    return json{{"num_layers", spec.num_layers},
                {"experts_per_layer", spec.experts_per_layer},
                {"top_k", spec.top_k},
                {"hidden_dim", spec.hidden_dim}};
}

inline ModelSpec model_spec_from_json(const json& j, const std::string& path) {
    ModelSpec spec;
    spec.num_layers = detail::require<int>(j, "num_layers", path);
    spec.experts_per_layer = detail::require<int>(j, "experts_per_layer", path);
    spec.top_k = detail::require<int>(j, "top_k", path);
    spec.hidden_dim = detail::require<int>(j, "hidden_dim", path);
    return spec;
}

// --- Traces (JSON Lines: header line, then one token per line) --------------

inline void save_trace(const std::string& path, std::span<const TokenTrace> traces, const ModelSpec& spec) {
    std::ostringstream out;
    out << json{{"format_version", kFormatVersion}, {"kind", "trace"}, {"model", to_json(spec)}}.dump() << "\n";
    for (const TokenTrace& trace : traces) {
        json layers = json::array();
        for (const LayerStep& step : trace.layers)
            layers.push_back(json{{"activation", step.activation},
                                  {"scores", step.gate.scores},
                                  {"selected", step.gate.selected}});
        out << json{{"token", trace.token_index}, {"layers", std::move(layers)}}.dump() << "\n";
    }
    detail::write_text_file(path, out.str());
}

struct TraceFile {
    ModelSpec spec;
    std::vector<TokenTrace> traces;
};

inline TraceFile load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    int line_no = 0;
    auto parse_line = [&](const std::string& text) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    };

    if (!std::getline(in, line)) throw parse_error(path + ":1: empty file");
    line_no = 1;
    json header = parse_line(line);
    detail::check_header(header, "trace", path);

    TraceFile file;
    if (!header.contains("model")) throw schema_error(path + ": missing model");
    file.spec = model_spec_from_json(header["model"], path);

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = parse_line(line);
        const std::string where = path + ":" + std::to_string(line_no);
        TokenTrace trace;
        trace.token_index = detail::require<int>(j, "token", where);
        if (!j.contains("layers") || !j["layers"].is_array()) throw schema_error(where + ": missing layers array");
        for (const json& jl : j["layers"]) {
            LayerStep step;
            step.activation = detail::require<std::vector<double>>(jl, "activation", where);
            step.gate.scores = detail::require<std::vector<double>>(jl, "scores", where);
            step.gate.selected = detail::require<std::vector<int>>(jl, "selected", where);
            trace.layers.push_back(std::move(step));
        }
        file.traces.push_back(std::move(trace));
    }
    return file;
}

// --- Gate matrices (+ optional trained first-layer gate) --------------------

inline json gate_matrix_to_json(const GateMatrix& gate) {
    return json{{"hidden_dim", gate.hidden_dim}, {"num_experts", gate.num_experts}, {"weights", gate.weights}};
}

inline GateMatrix gate_matrix_from_json(const json& j, const std::string& path) {
    GateMatrix gate;
    gate.hidden_dim = detail::require<int>(j, "hidden_dim", path);
    gate.num_experts = detail::require<int>(j, "num_experts", path);
    gate.weights = detail::require<std::vector<double>>(j, "weights", path);
    if (gate.weights.size() != static_cast<std::size_t>(gate.hidden_dim) * gate.num_experts)
        throw schema_error(path + ": gate weight count does not match shape");
    return gate;
}

struct GatesFile {
    ModelSpec spec;
    std::vector<GateMatrix> gates;
    std::optional<PredictiveGate> first_layer_gate;
};

inline void save_gates(const std::string& path, const GatesFile& file) {
    json gates = json::array();
    for (const GateMatrix& gate : file.gates) gates.push_back(gate_matrix_to_json(gate));
    json j{{"format_version", kFormatVersion},
           {"kind", "gates"},
           {"model", to_json(file.spec)},
           {"gates", std::move(gates)}};
    if (file.first_layer_gate) {
        const PredictiveGate& pg = *file.first_layer_gate;
        j["predictive_gate"] = json{{"gate", gate_matrix_to_json(pg.gate)},
                                    {"learning_rate", pg.config.learning_rate},
                                    {"steps", pg.config.steps},
                                    {"seed", pg.config.seed}};
    }
    detail::write_text_file(path, j.dump(2) + "\n");
}

inline GatesFile load_gates(const std::string& path) {
    json j = detail::load_json_file(path);
    detail::check_header(j, "gates", path);
    GatesFile file;
    if (!j.contains("model")) throw schema_error(path + ": missing model");
    file.spec = model_spec_from_json(j["model"], path);
    if (!j.contains("gates") || !j["gates"].is_array()) throw schema_error(path + ": missing gates array");
    for (const json& jg : j["gates"]) file.gates.push_back(gate_matrix_from_json(jg, path));
    if (j.contains("predictive_gate") && !j["predictive_gate"].is_null()) {
        const json& jp = j["predictive_gate"];
        PredictiveGate pg;
        if (!jp.contains("gate")) throw schema_error(path + ": predictive_gate missing gate");
        pg.gate = gate_matrix_from_json(jp["gate"], path);
        pg.config.learning_rate = detail::require<double>(jp, "learning_rate", path);
        pg.config.steps = detail::require<int>(jp, "steps", path);
        pg.config.seed = detail::require<std::uint64_t>(jp, "seed", path);
        file.first_layer_gate = std::move(pg);
    }
    return file;
}

// --- Layer profiles ----------------------------------------------------------

struct ProfilesFile {
    ModelSpec spec;
    std::vector<LayerProfile> profiles;
};

inline json profiles_to_json(const ProfilesFile& file) {
    json layers = json::array();
    for (const LayerProfile& p : file.profiles)
        layers.push_back(json{{"single_expert_prob", p.single_expert_prob},
                              {"prefetch_accuracy", p.prefetch_accuracy},
                              {"fisher_diag_sum", p.fisher_diag_sum}});
    return json{{"format_version", kFormatVersion},
                {"kind", "profiles"},
                {"model", to_json(file.spec)},
                {"layers", std::move(layers)}};
}

inline void save_profiles(const std::string& path, const ProfilesFile& file) {
    detail::write_text_file(path, profiles_to_json(file).dump(2) + "\n");
}

inline ProfilesFile load_profiles(const std::string& path) {
    json j = detail::load_json_file(path);
    detail::check_header(j, "profiles", path);
    ProfilesFile file;
    if (!j.contains("model")) throw schema_error(path + ": missing model");
    file.spec = model_spec_from_json(j["model"], path);
    if (!j.contains("layers") || !j["layers"].is_array()) throw schema_error(path + ": missing layers array");
    for (const json& jl : j["layers"]) {
        LayerProfile p;
        p.single_expert_prob = detail::require<double>(jl, "single_expert_prob", path);
        p.prefetch_accuracy = detail::require<double>(jl, "prefetch_accuracy", path);
        p.fisher_diag_sum = detail::require<double>(jl, "fisher_diag_sum", path);
        file.profiles.push_back(p);
    }
    return file;
}

// Stable identifier tying an allocation to the profile set it was computed
// from.
inline std::string profile_hash(const ProfilesFile& file) { return hex64(fnv1a(profiles_to_json(file).dump())); }

// --- Calibrated threshold ----------------------------------------------------

struct ThresholdFile {
    double tau = 0.0;
    double target_single_ratio = 0.0;
    double realized_single_ratio = 0.0;
};

inline void save_threshold(const std::string& path, const ThresholdFile& file) {
    detail::write_text_file(path, json{{"format_version", kFormatVersion},
                                       {"kind", "threshold"},
                                       {"tau", file.tau},
                                       {"target_single_ratio", file.target_single_ratio},
                                       {"realized_single_ratio", file.realized_single_ratio}}
                                          .dump(2) +
                                      "\n");
}

inline ThresholdFile load_threshold(const std::string& path) {
    json j = detail::load_json_file(path);
    detail::check_header(j, "threshold", path);
    ThresholdFile file;
    file.tau = detail::require<double>(j, "tau", path);
    file.target_single_ratio = detail::require<double>(j, "target_single_ratio", path);
    file.realized_single_ratio = detail::require<double>(j, "realized_single_ratio", path);
    return file;
}

// --- Allocation ----------------------------------------------------------------

struct AllocationFile {
    Allocation allocation;
    double total_cost = 0.0;
    std::string profile_hash;
};

inline void save_allocation(const std::string& path, const AllocationFile& file) {
    detail::write_text_file(path, json{{"format_version", kFormatVersion},
                                       {"kind", "allocation"},
                                       {"budget", file.allocation.budget},
                                       {"capacities", file.allocation.capacities},
                                       {"total_cost", file.total_cost},
                                       {"profile_hash", file.profile_hash}}
                                          .dump(2) +
                                      "\n");
}

inline AllocationFile load_allocation(const std::string& path) {
    json j = detail::load_json_file(path);
    detail::check_header(j, "allocation", path);
    AllocationFile file;
    file.allocation.budget = detail::require<int>(j, "budget", path);
    file.allocation.capacities = detail::require<std::vector<int>>(j, "capacities", path);
    file.total_cost = detail::require<double>(j, "total_cost", path);
    file.profile_hash = detail::require<std::string>(j, "profile_hash", path);
    return file;
}

// --- Cost table ------------------------------------------------------------------

inline void save_cost_table(const std::string& path, const CostTable& table) {
    detail::write_text_file(path, json{{"format_version", kFormatVersion},
                                       {"kind", "cost_table"},
                                       {"experts_per_layer", table.experts_per_layer},
                                       {"loads", table.loads}}
                                          .dump(2) +
                                      "\n");
}

inline CostTable load_cost_table(const std::string& path) {
    json j = detail::load_json_file(path);
    detail::check_header(j, "cost_table", path);
    CostTable table;
    table.experts_per_layer = detail::require<int>(j, "experts_per_layer", path);
    table.loads = detail::require<std::vector<std::vector<double>>>(j, "loads", path);
    return table;
}

// --- Simulator outputs --------------------------------------------------------------

inline json metrics_to_json(const SimMetrics& metrics) {
    return json{{"tokens", metrics.latency_per_token.size()},
                {"total_latency", metrics.total_latency},
                {"mean_latency", metrics.mean_latency()},
                {"stall_time", metrics.stall_time},
                {"on_demand_loads", metrics.on_demand_loads},
                {"cache_hits", metrics.cache_hits},
                {"prefetch_hits", metrics.prefetch_hits},
                {"single_expert_decisions", metrics.single_expert_decisions},
                {"experts_activated_total", metrics.experts_activated_total},
                {"on_demand_loads_per_layer", metrics.on_demand_loads_per_layer}};
}

inline void save_metrics_json(const std::string& path, const SimMetrics& metrics, const json& manifest) {
    detail::write_text_file(path, json{{"format_version", kFormatVersion},
                                       {"kind", "metrics"},
                                       {"manifest", manifest},
                                       {"metrics", metrics_to_json(metrics)}}
                                          .dump(2) +
                                      "\n");
}

inline void save_metrics_csv(const std::string& path, const SimMetrics& metrics) {
    std::ostringstream out;
    out << "token,latency\n";
    for (std::size_t i = 0; i < metrics.latency_per_token.size(); ++i)
        out << i << "," << metrics.latency_per_token[i] << "\n";
    detail::write_text_file(path, out.str());
}

inline void save_timeline_jsonl(const std::string& path, const EventTimeline& timeline) {
    std::ostringstream out;
    for (const TimelineEvent& ev : timeline.events) {
        out << json{{"stream", to_string(ev.stream)},
                    {"kind", to_string(ev.kind)},
                    {"start", ev.start},
                    {"end", ev.end},
                    {"expert", ev.expert},
                    {"token", ev.token},
                    {"layer", ev.layer},
                    {"tile", ev.tile}}
                   .dump()
            << "\n";
    }
    detail::write_text_file(path, out.str());
}

inline json comparison_to_json(const ComparisonReport& report) {
    json rows = json::array();
    for (const ComparisonRow& row : report.rows) {
        rows.push_back(json{{"name", row.name},
                            {"adaptive_gating", row.flags.adaptive_gating},
                            {"prefetch", row.flags.prefetch},
                            {"adaptive_cache", row.flags.adaptive_cache},
                            {"capacities", row.allocation.capacities},
                            {"metrics", metrics_to_json(row.metrics)},
                            {"speedup_vs_baseline", row.speedup_vs_baseline}});
    }
    return rows;
}

inline void save_comparison_json(const std::string& path, const ComparisonReport& report, const json& manifest) {
    detail::write_text_file(path, json{{"format_version", kFormatVersion},
                                       {"kind", "comparison"},
                                       {"manifest", manifest},
                                       {"rows", comparison_to_json(report)}}
                                          .dump(2) +
                                      "\n");
}

inline void save_comparison_csv(const std::string& path, const ComparisonReport& report) {
    std::ostringstream out;
    out << "name,adaptive_gating,prefetch,adaptive_cache,mean_latency,total_latency,stall_time,"
           "on_demand_loads,cache_hits,prefetch_hits,single_expert_decisions,experts_activated_total,"
           "speedup_vs_baseline\n";
    for (const ComparisonRow& row : report.rows) {
        const SimMetrics& m = row.metrics;
        out << row.name << "," << row.flags.adaptive_gating << "," << row.flags.prefetch << ","
            << row.flags.adaptive_cache << "," << m.mean_latency() << "," << m.total_latency << "," << m.stall_time
            << "," << m.on_demand_loads << "," << m.cache_hits << "," << m.prefetch_hits << ","
            << m.single_expert_decisions << "," << m.experts_activated_total << "," << row.speedup_vs_baseline
            << "\n";
    }
    detail::write_text_file(path, out.str());
}

}  // namespace moesim
