#pragma once

#include <cstdint>
#include <deque>
#include <future>
#include <list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "moesim/allocator.hpp"
#include "moesim/cache_model.hpp"
#include "moesim/core.hpp"
#include "moesim/gating.hpp"
#include "moesim/prefetch.hpp"

namespace moesim {

// Integer ticks keep timelines exactly reproducible.
using Tick = std::int64_t;

struct PolicyFlags {
    bool adaptive_gating = false;
    bool prefetch = false;
    bool adaptive_cache = false;

    bool operator==(const PolicyFlags&) const = default;
};

struct SimConfig {
    int tile_count_per_expert = 4;
    Tick tile_transfer_time = 1;
    Tick tile_compute_time = 1;
    Tick attention_compute_time = 1;  // per layer
    Tick gate_compute_time = 1;       // per layer
    int lookahead_depth = 2;          // 0 disables prefetch planning
    PolicyFlags policy;

    void validate() const {
        if (tile_count_per_expert < 1) throw std::invalid_argument("SimConfig: tile_count_per_expert must be >= 1");
        if (tile_transfer_time < 0 || tile_compute_time < 0 || attention_compute_time < 0 || gate_compute_time < 0)
            throw std::invalid_argument("SimConfig: durations must be >= 0");
        if (lookahead_depth < 0 || lookahead_depth > 3)
            throw std::invalid_argument("SimConfig: lookahead_depth out of {0,1,2,3}");
    }
};

// Completion time, measured from transfer start, of one on-demand expert
// moved and computed tile by tile: after the first tile lands the pipeline is
// dominated by its slower stage.
inline Tick tile_pipeline_latency(int tile_count, Tick transfer, Tick compute) {
    if (tile_count < 1) throw std::invalid_argument("tile_pipeline_latency: tile_count must be >= 1");
    if (transfer < 0 || compute < 0) throw std::invalid_argument("tile_pipeline_latency: negative duration");
    if (transfer >= compute) return static_cast<Tick>(tile_count) * transfer + compute;
    return transfer + static_cast<Tick>(tile_count) * compute;
}

// Per-layer LRU of resident experts. Freshly prefetched residents carry a
// mark until their first use so hits can be attributed.
class LruCache {
public:
    explicit LruCache(int capacity) : capacity_(capacity) {}

    int capacity() const { return capacity_; }
    int size() const { return static_cast<int>(order_.size()); }
    bool resident(int expert) const { return index_.contains(expert); }
    bool fresh_prefetch(int expert) const { return fresh_.contains(expert); }

    void touch(int expert) {
        auto it = index_.find(expert);
        if (it == index_.end()) throw std::logic_error("LruCache::touch: expert not resident");
        order_.splice(order_.begin(), order_, it->second);
        fresh_.erase(expert);
    }

    // Insert with LRU eviction; returns the victim. Capacity-0 caches reject
    // residency outright and report the incoming expert as evicted.
    std::optional<int> insert(int expert, bool fresh) {
        if (capacity_ == 0) return expert;
        if (auto it = index_.find(expert); it != index_.end()) {
            order_.splice(order_.begin(), order_, it->second);
            if (!fresh) fresh_.erase(expert);
            return std::nullopt;
        }
        std::optional<int> evicted;
        if (static_cast<int>(order_.size()) == capacity_) {
            evicted = order_.back();
            index_.erase(order_.back());
            fresh_.erase(order_.back());
            order_.pop_back();
        }
        order_.push_front(expert);
        index_[expert] = order_.begin();
        if (fresh) fresh_.insert(expert);
        return evicted;
    }

private:
    int capacity_;
    std::list<int> order_;  // front = most recently used
    std::unordered_map<int, std::list<int>::iterator> index_;
    std::unordered_set<int> fresh_;
};

struct CacheState {
    std::vector<LruCache> layers;

    bool resident(const ExpertRef& ref) const { return layers[ref.layer].resident(ref.expert); }
};

enum class Stream { Compute, Comm };
enum class EventKind { Attention, Gate, ExpertCompute, TileCompute, TileTransfer };

inline const char* to_string(Stream s) { return s == Stream::Compute ? "compute" : "comm"; }
inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::Attention: return "attention";
        case EventKind::Gate: return "gate";
        case EventKind::ExpertCompute: return "expert_compute";
        case EventKind::TileCompute: return "tile_compute";
        case EventKind::TileTransfer: return "tile_transfer";
    }
    return "?";
}

struct TimelineEvent {
    Stream stream = Stream::Compute;
    EventKind kind = EventKind::Gate;
    Tick start = 0;
    Tick end = 0;
    int token = -1;
    int layer = -1;
    int expert = -1;
    int tile = -1;

    bool operator==(const TimelineEvent&) const = default;
};

struct EventTimeline {
    std::vector<TimelineEvent> events;

    bool operator==(const EventTimeline&) const = default;
};

struct SimMetrics {
    std::vector<Tick> latency_per_token;
    Tick total_latency = 0;
    Tick stall_time = 0;
    long long on_demand_loads = 0;
    long long cache_hits = 0;      // resident via earlier use or initial fill
    long long prefetch_hits = 0;   // resident via an unused prefetch insert
    long long single_expert_decisions = 0;
    long long experts_activated_total = 0;
    std::vector<long long> on_demand_loads_per_layer;

    double mean_latency() const {
        if (latency_per_token.empty()) return 0.0;
        return static_cast<double>(total_latency) / static_cast<double>(latency_per_token.size());
    }

    bool operator==(const SimMetrics&) const = default;
};

struct SimResult {
    SimMetrics metrics;
    EventTimeline timeline;
};

struct SimulationInputs {
    std::span<const TokenTrace> traces;
    ModelSpec spec;
    std::span<const LayerProfile> profiles;
    Allocation allocation;
    GatingThreshold tau;
    std::span<const GateMatrix> gates;               // per-layer, for gate reuse
    const PredictiveGate* first_layer_gate = nullptr;
};

namespace detail {

// Serialized transfer channel. Requests queue per priority class; on-demand
// requests overtake queued prefetch work but never an in-flight tile.
class CommEngine {
public:
    CommEngine(int tiles_per_expert, Tick tile_transfer_time, CacheState* caches, EventTimeline* timeline)
        : tiles_(tiles_per_expert), tile_time_(tile_transfer_time), caches_(caches), timeline_(timeline) {}

    bool pending(const ExpertRef& ref) const { return pending_.contains(key(ref)); }

    void enqueue(const ExpertRef& ref, bool on_demand, Tick ready, int token) {
        requests_.push_back(Request{ref, 0, on_demand, ready, token, {}});
        Request* req = &requests_.back();
        pending_[key(ref)] = req;
        (on_demand ? od_ : pf_).push_back(req);
    }

    // Flip a queued prefetch to on-demand priority; the current tile, if any,
    // keeps the channel until it completes.
    void promote(const ExpertRef& ref) {
        auto it = pending_.find(key(ref));
        if (it == pending_.end()) throw std::logic_error("CommEngine::promote: no pending request");
        Request* req = it->second;
        if (req->on_demand) return;
        req->on_demand = true;
        std::erase(pf_, req);
        od_.push_back(req);
    }

    // Process tile starts/completions whose effects land at or before t.
    void advance_until(Tick t) {
        while (true) {
            if (in_flight_) {
                if (in_flight_->end > t) return;
                finish_tile();
                continue;
            }
            auto pick = next_pick();
            if (!pick || pick->start > t) return;
            start_tile(pick->req, pick->start);
        }
    }

    // Arrival tick of the given tile, driving the channel forward as needed.
    Tick wait_for_tile(const ExpertRef& ref, int tile_index) {
        while (true) {
            if (auto arrival = lookup_arrival(ref, tile_index)) return *arrival;
            if (in_flight_) {
                finish_tile();
                continue;
            }
            auto pick = next_pick();
            if (!pick) throw std::logic_error("CommEngine::wait_for_tile: tile never transfers");
            start_tile(pick->req, pick->start);
        }
    }

private:
    struct Request {
        ExpertRef ref;
        int tiles_done = 0;
        bool on_demand = false;
        Tick ready = 0;
        int token = 0;
        std::vector<Tick> arrivals;
    };

    struct InFlight {
        Request* req = nullptr;
        Tick end = 0;
    };

    struct Pick {
        Request* req = nullptr;
        Tick start = 0;
    };

    static long long key(const ExpertRef& ref) { return static_cast<long long>(ref.layer) << 32 | ref.expert; }

    std::optional<Tick> lookup_arrival(const ExpertRef& ref, int tile_index) const {
        if (auto it = pending_.find(key(ref)); it != pending_.end()) {
            const auto& arrivals = it->second->arrivals;
            if (tile_index < static_cast<int>(arrivals.size())) return arrivals[tile_index];
            return std::nullopt;
        }
        if (auto it = finished_.find(key(ref)); it != finished_.end()) {
            const auto& arrivals = it->second;
            if (tile_index < static_cast<int>(arrivals.size())) return arrivals[tile_index];
        }
        return std::nullopt;
    }

    std::optional<Pick> next_pick() const {
        Tick best_ready = std::numeric_limits<Tick>::max();
        if (!od_.empty()) best_ready = std::min(best_ready, od_.front()->ready);
        if (!pf_.empty()) best_ready = std::min(best_ready, pf_.front()->ready);
        if (best_ready == std::numeric_limits<Tick>::max()) return std::nullopt;
        const Tick start = std::max(cursor_, best_ready);
        if (!od_.empty() && od_.front()->ready <= start) return Pick{od_.front(), start};
        return Pick{pf_.front(), start};
    }

    void start_tile(Request* req, Tick start) {
        const Tick end = start + tile_time_;
        timeline_->events.push_back(TimelineEvent{Stream::Comm, EventKind::TileTransfer, start, end, req->token,
                                                  req->ref.layer, req->ref.expert, req->tiles_done});
        in_flight_ = InFlight{req, end};
    }

    void finish_tile() {
        Request* req = in_flight_->req;
        req->arrivals.push_back(in_flight_->end);
        req->tiles_done += 1;
        if (req->tiles_done == tiles_) {
            std::erase(req->on_demand ? od_ : pf_, req);
            pending_.erase(key(req->ref));
            finished_[key(req->ref)] = req->arrivals;
            // prefetched experts enter the cache on arrival; on-demand experts
            // are inserted by the compute side once their tiles are consumed
            if (!req->on_demand) caches_->layers[req->ref.layer].insert(req->ref.expert, /*fresh=*/true);
            std::erase_if(requests_, [req](const Request& r) { return &r == req; });
        }
        cursor_ = in_flight_->end;
        in_flight_.reset();
    }

    int tiles_;
    Tick tile_time_;
    CacheState* caches_;
    EventTimeline* timeline_;
    Tick cursor_ = 0;
    std::list<Request> requests_;
    std::deque<Request*> od_, pf_;
    std::map<long long, Request*> pending_;
    std::map<long long, std::vector<Tick>> finished_;
    std::optional<InFlight> in_flight_;
};

}  // namespace detail

// Trace-driven replay of the two-stream workflow: per layer, gate evaluation
// gates the transfer enqueue, resident experts compute first, missing experts
// stream in tile by tile, and the next layer's attention overlaps whatever
// the channel still carries. Fully deterministic given the seed, which only
// shuffles the initial cache contents.
inline SimResult simulate_trace(const SimulationInputs& in, const SimConfig& config, std::uint64_t seed) {
    config.validate();
    in.spec.validate();
    in.allocation.validate(in.spec);
    if (static_cast<int>(in.profiles.size()) != in.spec.num_layers)
        throw std::invalid_argument("simulate_trace: profile count does not match num_layers");
    {
        ValidationReport report = validate_trace(in.traces, in.spec);
        if (!report.ok()) throw std::invalid_argument("simulate_trace: malformed trace: " + report.violations.front());
    }
    const bool prefetch_on = config.policy.prefetch && config.lookahead_depth > 0;
    if (prefetch_on && static_cast<int>(in.gates.size()) != in.spec.num_layers)
        throw std::invalid_argument("simulate_trace: prefetching requires one gate matrix per layer");

    const int num_layers = in.spec.num_layers;
    const int num_experts = in.spec.experts_per_layer;
    const int tiles = config.tile_count_per_expert;
    const Tick tile_compute = config.tile_compute_time;

    SimResult result;
    SimMetrics& metrics = result.metrics;
    metrics.on_demand_loads_per_layer.assign(num_layers, 0);

    CacheState caches;
    caches.layers.reserve(num_layers);
    SeededRng rng(seed);
    for (int l = 0; l < num_layers; ++l) {
        LruCache cache(in.allocation.capacities[l]);
        for (int expert : rng.sample_subset(num_experts, in.allocation.capacities[l]))
            cache.insert(expert, /*fresh=*/false);
        caches.layers.push_back(std::move(cache));
    }

    detail::CommEngine comm(tiles, config.tile_transfer_time, &caches, &result.timeline);

    auto record_compute = [&](EventKind kind, Tick start, Tick end, int token, int layer, int expert, int tile) {
        result.timeline.events.push_back(TimelineEvent{Stream::Compute, kind, start, end, token, layer, expert, tile});
    };

    auto predicted_selection = [&](std::span<const double> activation, const GateMatrix& gate, int target_layer) {
        const std::vector<double> scores = predict_scores(activation, gate);
        if (config.policy.adaptive_gating)
            return gate_decide_sensitivity(scores, in.profiles[target_layer], in.tau, in.spec).selected;
        return top_k_indices(scores, in.spec.top_k);
    };

    Tick cur = 0;
    const int num_tokens = static_cast<int>(in.traces.size());
    for (int tok = 0; tok < num_tokens; ++tok) {
        const TokenTrace& trace = in.traces[tok];
        const Tick token_start = cur;
        for (int layer = 0; layer < num_layers; ++layer) {
            const LayerStep& step = trace.layers[layer];

            record_compute(EventKind::Attention, cur, cur + config.attention_compute_time, tok, layer, -1, -1);
            cur += config.attention_compute_time;
            record_compute(EventKind::Gate, cur, cur + config.gate_compute_time, tok, layer, -1, -1);
            cur += config.gate_compute_time;

            comm.advance_until(cur);

            GatingDecision decision;
            if (config.policy.adaptive_gating) {
                decision = gate_decide_sensitivity(step.gate.scores, in.profiles[layer], in.tau, in.spec);
            } else {
                decision.selected = top_k_indices(step.gate.scores, in.spec.top_k);
                decision.single = in.spec.top_k == 1;
            }
            metrics.single_expert_decisions += decision.single ? 1 : 0;
            metrics.experts_activated_total += static_cast<long long>(decision.selected.size());

            std::vector<int> resident_now, missing_now;
            for (int expert : decision.selected) {
                LruCache& cache = caches.layers[layer];
                if (cache.resident(expert)) {
                    if (cache.fresh_prefetch(expert))
                        metrics.prefetch_hits += 1;
                    else
                        metrics.cache_hits += 1;
                    cache.touch(expert);
                    resident_now.push_back(expert);
                } else {
                    metrics.on_demand_loads += 1;
                    metrics.on_demand_loads_per_layer[layer] += 1;
                    const ExpertRef ref{layer, expert};
                    if (comm.pending(ref))
                        comm.promote(ref);
                    else
                        comm.enqueue(ref, /*on_demand=*/true, cur, tok);
                    missing_now.push_back(expert);
                }
            }

            if (prefetch_on) {
                std::vector<LayerPrediction> predictions;
                if (layer + 1 < num_layers) {
                    for (int depth = 1; depth <= config.lookahead_depth; ++depth) {
                        const int target = layer + depth;
                        if (target >= num_layers) break;
                        predictions.push_back(
                            LayerPrediction{target, predicted_selection(step.activation, in.gates[target], target)});
                    }
                } else if (in.first_layer_gate != nullptr && tok + 1 < num_tokens) {
                    // across the token boundary only the trained first-layer
                    // gate offers a prediction
                    predictions.push_back(
                        LayerPrediction{0, predicted_selection(step.activation, in.first_layer_gate->gate, 0)});
                }
                if (!predictions.empty()) {
                    PrefetchPlan plan = plan_prefetch(
                        [&](const ExpertRef& ref) { return caches.resident(ref); }, predictions,
                        config.lookahead_depth, layer);
                    for (const PrefetchItem& item : plan.items)
                        if (!comm.pending(item.ref)) comm.enqueue(item.ref, /*on_demand=*/false, cur, tok);
                }
            }

            for (int expert : resident_now) {
                const Tick duration = static_cast<Tick>(tiles) * tile_compute;
                record_compute(EventKind::ExpertCompute, cur, cur + duration, tok, layer, expert, -1);
                cur += duration;
            }
            for (int expert : missing_now) {
                const ExpertRef ref{layer, expert};
                for (int tile = 0; tile < tiles; ++tile) {
                    const Tick arrival = comm.wait_for_tile(ref, tile);
                    const Tick start = std::max(cur, arrival);
                    metrics.stall_time += start - cur;
                    record_compute(EventKind::TileCompute, start, start + tile_compute, tok, layer, expert, tile);
                    cur = start + tile_compute;
                }
                comm.advance_until(cur);
                caches.layers[layer].insert(expert, /*fresh=*/false);
            }
        }
        metrics.latency_per_token.push_back(cur - token_start);
    }
    metrics.total_latency = cur;
    return result;
}

// The ablation grid: every published technique combination.
struct PolicyGridRow {
    std::string name;
    PolicyFlags flags;
};

inline std::vector<PolicyGridRow> ablation_grid() {
    return {
        {"baseline", {false, false, false}},
        {"+gating", {true, false, false}},
        {"+prefetch", {false, true, false}},
        {"+gating+cache", {true, false, true}},
        {"+prefetch+cache", {false, true, true}},
        {"+gating+prefetch", {true, true, false}},
        {"all", {true, true, true}},
    };
}

struct ComparisonRow {
    std::string name;
    PolicyFlags flags;
    Allocation allocation;
    SimMetrics metrics;
    double speedup_vs_baseline = 1.0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
};

// Run the grid over one workload and seed. Per-configuration cost inputs
// follow the enabled techniques: alpha counts only under adaptive gating,
// beta only under prefetching, and the DP allocation only under adaptive
// caching (uniform split otherwise).
inline ComparisonReport compare_policies(const SimulationInputs& base, const SimConfig& sim_config, int budget,
                                         std::uint64_t seed, int jobs = 1) {
    if (jobs < 1) throw std::invalid_argument("compare_policies: jobs must be >= 1");
    const std::vector<PolicyGridRow> grid = ablation_grid();

    auto run_row = [&](const PolicyGridRow& row) {
        std::vector<LayerProfile> profiles(base.profiles.begin(), base.profiles.end());
        for (LayerProfile& profile : profiles) {
            if (!row.flags.adaptive_gating) profile.single_expert_prob = 0.0;
            if (!row.flags.prefetch) profile.prefetch_accuracy = 0.0;
        }
        Allocation allocation = row.flags.adaptive_cache
                                    ? dp_allocate(build_cost_table(profiles, base.spec), budget, base.spec).allocation
                                    : uniform_allocation(budget, base.spec);
        SimulationInputs inputs = base;
        inputs.profiles = profiles;
        inputs.allocation = allocation;
        SimConfig config = sim_config;
        config.policy = row.flags;
        SimResult sim = simulate_trace(inputs, config, seed);
        ComparisonRow out;
        out.name = row.name;
        out.flags = row.flags;
        out.allocation = std::move(allocation);
        out.metrics = std::move(sim.metrics);
        return out;
    };

    ComparisonReport report;
    report.rows.resize(grid.size());
    if (jobs == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) report.rows[i] = run_row(grid[i]);
    } else {
        std::vector<std::future<ComparisonRow>> futures;
        futures.reserve(grid.size());
        for (const PolicyGridRow& row : grid)
            futures.push_back(std::async(std::launch::async, [&run_row, &row] { return run_row(row); }));
        for (std::size_t i = 0; i < grid.size(); ++i) report.rows[i] = futures[i].get();
    }

    const double baseline_latency = report.rows.front().metrics.mean_latency();
    for (ComparisonRow& row : report.rows) {
        const double mean = row.metrics.mean_latency();
        row.speedup_vs_baseline = mean > 0.0 ? baseline_latency / mean : 1.0;
    }
    return report;
}

}  // namespace moesim
