#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moesim {

inline constexpr const char* kToolVersion = "0.1.0";

// Absolute tolerance for validator float comparisons (score sums etc.).
inline constexpr double kScoreTolerance = 1e-6;

// Static MoE topology: L layers of N experts each, nominal top-k routing,
// activation dimensionality d.
struct ModelSpec {
    int num_layers = 1;
    int experts_per_layer = 8;
    int top_k = 2;
    int hidden_dim = 1;

    void validate() const {
        if (num_layers < 1) throw std::invalid_argument("ModelSpec: num_layers must be >= 1");
        if (experts_per_layer < 2) throw std::invalid_argument("ModelSpec: experts_per_layer must be >= 2");
        if (top_k < 1 || top_k > experts_per_layer)
            throw std::invalid_argument("ModelSpec: top_k must be in [1, experts_per_layer]");
        if (hidden_dim < 1) throw std::invalid_argument("ModelSpec: hidden_dim must be >= 1");
    }

    bool operator==(const ModelSpec&) const = default;
};

struct ExpertRef {
    int layer = 0;
    int expert = 0;

    bool operator==(const ExpertRef&) const = default;
    auto operator<=>(const ExpertRef&) const = default;

    void validate(const ModelSpec& spec) const {
        if (layer < 0 || layer >= spec.num_layers) throw std::out_of_range("ExpertRef: layer out of range");
        if (expert < 0 || expert >= spec.experts_per_layer)
            throw std::out_of_range("ExpertRef: expert out of range");
    }
};

// Post-softmax gate scores plus the selected expert set, score-descending.
struct GateRecord {
    std::vector<double> scores;
    std::vector<int> selected;

    bool operator==(const GateRecord&) const = default;
};

struct LayerStep {
    std::vector<double> activation;
    GateRecord gate;

    bool operator==(const LayerStep&) const = default;
};

// One token's journey through the model: the activation feeding each layer's
// MoE block and the gate outcome at that layer.
struct TokenTrace {
    int token_index = 0;
    std::vector<LayerStep> layers;

    bool operator==(const TokenTrace&) const = default;
};

// Per-layer scalars driving the cost model and gating rule.
struct LayerProfile {
    double single_expert_prob = 0.0;   // alpha_i
    double prefetch_accuracy = 0.0;    // beta_i
    double fisher_diag_sum = 0.0;

    void validate() const {
        if (!(single_expert_prob >= 0.0 && single_expert_prob <= 1.0))
            throw std::invalid_argument("LayerProfile: single_expert_prob must be in [0,1]");
        if (!(prefetch_accuracy >= 0.0 && prefetch_accuracy <= 1.0))
            throw std::invalid_argument("LayerProfile: prefetch_accuracy must be in [0,1]");
        if (!(fisher_diag_sum >= 0.0))
            throw std::invalid_argument("LayerProfile: fisher_diag_sum must be >= 0");
    }

    bool operator==(const LayerProfile&) const = default;
};

// Per-layer expert cache capacities t_i under total budget T.
struct Allocation {
    std::vector<int> capacities;
    int budget = 0;

    void validate(const ModelSpec& spec) const {
        if (static_cast<int>(capacities.size()) != spec.num_layers)
            throw std::invalid_argument("Allocation: capacity count does not match num_layers");
        long long total = 0;
        for (int t : capacities) {
            if (t < 0 || t > spec.experts_per_layer)
                throw std::invalid_argument("Allocation: capacity out of [0, experts_per_layer]");
            total += t;
        }
        if (total > budget) throw std::invalid_argument("Allocation: capacities exceed budget");
    }

    bool operator==(const Allocation&) const = default;
};

// Deterministic random source. std::mt19937_64 output is fully specified by
// the standard; the distributions below are hand-rolled because the standard
// library distribution objects are not bit-portable across implementations.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), mt_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return mt_(); }

    // uniform in [0, 1) with 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller; caches the spare deviate
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        constexpr double two_pi = 6.283185307179586476925286766559;
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = two_pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // uniform integer in [0, n); unbiased via rejection
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("SeededRng::uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = (~std::uint64_t{0} / un) * un;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return static_cast<int>(x % un);
    }

    // uniform t-subset of [0, n) by partial Fisher-Yates; order is arbitrary
    // but deterministic
    std::vector<int> sample_subset(int n, int t) {
        if (t < 0 || t > n) throw std::invalid_argument("SeededRng::sample_subset: t out of [0, n]");
        std::vector<int> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < t; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(t);
        return pool;
    }

    // independent stream derived from (seed, stream_id); used to hand
    // deterministic sub-seeds to parallel workers
    SeededRng derive(std::uint64_t stream_id) const {
        return SeededRng(splitmix(seed_ + splitmix(stream_id + 0x632be59bd9b4e019ull)));
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 mt_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Indices of the k largest scores, score-descending; ties broken by lowest
// expert index so selection is deterministic.
inline std::vector<int> top_k_indices(std::span<const double> scores, int k) {
    const int n = static_cast<int>(scores.size());
    if (k < 0 || k > n) throw std::invalid_argument("top_k_indices: k out of [0, n]");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(k);
    return order;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("log_softmax: empty input");
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine_similarity: zero-norm input");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

// Structural checks over a trace: layer counts, activation dimensions, score
// normalization, selected-set sanity. Report-based, never throws.
inline ValidationReport validate_trace(std::span<const TokenTrace> traces, const ModelSpec& spec) {
    ValidationReport report;
    auto note = [&](int token, int layer, const std::string& what) {
        report.violations.push_back("token " + std::to_string(token) + " layer " + std::to_string(layer) +
                                    ": " + what);
    };
    for (const TokenTrace& trace : traces) {
        if (static_cast<int>(trace.layers.size()) != spec.num_layers) {
            report.violations.push_back("token " + std::to_string(trace.token_index) + ": expected " +
                                        std::to_string(spec.num_layers) + " layers, got " +
                                        std::to_string(trace.layers.size()));
            continue;
        }
        for (int l = 0; l < spec.num_layers; ++l) {
            const LayerStep& step = trace.layers[l];
            if (static_cast<int>(step.activation.size()) != spec.hidden_dim)
                note(trace.token_index, l,
                     "activation dim " + std::to_string(step.activation.size()) + " != " +
                         std::to_string(spec.hidden_dim));
            if (static_cast<int>(step.gate.scores.size()) != spec.experts_per_layer) {
                note(trace.token_index, l, "score vector length mismatch");
                continue;
            }
            double sum = 0.0;
            bool negative = false;
            for (double s : step.gate.scores) {
                sum += s;
                negative |= s < 0.0;
            }
            if (negative) note(trace.token_index, l, "negative score");
            if (std::abs(sum - 1.0) > kScoreTolerance)
                note(trace.token_index, l, "score normalization: sum " + std::to_string(sum));
            const auto& sel = step.gate.selected;
            const std::size_t count = sel.size();
            if (count != 1 && count != static_cast<std::size_t>(spec.top_k))
                note(trace.token_index, l, "selected count " + std::to_string(count));
            std::vector<int> seen;
            for (int e : sel) {
                if (e < 0 || e >= spec.experts_per_layer) {
                    note(trace.token_index, l, "expert index out of range: " + std::to_string(e));
                } else if (std::find(seen.begin(), seen.end(), e) != seen.end()) {
                    note(trace.token_index, l, "duplicate selected expert: " + std::to_string(e));
                }
                seen.push_back(e);
            }
        }
    }
    return report;
}

}  // namespace moesim
