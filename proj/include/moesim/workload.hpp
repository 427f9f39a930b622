#pragma once

#include <span>
#include <vector>

#include "moesim/core.hpp"
#include "moesim/gating.hpp"
#include "moesim/prefetch.hpp"

namespace moesim {

// Per-layer multipliers shaping the synthetic heterogeneity; empty vectors
// mean all ones.
struct LayerScales {
    std::vector<double> fisher;
    std::vector<double> drift;
};

struct SynthConfig {
    ModelSpec spec;
    int tokens = 1000;
    // Acts as a softmax temperature on the gate logits: larger values push
    // the score distribution toward uniform, smaller values skew it.
    double dirichlet_concentration = 1.0;
    // Relative step of the residual walk: x advances by eps * scale_l * rms(x)
    // per layer, so adjacent-layer cosine is about 1/sqrt(1 + eps^2) at every
    // depth. eps = 0 freezes the activation; large eps decorrelates layers.
    double residual_drift = 0.1;
    std::uint64_t gate_seed = 1;
    std::uint64_t token_seed = 2;
    bool shared_gates = false;
    LayerScales scales;

    void validate() const {
        spec.validate();
        if (tokens < 1) throw std::invalid_argument("SynthConfig: tokens must be >= 1");
        if (!(dirichlet_concentration > 0.0))
            throw std::invalid_argument("SynthConfig: dirichlet_concentration must be positive");
        if (!(residual_drift >= 0.0)) throw std::invalid_argument("SynthConfig: residual_drift must be >= 0");
        if (!scales.fisher.empty() && static_cast<int>(scales.fisher.size()) != spec.num_layers)
            throw std::invalid_argument("SynthConfig: fisher scale count does not match num_layers");
        if (!scales.drift.empty() && static_cast<int>(scales.drift.size()) != spec.num_layers)
            throw std::invalid_argument("SynthConfig: drift scale count does not match num_layers");
        for (double v : scales.fisher)
            if (!(v >= 0.0)) throw std::invalid_argument("SynthConfig: fisher scales must be >= 0");
        for (double v : scales.drift)
            if (!(v >= 0.0)) throw std::invalid_argument("SynthConfig: drift scales must be >= 0");
    }
};

struct GeneratedWorkload {
    std::vector<TokenTrace> traces;
    std::vector<GateMatrix> gates;
    std::vector<double> fisher_diag_sum;  // per layer, from the scale vector
};

// Synthetic decode trace: gates are sampled once, every token starts from a
// fresh activation and random-walks through the layers, scores come from the
// per-layer gates, selection is exact top-K.
inline GeneratedWorkload generate_trace(const SynthConfig& config) {
    config.validate();
    const int num_layers = config.spec.num_layers;
    const int num_experts = config.spec.experts_per_layer;
    const int dim = config.spec.hidden_dim;

    GeneratedWorkload out;
    out.fisher_diag_sum.assign(num_layers, 1.0);
    for (int l = 0; l < num_layers; ++l)
        if (!config.scales.fisher.empty()) out.fisher_diag_sum[l] = config.scales.fisher[l];

    SeededRng gate_rng(config.gate_seed);
    const double weight_scale = 1.0 / std::sqrt(static_cast<double>(dim));
    out.gates.reserve(num_layers);
    for (int l = 0; l < num_layers; ++l) {
        if (config.shared_gates && l > 0) {
            out.gates.push_back(out.gates.front());
            continue;
        }
        GateMatrix gate(dim, num_experts);
        for (double& w : gate.weights) w = weight_scale * gate_rng.normal();
        out.gates.push_back(std::move(gate));
    }

    SeededRng token_rng(config.token_seed);
    out.traces.reserve(config.tokens);
    std::vector<double> activation(dim);
    for (int tok = 0; tok < config.tokens; ++tok) {
        TokenTrace trace;
        trace.token_index = tok;
        trace.layers.reserve(num_layers);
        for (double& x : activation) x = token_rng.normal();
        for (int l = 0; l < num_layers; ++l) {
            std::vector<double> logits = out.gates[l].logits(activation);
            for (double& v : logits) v /= config.dirichlet_concentration;
            LayerStep step;
            step.activation = activation;
            step.gate.scores = softmax(logits);
            step.gate.selected = top_k_indices(step.gate.scores, config.spec.top_k);
            trace.layers.push_back(std::move(step));
            const double scale = config.scales.drift.empty() ? 1.0 : config.scales.drift[l];
            const double eps = config.residual_drift * scale;
            if (eps > 0.0) {
                double norm_sq = 0.0;
                for (double x : activation) norm_sq += x * x;
                const double step_size = eps * std::sqrt(norm_sq / dim);
                for (double& x : activation) x += step_size * token_rng.normal();
            }
        }
        out.traces.push_back(std::move(trace));
    }
    return out;
}

// Mean cosine similarity between the activations feeding adjacent layers.
inline double mean_adjacent_cosine(std::span<const TokenTrace> traces) {
    double sum = 0.0;
    long long count = 0;
    for (const TokenTrace& trace : traces) {
        for (std::size_t l = 0; l + 1 < trace.layers.size(); ++l) {
            sum += cosine_similarity(trace.layers[l].activation, trace.layers[l + 1].activation);
            count += 1;
        }
    }
    if (count == 0) throw std::domain_error("mean_adjacent_cosine: no adjacent layer pairs");
    return sum / static_cast<double>(count);
}

// Offline profiling pass: alpha from the sensitivity rule at tau, beta from
// gate-reuse predictions scored against the same rule's selections, fisher
// copied from the generator scales (or whatever the caller ingested). Layer 0
// is predictable only through a trained first-layer gate; without one its
// beta is 0.
inline std::vector<LayerProfile> generate_profiles(std::span<const TokenTrace> traces,
                                                   std::span<const GateMatrix> gates, const GatingThreshold& tau,
                                                   const ModelSpec& spec, std::span<const double> fisher_diag_sum,
                                                   const PredictiveGate* first_layer_gate = nullptr) {
    if (traces.empty()) throw std::domain_error("generate_profiles: empty trace set");
    spec.validate();
    if (static_cast<int>(gates.size()) != spec.num_layers)
        throw std::invalid_argument("generate_profiles: gate count does not match num_layers");
    if (static_cast<int>(fisher_diag_sum.size()) != spec.num_layers)
        throw std::invalid_argument("generate_profiles: fisher count does not match num_layers");

    const int num_layers = spec.num_layers;
    std::vector<std::vector<GatingDecision>> decisions(num_layers);
    std::vector<std::vector<int>> predicted(traces.size(), std::vector<int>(num_layers, -1));
    std::vector<std::vector<std::vector<int>>> actual(traces.size());

    for (std::size_t tok = 0; tok < traces.size(); ++tok) {
        const TokenTrace& trace = traces[tok];
        if (static_cast<int>(trace.layers.size()) != num_layers)
            throw std::invalid_argument("generate_profiles: trace layer count mismatch");
        actual[tok].resize(num_layers);
        for (int l = 0; l < num_layers; ++l) {
            LayerProfile probe;
            probe.fisher_diag_sum = fisher_diag_sum[l];
            GatingDecision decision = gate_decide_sensitivity(trace.layers[l].gate.scores, probe, tau, spec);
            actual[tok][l] = decision.selected;
            decisions[l].push_back(std::move(decision));

            if (l >= 1) {
                predicted[tok][l] = reuse_predict(trace.layers[l - 1].activation, gates[l], 1).front();
            } else if (first_layer_gate != nullptr && tok >= 1) {
                const auto& prev_last = traces[tok - 1].layers.back().activation;
                predicted[tok][l] = reuse_predict(prev_last, first_layer_gate->gate, 1).front();
            }
        }
    }

    const std::vector<double> alpha = profile_single_prob(decisions);
    const std::vector<double> beta = measure_accuracy(predicted, actual);

    std::vector<LayerProfile> profiles(num_layers);
    for (int l = 0; l < num_layers; ++l) {
        profiles[l].single_expert_prob = alpha[l];
        profiles[l].prefetch_accuracy = beta[l];
        profiles[l].fisher_diag_sum = fisher_diag_sum[l];
        profiles[l].validate();
    }
    return profiles;
}

// Training pairs for the first-layer gate: previous token's last activation
// against the current token's first-layer score distribution (stored scores
// are post-softmax, so their logs serve as logits).
inline std::vector<TrainingPair> first_layer_training_pairs(std::span<const TokenTrace> traces) {
    std::vector<TrainingPair> pairs;
    for (std::size_t tok = 1; tok < traces.size(); ++tok) {
        TrainingPair pair;
        pair.input = traces[tok - 1].layers.back().activation;
        pair.target_logits.reserve(traces[tok].layers.front().gate.scores.size());
        for (double s : traces[tok].layers.front().gate.scores)
            pair.target_logits.push_back(std::log(std::max(s, 1e-300)));
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

}  // namespace moesim
