#pragma once

#include <functional>
#include <span>
#include <vector>

#include "moesim/core.hpp"
#include "moesim/gating.hpp"

namespace moesim {

// One layer's routing matrix, row-major d x N: logit_j = sum_i x_i * w[i][j].
struct GateMatrix {
    int hidden_dim = 0;
    int num_experts = 0;
    std::vector<double> weights;

    GateMatrix() = default;
    GateMatrix(int d, int n) : hidden_dim(d), num_experts(n), weights(static_cast<std::size_t>(d) * n, 0.0) {}

    double& at(int row, int col) { return weights[static_cast<std::size_t>(row) * num_experts + col]; }
    double at(int row, int col) const { return weights[static_cast<std::size_t>(row) * num_experts + col]; }

    std::vector<double> logits(std::span<const double> activation) const {
        if (static_cast<int>(activation.size()) != hidden_dim)
            throw std::invalid_argument("GateMatrix::logits: activation dimension mismatch");
        std::vector<double> out(num_experts, 0.0);
        for (int i = 0; i < hidden_dim; ++i) {
            const double x = activation[i];
            if (x == 0.0) continue;
            const double* row = weights.data() + static_cast<std::size_t>(i) * num_experts;
            for (int j = 0; j < num_experts; ++j) out[j] += x * row[j];
        }
        return out;
    }

    bool operator==(const GateMatrix&) const = default;
};

inline std::vector<double> predict_scores(std::span<const double> activation, const GateMatrix& gate) {
    return softmax(gate.logits(activation));
}

// Apply the next layer's gate to the current activation and rank experts by
// the resulting scores.
inline std::vector<int> reuse_predict(std::span<const double> activation, const GateMatrix& next_gate, int count) {
    if (count < 1 || count > next_gate.num_experts)
        throw std::invalid_argument("reuse_predict: count out of [1, N]");
    return top_k_indices(predict_scores(activation, next_gate), count);
}

// Per-layer prefetch accuracy: the fraction of tokens whose predicted top-1
// expert lands inside the actually selected set. Entries of -1 mark
// token/layer slots with no prediction and are excluded from the ratio; a
// layer with no predictions at all reports 0.
inline std::vector<double> measure_accuracy(const std::vector<std::vector<int>>& predicted_top1,
                                            const std::vector<std::vector<std::vector<int>>>& actual_selected) {
    if (predicted_top1.size() != actual_selected.size())
        throw std::invalid_argument("measure_accuracy: token count mismatch");
    if (predicted_top1.empty()) throw std::invalid_argument("measure_accuracy: empty input");
    const std::size_t layers = predicted_top1.front().size();
    std::vector<std::size_t> hits(layers, 0), counted(layers, 0);
    for (std::size_t tok = 0; tok < predicted_top1.size(); ++tok) {
        if (predicted_top1[tok].size() != layers || actual_selected[tok].size() != layers)
            throw std::invalid_argument("measure_accuracy: layer count mismatch");
        for (std::size_t l = 0; l < layers; ++l) {
            const int predicted = predicted_top1[tok][l];
            if (predicted < 0) continue;
            ++counted[l];
            const auto& selected = actual_selected[tok][l];
            if (std::find(selected.begin(), selected.end(), predicted) != selected.end()) ++hits[l];
        }
    }
    std::vector<double> beta(layers, 0.0);
    for (std::size_t l = 0; l < layers; ++l)
        if (counted[l] > 0) beta[l] = static_cast<double>(hits[l]) / static_cast<double>(counted[l]);
    return beta;
}

// Predicted experts for one lookahead target, score-descending.
struct LayerPrediction {
    int layer = 0;
    std::vector<int> experts;
};

struct PrefetchItem {
    ExpertRef ref;
    int source_layer = 0;  // layer whose activation produced the prediction
    int depth = 1;         // 1 = immediate next target
};

struct PrefetchPlan {
    std::vector<PrefetchItem> items;

    bool empty() const { return items.empty(); }
};

// Speculative transfer list. The immediate next target contributes its
// uncached predicted experts; deeper targets are consulted only while every
// predicted expert of the nearer target is already resident.
inline PrefetchPlan plan_prefetch(const std::function<bool(const ExpertRef&)>& is_resident,
                                  std::span<const LayerPrediction> predictions, int depth_limit,
                                  int source_layer = -1) {
    if (depth_limit < 1 || depth_limit > 3) throw std::invalid_argument("plan_prefetch: depth_limit out of {1,2,3}");
    PrefetchPlan plan;
    const int targets = std::min<int>(depth_limit, static_cast<int>(predictions.size()));
    for (int idx = 0; idx < targets; ++idx) {
        const LayerPrediction& prediction = predictions[idx];
        bool any_missing = false;
        for (int expert : prediction.experts) {
            ExpertRef ref{prediction.layer, expert};
            if (is_resident(ref)) continue;
            any_missing = true;
            plan.items.push_back(PrefetchItem{ref, source_layer, idx + 1});
        }
        if (any_missing) break;
    }
    return plan;
}

inline double kl_divergence(std::span<const double> p, std::span<const double> log_p,
                            std::span<const double> log_q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) kl += p[i] * (log_p[i] - log_q[i]);
    return std::max(kl, 0.0);
}

// D_KL(softmax(true_logits) || softmax(pred_logits)).
inline double kl_loss(std::span<const double> pred_logits, std::span<const double> true_logits) {
    if (pred_logits.size() != true_logits.size()) throw std::invalid_argument("kl_loss: length mismatch");
    const std::vector<double> p = softmax(true_logits);
    const std::vector<double> log_p = log_softmax(true_logits);
    const std::vector<double> log_q = log_softmax(pred_logits);
    return kl_divergence(p, log_p, log_q);
}

struct TrainingConfig {
    double learning_rate = 0.1;
    int steps = 500;
    std::uint64_t seed = 0;
};

// Auxiliary gate predicting the first layer's routing from the previous
// token's last activation.
struct PredictiveGate {
    GateMatrix gate;
    TrainingConfig config;
};

// (previous token's last activation, next token's first-layer gate logits)
struct TrainingPair {
    std::vector<double> input;
    std::vector<double> target_logits;
};

// Mean KL of the gate's predictions against the targets.
inline double kl_training_loss(std::span<const TrainingPair> pairs, const GateMatrix& gate) {
    if (pairs.empty()) throw std::invalid_argument("kl_training_loss: empty training set");
    double total = 0.0;
    for (const TrainingPair& pair : pairs) {
        const std::vector<double> logits = gate.logits(pair.input);
        total += kl_loss(logits, pair.target_logits);
    }
    return total / static_cast<double>(pairs.size());
}

// Analytic gradient of the mean KL w.r.t. the gate weights: per sample,
// d/dz of KL(p || softmax(z)) is q - p, so dW = x outer (q - p).
inline std::vector<double> kl_training_grad(std::span<const TrainingPair> pairs, const GateMatrix& gate) {
    if (pairs.empty()) throw std::invalid_argument("kl_training_grad: empty training set");
    const int d = gate.hidden_dim;
    const int n = gate.num_experts;
    std::vector<double> grad(static_cast<std::size_t>(d) * n, 0.0);
    for (const TrainingPair& pair : pairs) {
        if (static_cast<int>(pair.target_logits.size()) != n)
            throw std::invalid_argument("kl_training_grad: target length mismatch");
        const std::vector<double> q = softmax(gate.logits(pair.input));
        const std::vector<double> p = softmax(pair.target_logits);
        for (int i = 0; i < d; ++i) {
            const double x = pair.input[i];
            if (x == 0.0) continue;
            double* row = grad.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) row[j] += x * (q[j] - p[j]);
        }
    }
    const double inv = 1.0 / static_cast<double>(pairs.size());
    for (double& g : grad) g *= inv;
    return grad;
}

// Full-batch gradient descent with a fixed learning rate and step count.
// Deterministic given the config seed, which only drives the initialization.
inline PredictiveGate train_predictive_gate(std::span<const TrainingPair> pairs, int hidden_dim, int num_experts,
                                            const TrainingConfig& config) {
    if (pairs.empty()) throw std::invalid_argument("train_predictive_gate: empty training set");
    for (const TrainingPair& pair : pairs) {
        if (static_cast<int>(pair.input.size()) != hidden_dim ||
            static_cast<int>(pair.target_logits.size()) != num_experts)
            throw std::invalid_argument("train_predictive_gate: pair shape mismatch");
    }
    PredictiveGate result;
    result.config = config;
    result.gate = GateMatrix(hidden_dim, num_experts);
    SeededRng rng(config.seed);
    for (double& w : result.gate.weights) w = 0.1 * rng.normal();

    for (int step = 0; step < config.steps; ++step) {
        const std::vector<double> grad = kl_training_grad(pairs, result.gate);
        for (std::size_t i = 0; i < grad.size(); ++i) result.gate.weights[i] -= config.learning_rate * grad[i];
    }
    return result;
}

}  // namespace moesim
