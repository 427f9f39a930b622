#pragma once

#include <span>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

// Sensitivity threshold for the gating rule. Named tau to keep it apart from
// the cache budget T.
struct GatingThreshold {
    double tau = 0.0;

    void validate() const {
        if (!(tau >= 0.0)) throw std::invalid_argument("GatingThreshold: tau must be >= 0");
    }
};

struct GatingDecision {
    std::vector<int> selected;  // score-descending prefix of the expert ordering
    double perturbation = 0.0;
    bool single = false;
};

// alpha = s1 / (s1 + s2) over the two largest scores; always in [0.5, 1].
// Scale-invariant, so unnormalized score vectors are accepted.
inline double normalized_top1_share(std::span<const double> scores) {
    if (scores.size() < 2) throw std::domain_error("normalized_top1_share: needs at least 2 experts");
    double s1 = -1.0, s2 = -1.0;
    for (double s : scores) {
        if (s > s1) {
            s2 = s1;
            s1 = s;
        } else if (s > s2) {
            s2 = s;
        }
    }
    double denom = s1 + s2;
    if (denom <= 0.0) throw std::domain_error("normalized_top1_share: all-zero scores");
    return s1 / denom;
}

// (1 - alpha)^2 * fisher_diag_sum: the estimated output perturbation from
// dropping the second expert.
inline double sensitivity_perturbation(double alpha, double fisher_diag_sum) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("sensitivity_perturbation: alpha out of [0,1]");
    if (!(fisher_diag_sum >= 0.0))
        throw std::invalid_argument("sensitivity_perturbation: fisher_diag_sum must be >= 0");
    double gap = 1.0 - alpha;
    return gap * gap * fisher_diag_sum;
}

// Activate only the top-1 expert when the perturbation stays at or below tau
// (boundary inclusive); otherwise fall back to top-K.
inline GatingDecision gate_decide_sensitivity(std::span<const double> scores, const LayerProfile& profile,
                                              const GatingThreshold& tau, const ModelSpec& spec) {
    tau.validate();
    double alpha = normalized_top1_share(scores);
    GatingDecision decision;
    decision.perturbation = sensitivity_perturbation(alpha, profile.fisher_diag_sum);
    decision.single = decision.perturbation <= tau.tau;
    decision.selected = top_k_indices(scores, decision.single ? 1 : spec.top_k);
    return decision;
}

// Score-only baseline: single expert whenever alpha itself clears the
// threshold, ignoring layer sensitivity.
inline GatingDecision gate_decide_score_baseline(std::span<const double> scores, double score_threshold,
                                                 const ModelSpec& spec) {
    if (!(score_threshold >= 0.5 && score_threshold <= 1.0))
        throw std::invalid_argument("gate_decide_score_baseline: threshold out of [0.5, 1]");
    double alpha = normalized_top1_share(scores);
    GatingDecision decision;
    decision.perturbation = alpha;
    decision.single = alpha >= score_threshold;
    decision.selected = top_k_indices(scores, decision.single ? 1 : spec.top_k);
    return decision;
}

// Smallest tau whose realized single-expert ratio over the traces reaches the
// target. The ratio is a right-continuous step function of tau that only jumps
// at observed perturbation values, so a bisection over the sorted observation
// multiset is exact.
inline GatingThreshold calibrate_threshold(std::span<const TokenTrace> traces,
                                           std::span<const double> fisher_by_layer,
                                           double target_single_ratio) {
    if (traces.empty()) throw std::domain_error("calibrate_threshold: empty trace set");
    if (!(target_single_ratio >= 0.0 && target_single_ratio <= 1.0))
        throw std::invalid_argument("calibrate_threshold: target ratio out of [0,1]");

    std::vector<double> perturbations;
    for (const TokenTrace& trace : traces) {
        if (trace.layers.size() != fisher_by_layer.size())
            throw std::invalid_argument("calibrate_threshold: fisher vector does not match trace layers");
        for (std::size_t l = 0; l < trace.layers.size(); ++l) {
            double alpha = normalized_top1_share(trace.layers[l].gate.scores);
            perturbations.push_back(sensitivity_perturbation(alpha, fisher_by_layer[l]));
        }
    }
    std::sort(perturbations.begin(), perturbations.end());

    const std::size_t m = perturbations.size();
    auto ratio_at = [&](double tau) {
        auto it = std::upper_bound(perturbations.begin(), perturbations.end(), tau);
        return static_cast<double>(it - perturbations.begin()) / static_cast<double>(m);
    };

    if (ratio_at(0.0) >= target_single_ratio) return GatingThreshold{0.0};

    // smallest index whose value satisfies the target; ratio_at is monotone in
    // the index, so plain bisection applies
    std::size_t lo = 0, hi = m - 1;
    while (lo < hi) {
        std::size_t mid = lo + (hi - lo) / 2;
        if (ratio_at(perturbations[mid]) >= target_single_ratio)
            hi = mid;
        else
            lo = mid + 1;
    }
    return GatingThreshold{perturbations[lo]};
}

// alpha_i = fraction of decisions at layer i that activated a single expert.
inline std::vector<double> profile_single_prob(const std::vector<std::vector<GatingDecision>>& decisions_by_layer) {
    std::vector<double> alpha(decisions_by_layer.size());
    for (std::size_t l = 0; l < decisions_by_layer.size(); ++l) {
        const auto& decisions = decisions_by_layer[l];
        if (decisions.empty()) throw std::domain_error("profile_single_prob: layer with zero decisions");
        std::size_t singles = 0;
        for (const GatingDecision& d : decisions) singles += d.single ? 1 : 0;
        alpha[l] = static_cast<double>(singles) / static_cast<double>(decisions.size());
    }
    return alpha;
}

}  // namespace moesim
