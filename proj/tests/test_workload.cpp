#include <catch2/catch_amalgamated.hpp>

#include "moesim/workload.hpp"

using namespace moesim;

namespace {

SynthConfig base_config() {
    SynthConfig config;
    config.spec = ModelSpec{4, 8, 2, 8};
    config.tokens = 300;
    config.gate_seed = 11;
    config.token_seed = 12;
    return config;
}

// empirical no-information reference: the accuracy a predictor achieves by
// drawing from the prediction marginals without seeing the activation
double independent_guess_baseline(const std::vector<std::vector<int>>& predicted,
                                  const std::vector<std::vector<std::vector<int>>>& actual, int layer,
                                  int num_experts) {
    std::vector<double> pred_marginal(num_experts, 0.0);
    std::vector<double> in_selected(num_experts, 0.0);
    double count = 0.0;
    for (std::size_t tok = 0; tok < predicted.size(); ++tok) {
        if (predicted[tok][layer] < 0) continue;
        pred_marginal[predicted[tok][layer]] += 1.0;
        for (int e : actual[tok][layer]) in_selected[e] += 1.0;
        count += 1.0;
    }
    double baseline = 0.0;
    for (int e = 0; e < num_experts; ++e) baseline += (pred_marginal[e] / count) * (in_selected[e] / count);
    return baseline;
}

}  // namespace

TEST_CASE("generated traces are structurally valid", "[workload]") {
    SynthConfig config = base_config();
    GeneratedWorkload workload = generate_trace(config);
    REQUIRE(workload.traces.size() == 300);
    REQUIRE(workload.gates.size() == 4);
    CHECK(validate_trace(workload.traces, config.spec).ok());

    // stored scores must reproduce from the stored activation and gate
    const TokenTrace& probe = workload.traces.front();
    for (int l = 0; l < 4; ++l) {
        std::vector<double> logits = workload.gates[l].logits(probe.layers[l].activation);
        for (double& v : logits) v /= config.dirichlet_concentration;
        const std::vector<double> expect = softmax(logits);
        for (int e = 0; e < 8; ++e)
            CHECK(probe.layers[l].gate.scores[e] == Catch::Approx(expect[e]).margin(1e-12));
    }
}

TEST_CASE("generation is deterministic per seed pair", "[workload]") {
    SynthConfig config = base_config();
    config.tokens = 20;
    GeneratedWorkload a = generate_trace(config);
    GeneratedWorkload b = generate_trace(config);
    CHECK(a.traces == b.traces);
    CHECK(a.gates == b.gates);

    config.token_seed += 1;
    GeneratedWorkload c = generate_trace(config);
    CHECK_FALSE(a.traces == c.traces);
}

TEST_CASE("zero drift makes every adjacent pair identical", "[workload]") {
    SynthConfig config = base_config();
    config.tokens = 30;
    config.residual_drift = 0.0;
    GeneratedWorkload workload = generate_trace(config);
    for (const TokenTrace& trace : workload.traces)
        for (std::size_t l = 0; l + 1 < trace.layers.size(); ++l)
            CHECK(cosine_similarity(trace.layers[l].activation, trace.layers[l + 1].activation) ==
                  Catch::Approx(1.0));
}

TEST_CASE("adjacent-layer similarity falls monotonically with drift", "[workload]") {
    // averaged over seeds; the relative-step walk targets 1/sqrt(1 + eps^2)
    const std::vector<double> drifts{0.0, 0.2, 0.5, 1.0, 3.0};
    std::vector<double> means;
    for (double eps : drifts) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            SynthConfig config = base_config();
            config.tokens = 150;
            config.residual_drift = eps;
            config.token_seed = 100 + seed;
            total += mean_adjacent_cosine(generate_trace(config).traces);
        }
        means.push_back(total / 5.0);
    }
    for (std::size_t i = 0; i + 1 < means.size(); ++i) CHECK(means[i] > means[i + 1]);
    CHECK(means.front() == Catch::Approx(1.0));

    // moderate drift lands in the high-similarity band the observation calls for
    SynthConfig mid = base_config();
    mid.residual_drift = 0.33;
    const double cos_mid = mean_adjacent_cosine(generate_trace(mid).traces);
    CHECK(cos_mid > 0.9);
    CHECK(cos_mid < 0.99);
}

TEST_CASE("huge drift reduces gate reuse to marginal guessing", "[workload]") {
    SynthConfig config = base_config();
    config.tokens = 4000;
    config.residual_drift = 100.0;
    GeneratedWorkload workload = generate_trace(config);

    const int num_layers = config.spec.num_layers;
    std::vector<std::vector<int>> predicted(workload.traces.size(), std::vector<int>(num_layers, -1));
    std::vector<std::vector<std::vector<int>>> actual(workload.traces.size());
    for (std::size_t tok = 0; tok < workload.traces.size(); ++tok) {
        actual[tok].resize(num_layers);
        for (int l = 0; l < num_layers; ++l) {
            actual[tok][l] = workload.traces[tok].layers[l].gate.selected;
            if (l >= 1)
                predicted[tok][l] = reuse_predict(workload.traces[tok].layers[l - 1].activation, workload.gates[l], 1)
                                        .front();
        }
    }
    const std::vector<double> beta = measure_accuracy(predicted, actual);
    for (int l = 1; l < num_layers; ++l) {
        const double baseline = independent_guess_baseline(predicted, actual, l, 8);
        const double sigma = std::sqrt(baseline * (1.0 - baseline) / static_cast<double>(config.tokens));
        CHECK(std::abs(beta[l] - baseline) < 4.0 * sigma);
    }
}

TEST_CASE("concentration controls score skew", "[workload]") {
    auto mean_alpha = [](const GeneratedWorkload& workload) {
        double total = 0.0;
        long long count = 0;
        for (const TokenTrace& trace : workload.traces)
            for (const LayerStep& step : trace.layers) {
                total += normalized_top1_share(step.gate.scores);
                ++count;
            }
        return total / static_cast<double>(count);
    };

    SynthConfig sharp = base_config();
    sharp.dirichlet_concentration = 0.3;
    SynthConfig flat = base_config();
    flat.dirichlet_concentration = 5.0;
    CHECK(mean_alpha(generate_trace(sharp)) > mean_alpha(generate_trace(flat)));
}

TEST_CASE("profiles compose gating and prediction measurements", "[workload]") {
    SynthConfig config = base_config();
    config.tokens = 200;
    config.residual_drift = 0.25;
    config.scales.fisher = {2.0, 1.0, 0.5, 0.25};
    config.scales.drift = {1.5, 1.0, 0.7, 0.4};
    GeneratedWorkload workload = generate_trace(config);

    GatingThreshold tau{0.05};
    auto profiles =
        generate_profiles(workload.traces, workload.gates, tau, config.spec, workload.fisher_diag_sum);
    REQUIRE(profiles.size() == 4);

    SECTION("deterministic given identical inputs") {
        auto again =
            generate_profiles(workload.traces, workload.gates, tau, config.spec, workload.fisher_diag_sum);
        CHECK(profiles == again);
    }
    SECTION("heterogeneity shows up as the documented gradient") {
        // early layers: larger fisher => fewer single decisions; larger drift
        // => worse prediction
        CHECK(profiles.front().single_expert_prob < profiles.back().single_expert_prob);
        CHECK(profiles.front().prefetch_accuracy < profiles.back().prefetch_accuracy);
        CHECK(profiles.front().fisher_diag_sum == 2.0);
        CHECK(profiles.back().fisher_diag_sum == 0.25);
    }
    SECTION("layer 0 is unpredictable without a trained gate") {
        CHECK(profiles.front().prefetch_accuracy == 0.0);
    }
    SECTION("a trained first-layer gate fills in layer 0") {
        auto pairs = first_layer_training_pairs(workload.traces);
        REQUIRE(pairs.size() == workload.traces.size() - 1);
        PredictiveGate gate =
            train_predictive_gate(pairs, config.spec.hidden_dim, config.spec.experts_per_layer, TrainingConfig{});
        auto with_gate = generate_profiles(workload.traces, workload.gates, tau, config.spec,
                                           workload.fisher_diag_sum, &gate);
        CHECK(with_gate.front().prefetch_accuracy >= 0.0);
        for (int l = 1; l < 4; ++l) CHECK(with_gate[l].prefetch_accuracy == profiles[l].prefetch_accuracy);
    }
}

TEST_CASE("tau zero yields near-zero single ratios on smooth scores", "[workload]") {
    SynthConfig config = base_config();
    config.tokens = 100;
    GeneratedWorkload workload = generate_trace(config);
    std::vector<double> fisher(4, 1.0);
    auto profiles = generate_profiles(workload.traces, workload.gates, GatingThreshold{0.0}, config.spec, fisher);
    for (const LayerProfile& p : profiles) CHECK(p.single_expert_prob == 0.0);
}
