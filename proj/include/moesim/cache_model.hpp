#pragma once

#include <cassert>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

namespace detail {

inline void check_cache_range(int t, int n) {
    if (n < 1) throw std::invalid_argument("cache model: N must be >= 1");
    if (t < 0 || t > n) throw std::invalid_argument("cache model: t out of [0, N]");
}

inline void check_prob(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("cache model: ") + name + " out of [0,1]");
}

}  // namespace detail

// Probability that one specified expert is resident in a uniform random
// t-subset cache.
inline double p_hit(int t, int n) {
    detail::check_cache_range(t, n);
    return static_cast<double>(t) / static_cast<double>(n);
}

// Expected on-demand loads when a single expert is required: a load happens
// only on a cache miss with an incorrect prefetch.
inline double cost_single(int t, int n, double beta) {
    detail::check_cache_range(t, n);
    detail::check_prob(beta, "beta");
    return (1.0 - p_hit(t, n)) * (1.0 - beta);
}

// The three loss cases when two distinct experts are required.
struct TwoExpertCost {
    double both_miss_no_cover = 0.0;   // both miss, prefetch wrong: two loads
    double both_miss_one_cover = 0.0;  // both miss, prefetch covers one: one load
    double one_miss_no_cover = 0.0;    // one hit, prefetch wrong: one load

    double total() const { return both_miss_no_cover + both_miss_one_cover + one_miss_no_cover; }
};

inline TwoExpertCost cost_two(int t, int n, double beta) {
    detail::check_cache_range(t, n);
    detail::check_prob(beta, "beta");
    if (n < 2) throw std::invalid_argument("cost_two: N must be >= 2");
    const double dn = static_cast<double>(n);
    const double dt = static_cast<double>(t);
    double both_miss = (dn - dt) * (dn - dt - 1.0) / (dn * (dn - 1.0));
    // the quadratic is nonnegative for every integer 0 <= t <= n; the clamp
    // mirrors the published formula but must never fire
    assert(both_miss >= 0.0);
    both_miss = std::max(both_miss, 0.0);
    const double one_hit = 2.0 * (dn - dt) * dt / (dn * (dn - 1.0));
    TwoExpertCost cost;
    cost.both_miss_no_cover = 2.0 * both_miss * (1.0 - beta);
    cost.both_miss_one_cover = both_miss * beta;
    cost.one_miss_no_cover = one_hit * (1.0 - beta);
    return cost;
}

// Overall expected on-demand loads per token for one layer: the single- and
// two-expert regimes mixed by alpha.
inline double expected_cost(int t, int n, double alpha, double beta) {
    detail::check_prob(alpha, "alpha");
    return alpha * cost_single(t, n, beta) + (1.0 - alpha) * cost_two(t, n, beta).total();
}

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t samples = 0;
};

namespace detail {

struct McAccumulator {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::uint64_t count = 0;
};

// One draw of the probabilistic event model: uniform random cache contents,
// alpha-weighted demand, a single prefetch that covers at most one missing
// required expert when correct.
inline McAccumulator mc_worker(int t, int n, double alpha, double beta, std::uint64_t samples, SeededRng rng) {
    McAccumulator acc;
    std::vector<int> pool(n);
    for (std::uint64_t s = 0; s < samples; ++s) {
        std::iota(pool.begin(), pool.end(), 0);
        std::uint64_t cached_mask = 0;
        for (int i = 0; i < t; ++i) {
            int j = i + rng.uniform_int(n - i);
            std::swap(pool[i], pool[j]);
            cached_mask |= std::uint64_t{1} << pool[i];
        }

        int required[2];
        int required_count;
        if (rng.uniform01() < alpha) {
            required_count = 1;
            required[0] = rng.uniform_int(n);
        } else {
            required_count = 2;
            required[0] = rng.uniform_int(n);
            int second = rng.uniform_int(n - 1);
            required[1] = second + (second >= required[0] ? 1 : 0);
        }

        int missing = 0;
        for (int i = 0; i < required_count; ++i)
            if (!(cached_mask >> required[i] & 1)) ++missing;

        const bool prefetch_correct = rng.uniform01() < beta;
        if (prefetch_correct && missing > 0) --missing;

        const double cost = static_cast<double>(missing);
        acc.sum += cost;
        acc.sum_sq += cost * cost;
        acc.count += 1;
    }
    return acc;
}

}  // namespace detail

// Simulation oracle for the closed-form layer cost. Splitting across workers
// changes nothing: per-worker streams derive from (seed, worker index) and
// partial sums combine by index.
inline MonteCarloEstimate monte_carlo_cost(int t, int n, double alpha, double beta, std::uint64_t samples,
                                           std::uint64_t seed, int workers = 1) {
    detail::check_cache_range(t, n);
    detail::check_prob(alpha, "alpha");
    detail::check_prob(beta, "beta");
    if (samples < 1) throw std::invalid_argument("monte_carlo_cost: samples must be >= 1");
    if (workers < 1) throw std::invalid_argument("monte_carlo_cost: workers must be >= 1");
    if (n > 63) throw std::invalid_argument("monte_carlo_cost: N > 63 unsupported");

    SeededRng root(seed);
    std::vector<detail::McAccumulator> parts(workers);
    if (workers == 1) {
        parts[0] = detail::mc_worker(t, n, alpha, beta, samples, root.derive(0));
    } else {
        std::vector<std::thread> threads;
        const std::uint64_t base = samples / workers;
        const std::uint64_t extra = samples % workers;
        for (int w = 0; w < workers; ++w) {
            const std::uint64_t quota = base + (static_cast<std::uint64_t>(w) < extra ? 1 : 0);
            threads.emplace_back([&parts, w, t, n, alpha, beta, quota, &root] {
                parts[w] = detail::mc_worker(t, n, alpha, beta, quota, root.derive(static_cast<std::uint64_t>(w)));
            });
        }
        for (auto& th : threads) th.join();
    }

    double sum = 0.0, sum_sq = 0.0;
    std::uint64_t count = 0;
    for (const auto& part : parts) {
        sum += part.sum;
        sum_sq += part.sum_sq;
        count += part.count;
    }
    MonteCarloEstimate est;
    est.samples = count;
    est.mean = sum / static_cast<double>(count);
    if (count > 1) {
        double var = (sum_sq - sum * sum / static_cast<double>(count)) / static_cast<double>(count - 1);
        est.std_error = std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
    }
    return est;
}

// f[i][t] = expected on-demand loads per token at layer i with cache size t.
struct CostTable {
    int experts_per_layer = 0;
    std::vector<std::vector<double>> loads;  // L rows, N+1 columns

    int num_layers() const { return static_cast<int>(loads.size()); }
    double at(int layer, int t) const { return loads.at(layer).at(t); }
};

inline CostTable build_cost_table(std::span<const LayerProfile> profiles, const ModelSpec& spec) {
    spec.validate();
    if (static_cast<int>(profiles.size()) != spec.num_layers)
        throw std::invalid_argument("build_cost_table: profile count does not match num_layers");
    CostTable table;
    table.experts_per_layer = spec.experts_per_layer;
    table.loads.resize(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        profiles[i].validate();
        table.loads[i].resize(spec.experts_per_layer + 1);
        for (int t = 0; t <= spec.experts_per_layer; ++t)
            table.loads[i][t] =
                expected_cost(t, spec.experts_per_layer, profiles[i].single_expert_prob, profiles[i].prefetch_accuracy);
    }
    return table;
}

}  // namespace moesim
