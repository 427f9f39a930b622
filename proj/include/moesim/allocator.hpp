#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "moesim/cache_model.hpp"
#include "moesim/core.hpp"

namespace moesim {

// Knapsack table: min_cost[i][j] is the least total expected load over the
// first i layers using at most j cache slots; choice[i][j] records the argmin
// capacity for layer i (smallest k on ties).
struct DPState {
    std::vector<std::vector<double>> min_cost;  // (L+1) x (budget+1)
    std::vector<std::vector<int>> choice;
};

struct AllocationResult {
    Allocation allocation;
    double total_cost = 0.0;
};

namespace detail {

inline void check_cost_table(const CostTable& costs) {
    if (costs.loads.empty()) throw std::invalid_argument("allocator: empty cost table");
    for (const auto& row : costs.loads)
        if (static_cast<int>(row.size()) != costs.experts_per_layer + 1)
            throw std::invalid_argument("allocator: cost table row length != N+1");
}

}  // namespace detail

inline DPState compute_dp_state(const CostTable& costs, int budget) {
    detail::check_cost_table(costs);
    if (budget < 0) throw std::invalid_argument("allocator: negative budget");
    const int layers = costs.num_layers();
    const int n = costs.experts_per_layer;

    DPState dp;
    dp.min_cost.assign(layers + 1, std::vector<double>(budget + 1, 0.0));
    dp.choice.assign(layers + 1, std::vector<int>(budget + 1, 0));
    for (int i = 1; i <= layers; ++i) {
        for (int j = 0; j <= budget; ++j) {
            double best = std::numeric_limits<double>::infinity();
            int best_k = 0;
            const int k_max = std::min(j, n);
            for (int k = 0; k <= k_max; ++k) {
                const double cost = dp.min_cost[i - 1][j - k] + costs.loads[i - 1][k];
                if (cost < best) {
                    best = cost;
                    best_k = k;
                }
            }
            dp.min_cost[i][j] = best;
            dp.choice[i][j] = best_k;
        }
    }
    return dp;
}

// Optimal per-layer cache sizes under the budget, reconstructed by walking the
// choice table back from the last layer.
inline AllocationResult dp_allocate(const CostTable& costs, int budget, const ModelSpec& spec) {
    spec.validate();
    detail::check_cost_table(costs);
    if (costs.num_layers() != spec.num_layers || costs.experts_per_layer != spec.experts_per_layer)
        throw std::invalid_argument("dp_allocate: cost table does not match model spec");
    if (budget < 0) throw std::invalid_argument("dp_allocate: negative budget");

    // capacities cannot exceed L*N, so a wider table changes nothing
    const int effective = std::min<long long>(budget, static_cast<long long>(spec.num_layers) * spec.experts_per_layer);
    DPState dp = compute_dp_state(costs, static_cast<int>(effective));

    AllocationResult result;
    result.allocation.budget = budget;
    result.allocation.capacities.assign(spec.num_layers, 0);
    int j = static_cast<int>(effective);
    for (int i = spec.num_layers; i >= 1; --i) {
        const int k = dp.choice[i][j];
        result.allocation.capacities[i - 1] = k;
        j -= k;
    }
    result.total_cost = dp.min_cost[spec.num_layers][effective];
    return result;
}

// Exhaustive oracle: enumerates every feasible capacity vector in
// lexicographic order and keeps the first strict minimum. Costs accumulate
// layer 0 upward, matching the DP's summation order exactly.
inline AllocationResult brute_force_allocate(const CostTable& costs, int budget, const ModelSpec& spec) {
    spec.validate();
    detail::check_cost_table(costs);
    if (costs.num_layers() != spec.num_layers || costs.experts_per_layer != spec.experts_per_layer)
        throw std::invalid_argument("brute_force_allocate: cost table does not match model spec");
    if (budget < 0) throw std::invalid_argument("brute_force_allocate: negative budget");

    const int layers = spec.num_layers;
    const int n = spec.experts_per_layer;
    const double instance_bits = layers * std::log2(static_cast<double>(n) + 1.0);
    if (instance_bits > 20.0) throw std::invalid_argument("brute_force_allocate: instance too large");

    std::vector<int> current(layers, 0);
    std::vector<int> best;
    double best_cost = std::numeric_limits<double>::infinity();

    while (true) {
        long long total = 0;
        for (int t : current) total += t;
        if (total <= budget) {
            double cost = 0.0;
            for (int i = 0; i < layers; ++i) cost += costs.loads[i][current[i]];
            if (cost < best_cost) {
                best_cost = cost;
                best = current;
            }
        }
        // odometer increment, last layer fastest: visits vectors in
        // lexicographic order
        int pos = layers - 1;
        while (pos >= 0 && current[pos] == n) {
            current[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
        ++current[pos];
    }

    AllocationResult result;
    result.allocation.budget = budget;
    result.allocation.capacities = best;
    result.total_cost = best_cost;
    return result;
}

// Even split of the budget, used as the fixed-allocation baseline. Leftover
// slots go to the earliest layers; every capacity is clamped to N.
inline Allocation uniform_allocation(int budget, const ModelSpec& spec) {
    spec.validate();
    if (budget < 0) throw std::invalid_argument("uniform_allocation: negative budget");
    Allocation allocation;
    allocation.budget = budget;
    allocation.capacities.assign(spec.num_layers, 0);
    const int base = budget / spec.num_layers;
    const int extra = budget % spec.num_layers;
    for (int i = 0; i < spec.num_layers; ++i) {
        const int want = base + (i < extra ? 1 : 0);
        allocation.capacities[i] = std::min(want, spec.experts_per_layer);
    }
    return allocation;
}

}  // namespace moesim
