#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "holoquant/gsb.hpp"
#include "holoquant/kan.hpp"
#include "holoquant/trainer.hpp"

namespace holoquant {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// One row per edge, ordered (layer, i, j); requires a network-wide grid size.
Matrix stack_coefficients(const KanNetwork& net);
// Inverse re-layout; the round trip reproduces the network exactly.
KanNetwork unstack_coefficients(const Matrix& m, KanNetwork net);
// Subtract the mean row, so the row cloud is centered at the origin.
Matrix center_rows(const Matrix& m);

struct SpectrumReport {
    std::vector<double> singular_values;      // descending
    std::vector<double> cumulative_fraction;  // sigma_i^2 mass up to each rank
    int rank_90 = 0;  // smallest rank reaching 90% of the variance, 1-based
    int rank_94 = 0;
    int rank_99 = 0;
};

SpectrumReport svd_spectrum(const Matrix& m);
std::string spectrum_csv(const SpectrumReport& report);

struct SweepPoint {
    double x = 0.0;
    double y = 0.0;
    std::uint64_t seed = 0;
};

struct SweepCurve {
    std::vector<SweepPoint> points;  // x strictly increasing
    std::string label;
};

std::string sweep_csv(const SweepCurve& curve);

// Test MSE after global norm pruning at each sparsity level.
SweepCurve pruning_sweep(const KanNetwork& net, const Dataset& test,
                         std::span<const double> sparsities, std::uint64_t seed_tag = 0);

struct AblationResult {
    SweepCurve r2;         // aggregate reconstruction R2 vs K
    SweepCurve mse_delta;  // test-MSE(compressed) - test-MSE(dense) vs K
};

// Best-of-`restarts` compression per K; run r of cell K uses seed + r.
AblationResult codebook_ablation(const KanNetwork& net, const Dataset& test,
                                 std::span<const int> ks, int restarts, std::uint64_t seed);

// Bit accounting used for matched-budget comparisons. Pruning keeps dense
// float32 grids on the surviving edges; VQ stores packed indices plus Int8
// gain/bias/codebook tables (one codebook per layer).
std::uint64_t pruning_storage_bits(const KanNetwork& net, std::int64_t kept_edges);
std::uint64_t vq_storage_bits(const KanNetwork& net, int k);
// Largest power-of-two K whose storage fits the budget; 0 if none fits.
int max_pow2_k_for_budget(const KanNetwork& net, std::uint64_t budget_bits);

struct BudgetPoint {
    std::uint64_t budget_bits = 0;
    double prune_mse = 0.0;
    double vq_mse = 0.0;
    double baseline_mse = 0.0;
    double sparsity = 0.0;  // realized pruning sparsity at this budget
    int k = 0;              // chosen codebook size at this budget
};

struct ComparisonReport {
    std::vector<BudgetPoint> points;
};

ComparisonReport pruning_vs_vq(const KanNetwork& net, const Dataset& test,
                               std::span<const std::uint64_t> budgets, int restarts,
                               std::uint64_t seed);
std::string comparison_csv(const ComparisonReport& report);

// Worker count for sweep cells; reads HOLOQUANT_THREADS, default 1.
int worker_count();

}  // namespace holoquant
