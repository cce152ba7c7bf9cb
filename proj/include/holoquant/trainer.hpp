#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "holoquant/kan.hpp"

namespace holoquant {

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 100;
    int batch_size = 16;
    double weight_decay = 1e-4;   // decoupled, AdamW-style
    double l21_lambda = 0.0;      // group penalty over whole edge grids
    double init_sigma = 0.1;
    std::uint64_t seed = 0;
};

enum class TargetFunction { Sines, Poly, Bump };

TargetFunction target_function_from_name(std::string_view name);
const char* target_function_name(TargetFunction f);
double eval_target(TargetFunction f, std::span<const double> x);

// Synthetic regression task; identical (task, seed) pairs yield bit-identical
// datasets. Inputs are uniform in [-1, 1]^d.
struct SyntheticTask {
    int input_dim = 1;
    TargetFunction target = TargetFunction::Sines;
    int sample_count = 1000;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct Dataset {
    int input_dim = 0;
    std::vector<double> inputs;   // sample_count * input_dim, row-major
    std::vector<double> targets;  // sample_count

    int size() const { return static_cast<int>(targets.size()); }
    std::span<const double> row(int r) const {
        return {inputs.data() + static_cast<std::size_t>(r) * input_dim,
                static_cast<std::size_t>(input_dim)};
    }
};

Dataset make_dataset(const SyntheticTask& task);

KanNetwork init_network(std::span<const int> dims, int grid_size, double sigma,
                        std::uint64_t seed, double domain_lo = -1.0, double domain_hi = 1.0);

// d eval_spline / d coefficients at x: at most two nonzero interpolation
// weights, which are nonnegative and sum to 1.
std::vector<double> spline_gradient(const SplineGrid& grid, double x);

struct L21Penalty {
    double value = 0.0;
    std::vector<double> gradient;  // aligned with layer.coefficients()
};
L21Penalty group_l21_penalty(const KanLayer& layer, double lambda);

// Batch MSE plus group penalty, with analytic gradients per layer (aligned
// with each layer's flat coefficient array). Scalar targets only.
struct LossGrad {
    double mse = 0.0;
    double penalty = 0.0;
    std::vector<std::vector<double>> gradients;
};
LossGrad loss_and_gradient(const KanNetwork& net, const Dataset& data,
                           std::span<const int> rows, double l21_lambda);

double evaluate_mse(const KanNetwork& net, const Dataset& data);

struct TrainResult {
    KanNetwork network;
    std::vector<double> loss_history;  // per-epoch full-training-set MSE
};
TrainResult train(const KanNetwork& net, const SyntheticTask& task, const TrainConfig& config);

struct PruneMask {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<std::uint8_t> keep;  // edge-major, length E
    double threshold = 0.0;          // realized global norm threshold
};

struct PruneResult {
    KanNetwork network;             // pruned edges zeroed
    std::vector<PruneMask> masks;   // one per layer
    double threshold = 0.0;
};

// Zeroes the `count` edges with smallest grid L2 norm, ranked globally across
// layers; ties broken by (layer, i, j) order.
PruneResult prune_lowest(const KanNetwork& net, std::int64_t count);
PruneResult prune_by_norm(const KanNetwork& net, double sparsity);

}  // namespace holoquant
