#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "holoquant/kan.hpp"
#include "holoquant/quant.hpp"

namespace holoquant {

struct EdgeId {
    int layer = 0;
    int i = 0;
    int j = 0;
};

// Gain-shape-bias split of one grid: c = gain * shape + bias, where bias is
// the mean and gain the population std. Degenerate grids (std < 1e-8) store
// gain 0 and a zero shape, so reconstruction is the constant bias exactly.
struct ShapeRecord {
    std::vector<double> shape;
    double gain = 0.0;
    double bias = 0.0;
    EdgeId edge;
};

ShapeRecord normalize_grid(const SplineGrid& grid);

struct KMeansMeta {
    int iterations = 0;
    double inertia = 0.0;
    std::uint64_t seed = 0;
    bool padded = false;      // K exceeded the number of distinct shapes
    bool mini_batch = false;  // refined with sampled batches instead of full Lloyd
};

struct Codebook {
    int k = 0;
    int grid_size = 0;
    std::vector<double> entries;  // k * grid_size, row-major
    KMeansMeta training_meta;

    std::span<const double> row(int r) const {
        return {entries.data() + static_cast<std::size_t>(r) * grid_size,
                static_cast<std::size_t>(grid_size)};
    }
    std::span<double> row(int r) {
        return {entries.data() + static_cast<std::size_t>(r) * grid_size,
                static_cast<std::size_t>(grid_size)};
    }
};

struct KMeansConfig {
    int max_iters = 50;
    int batch_size = 4096;  // datasets up to this size get full-batch Lloyd
    std::uint64_t seed = 0;
};

// Distance-weighted (k-means++ style) seeding, then Lloyd or mini-batch
// refinement. Empty clusters are re-seeded with the point farthest from its
// assigned centroid. All tie-breaks pick the lowest index.
Codebook kmeans_codebook(std::span<const ShapeRecord> shapes, int k, const KMeansConfig& config);

// Nearest centroid per shape (squared L2); ties pick the lowest row.
std::vector<std::uint32_t> assign_indices(std::span<const ShapeRecord> shapes,
                                          const Codebook& codebook);

struct VqConfig {
    int k = 16;
    int max_iters = 50;
    int batch_size = 4096;
    int restarts = 1;     // best inertia wins; run r uses seed + r
    std::uint64_t seed = 0;
    bool int8 = false;    // quantize codebook/gains/biases after clustering
};

// Int8 side tables. When present, the layer's double-precision codebook,
// gains, and biases hold the *dequantized* values, so reconstruction and R2
// transparently measure the quantized model.
struct Int8Tables {
    std::vector<std::int8_t> codebook_codes;  // k * grid_size
    std::vector<std::int8_t> gain_codes;      // E, log-encoded
    std::vector<std::int8_t> bias_codes;      // E
    LinearQuantParams codebook_params;
    LogQuantParams gain_params;
    LinearQuantParams bias_params;
};

struct CompressedLayer {
    int in_dim = 0;
    int out_dim = 0;
    int grid_size = 0;
    double domain_lo = -1.0;
    double domain_hi = 1.0;
    Codebook codebook;
    std::vector<std::uint32_t> indices;  // E, edge-major (i * out_dim + j)
    std::vector<double> gains;           // E
    std::vector<double> biases;          // E
    std::optional<Int8Tables> int8;

    std::int64_t edge_count() const {
        return static_cast<std::int64_t>(in_dim) * out_dim;
    }
};

struct CompressedNetwork {
    std::vector<CompressedLayer> layers;
};

CompressedLayer compress_layer(const KanLayer& layer, const VqConfig& config, int layer_index = 0);
CompressedNetwork compress_network(const KanNetwork& net, const VqConfig& config);

SplineGrid reconstruct_grid(const CompressedLayer& cl, int i, int j);
KanLayer reconstruct_layer(const CompressedLayer& cl);
KanNetwork reconstruct_network(const CompressedNetwork& cn);

// R2 = 1 - sum ||c - c_hat||^2 / sum ||c - c_bar||^2 with c_bar the
// per-position mean grid over the evaluated scope. A zero denominator yields
// 1 when the numerator is zero, -inf otherwise.
double r_squared(std::span<const SplineGrid> originals, std::span<const SplineGrid> reconstructions);

struct R2Report {
    std::vector<double> per_layer;
    double aggregate = 1.0;
};

R2Report r2_report(const KanNetwork& original, const CompressedNetwork& compressed);

// Int8 pass over an existing float compression (indices untouched). Declared
// here because it produces the same CompressedLayer shape; implemented with
// the scalar codecs from quant.hpp.
CompressedLayer quantize_compressed_layer(const CompressedLayer& cl);
CompressedNetwork quantize_compressed_network(const CompressedNetwork& cn);

}  // namespace holoquant
