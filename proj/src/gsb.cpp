#include "holoquant/gsb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace holoquant {

namespace {
constexpr double kDegenerateStd = 1e-8;

// Deterministic across platforms, unlike std::uniform_*_distribution.
std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t n) {
    return rng() % n;
}

double draw_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double dist2(std::span<const double> a, const double* b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}
}  // namespace

ShapeRecord normalize_grid(const SplineGrid& grid) {
    validate_grid(grid);
    const int g = grid.size();
    ShapeRecord rec;
    double mean = 0.0;
    for (double c : grid.coefficients) mean += c;
    mean /= g;
    double var = 0.0;
    for (double c : grid.coefficients) {
        const double d = c - mean;
        var += d * d;
    }
    var /= g;  // population variance: exact round trip even at G=2
    const double sd = std::sqrt(var);
    rec.bias = mean;
    rec.shape.assign(g, 0.0);
    if (sd < kDegenerateStd) {
        rec.gain = 0.0;
    } else {
        rec.gain = sd;
        for (int k = 0; k < g; ++k) {
            rec.shape[k] = (grid.coefficients[k] - mean) / sd;
        }
    }
    return rec;
}

namespace {

int nearest_row(std::span<const double> shape, const std::vector<double>& entries, int k, int dim) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r < k; ++r) {
        const double d = dist2(shape, entries.data() + static_cast<std::size_t>(r) * dim);
        if (d < best_d) {  // strict: ties keep the lowest row
            best_d = d;
            best = r;
        }
    }
    return best;
}

// Distance-weighted seeding. Returns the number of centroids actually placed;
// fewer than k means the data had fewer distinct points.
int seed_centroids(std::span<const ShapeRecord> shapes, int k, int dim,
                   std::mt19937_64& rng, std::vector<double>& entries) {
    const std::size_t n = shapes.size();
    entries.assign(static_cast<std::size_t>(k) * dim, 0.0);

    const std::size_t first = draw_index(rng, n);
    std::copy(shapes[first].shape.begin(), shapes[first].shape.end(), entries.begin());

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        d2[i] = dist2(shapes[i].shape, entries.data());
    }

    int placed = 1;
    std::vector<double> cum(n);
    while (placed < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += d2[i];
            cum[i] = total;
        }
        if (total <= 0.0) break;  // every point already coincides with a centroid
        const double target = draw_unit(rng) * total;
        // first index with cum > target; zero-weight points are skipped because
        // their cum equals the previous entry
        const auto it = std::upper_bound(cum.begin(), cum.end(), target);
        const std::size_t pick = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(it - cum.begin(), static_cast<std::ptrdiff_t>(n) - 1));
        double* row = entries.data() + static_cast<std::size_t>(placed) * dim;
        std::copy(shapes[pick].shape.begin(), shapes[pick].shape.end(), row);
        ++placed;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], dist2(shapes[i].shape, row));
        }
    }
    return placed;
}

struct LloydResult {
    int iterations = 0;
    double inertia = 0.0;
};

LloydResult lloyd_full(std::span<const ShapeRecord> shapes, int k, int dim, int max_iters,
                       std::vector<double>& entries) {
    const std::size_t n = shapes.size();
    std::vector<int> assign(n, -1);
    std::vector<int> prev(n, -2);
    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    std::vector<std::int64_t> counts(k);
    std::vector<char> taken(n);
    LloydResult res;

    for (int it = 0; it < max_iters; ++it) {
        res.iterations = it + 1;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = nearest_row(shapes[i].shape, entries, k, dim);
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {  // fixed order: bit-reproducible sums
            double* row = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
            for (int c = 0; c < dim; ++c) row[c] += shapes[i].shape[c];
            ++counts[assign[i]];
        }
        for (int r = 0; r < k; ++r) {
            if (counts[r] == 0) continue;
            double* row = entries.data() + static_cast<std::size_t>(r) * dim;
            for (int c = 0; c < dim; ++c) {
                row[c] = sums[static_cast<std::size_t>(r) * dim + c] / counts[r];
            }
        }
        // re-seed empty clusters with the point farthest from its centroid;
        // each gets a distinct point when several clusters empty out at once
        std::fill(taken.begin(), taken.end(), 0);
        for (int r = 0; r < k; ++r) {
            if (counts[r] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                const double d = dist2(
                    shapes[i].shape,
                    entries.data() + static_cast<std::size_t>(assign[i]) * dim);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            taken[far] = 1;
            double* row = entries.data() + static_cast<std::size_t>(r) * dim;
            std::copy(shapes[far].shape.begin(), shapes[far].shape.end(), row);
        }
        if (assign == prev) break;
        prev = assign;
    }

    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int r = nearest_row(shapes[i].shape, entries, k, dim);
        res.inertia += dist2(shapes[i].shape, entries.data() + static_cast<std::size_t>(r) * dim);
    }
    return res;
}

LloydResult lloyd_minibatch(std::span<const ShapeRecord> shapes, int k, int dim, int max_iters,
                            int batch_size, std::mt19937_64& rng, std::vector<double>& entries) {
    const std::size_t n = shapes.size();
    std::vector<std::int64_t> usage(k, 0);
    std::vector<std::size_t> batch(batch_size);
    std::vector<int> batch_assign(batch_size);
    std::vector<char> batch_taken(batch_size);
    LloydResult res;

    for (int it = 0; it < max_iters; ++it) {
        res.iterations = it + 1;
        std::fill(batch_taken.begin(), batch_taken.end(), 0);
        for (int b = 0; b < batch_size; ++b) {
            batch[b] = draw_index(rng, n);
            batch_assign[b] = nearest_row(shapes[batch[b]].shape, entries, k, dim);
        }
        for (int b = 0; b < batch_size; ++b) {
            const int r = batch_assign[b];
            const double eta = 1.0 / static_cast<double>(++usage[r]);
            double* row = entries.data() + static_cast<std::size_t>(r) * dim;
            const auto& s = shapes[batch[b]].shape;
            for (int c = 0; c < dim; ++c) row[c] += eta * (s[c] - row[c]);
        }
        for (int r = 0; r < k; ++r) {
            if (usage[r] != 0) continue;
            int far = 0;
            double far_d = -1.0;
            for (int b = 0; b < batch_size; ++b) {
                if (batch_taken[b]) continue;
                const double d = dist2(
                    shapes[batch[b]].shape,
                    entries.data() + static_cast<std::size_t>(batch_assign[b]) * dim);
                if (d > far_d) {
                    far_d = d;
                    far = b;
                }
            }
            batch_taken[far] = 1;
            double* row = entries.data() + static_cast<std::size_t>(r) * dim;
            std::copy(shapes[batch[far]].shape.begin(), shapes[batch[far]].shape.end(), row);
            usage[r] = 1;
        }
    }

    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int r = nearest_row(shapes[i].shape, entries, k, dim);
        res.inertia += dist2(shapes[i].shape, entries.data() + static_cast<std::size_t>(r) * dim);
    }
    return res;
}

}  // namespace

Codebook kmeans_codebook(std::span<const ShapeRecord> shapes, int k, const KMeansConfig& config) {
    if (shapes.empty()) throw ShapeError("kmeans needs at least one shape");
    if (k < 1) throw ShapeError("codebook size must be at least 1");
    if (config.max_iters < 1) throw ShapeError("kmeans max_iters must be at least 1");
    if (config.batch_size < 1) throw ShapeError("kmeans batch_size must be at least 1");
    const int dim = static_cast<int>(shapes[0].shape.size());
    for (const auto& s : shapes) {
        if (static_cast<int>(s.shape.size()) != dim) {
            throw ShapeError("shapes disagree on grid size");
        }
    }

    Codebook cb;
    cb.k = k;
    cb.grid_size = dim;
    cb.training_meta.seed = config.seed;

    std::mt19937_64 rng(config.seed);
    const int placed = seed_centroids(shapes, k, dim, rng, cb.entries);
    if (placed < k) {
        // fewer distinct shapes than centroids: duplicate the last real row
        for (int r = placed; r < k; ++r) {
            std::copy_n(cb.entries.data() + static_cast<std::size_t>(placed - 1) * dim, dim,
                        cb.entries.data() + static_cast<std::size_t>(r) * dim);
        }
        cb.training_meta.padded = true;
    }

    const bool full = shapes.size() <= static_cast<std::size_t>(config.batch_size);
    cb.training_meta.mini_batch = !full;
    const LloydResult res =
        full ? lloyd_full(shapes, k, dim, config.max_iters, cb.entries)
             : lloyd_minibatch(shapes, k, dim, config.max_iters, config.batch_size, rng,
                               cb.entries);
    cb.training_meta.iterations = res.iterations;
    cb.training_meta.inertia = res.inertia;
    return cb;
}

std::vector<std::uint32_t> assign_indices(std::span<const ShapeRecord> shapes,
                                          const Codebook& codebook) {
    std::vector<std::uint32_t> idx(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (static_cast<int>(shapes[i].shape.size()) != codebook.grid_size) {
            throw ShapeError("shape/codebook grid size mismatch");
        }
        idx[i] = static_cast<std::uint32_t>(
            nearest_row(shapes[i].shape, codebook.entries, codebook.k, codebook.grid_size));
    }
    return idx;
}

CompressedLayer compress_layer(const KanLayer& layer, const VqConfig& config, int layer_index) {
    if (config.k < 1) throw ShapeError("codebook size must be at least 1");
    if (config.restarts < 1) throw ShapeError("restarts must be at least 1");

    std::vector<ShapeRecord> shapes;
    shapes.reserve(static_cast<std::size_t>(layer.edge_count()));
    for (int i = 0; i < layer.in_dim(); ++i) {
        for (int j = 0; j < layer.out_dim(); ++j) {
            ShapeRecord rec = normalize_grid(layer.grid_copy(i, j));
            rec.edge = {layer_index, i, j};
            shapes.push_back(std::move(rec));
        }
    }

    KMeansConfig km{config.max_iters, config.batch_size, config.seed};
    Codebook best;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < config.restarts; ++r) {
        km.seed = config.seed + static_cast<std::uint64_t>(r);
        Codebook cb = kmeans_codebook(shapes, config.k, km);
        if (cb.training_meta.inertia < best_inertia) {  // ties keep the first restart
            best_inertia = cb.training_meta.inertia;
            best = std::move(cb);
        }
    }

    CompressedLayer cl;
    cl.in_dim = layer.in_dim();
    cl.out_dim = layer.out_dim();
    cl.grid_size = layer.grid_size();
    cl.domain_lo = layer.domain_lo();
    cl.domain_hi = layer.domain_hi();
    cl.codebook = std::move(best);
    cl.indices = assign_indices(shapes, cl.codebook);
    cl.gains.resize(shapes.size());
    cl.biases.resize(shapes.size());
    for (std::size_t e = 0; e < shapes.size(); ++e) {
        cl.gains[e] = shapes[e].gain;
        cl.biases[e] = shapes[e].bias;
    }
    if (config.int8) return quantize_compressed_layer(cl);
    return cl;
}

CompressedNetwork compress_network(const KanNetwork& net, const VqConfig& config) {
    CompressedNetwork cn;
    cn.layers.reserve(net.layers().size());
    for (int l = 0; l < net.layer_count(); ++l) {
        cn.layers.push_back(compress_layer(net.layers()[l], config, l));
    }
    return cn;
}

SplineGrid reconstruct_grid(const CompressedLayer& cl, int i, int j) {
    if (i < 0 || i >= cl.in_dim || j < 0 || j >= cl.out_dim) {
        throw ShapeError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") out of range");
    }
    const std::size_t e = static_cast<std::size_t>(i) * cl.out_dim + j;
    const auto row = cl.codebook.row(static_cast<int>(cl.indices[e]));
    SplineGrid grid;
    grid.domain_lo = cl.domain_lo;
    grid.domain_hi = cl.domain_hi;
    grid.coefficients.resize(cl.grid_size);
    for (int c = 0; c < cl.grid_size; ++c) {
        grid.coefficients[c] = cl.gains[e] * row[c] + cl.biases[e];
    }
    return grid;
}

KanLayer reconstruct_layer(const CompressedLayer& cl) {
    KanLayer layer(cl.in_dim, cl.out_dim, cl.grid_size, cl.domain_lo, cl.domain_hi);
    for (int i = 0; i < cl.in_dim; ++i) {
        for (int j = 0; j < cl.out_dim; ++j) {
            const SplineGrid g = reconstruct_grid(cl, i, j);
            auto dst = layer.grid(i, j);
            std::copy(g.coefficients.begin(), g.coefficients.end(), dst.begin());
        }
    }
    return layer;
}

KanNetwork reconstruct_network(const CompressedNetwork& cn) {
    std::vector<KanLayer> layers;
    layers.reserve(cn.layers.size());
    for (const auto& cl : cn.layers) layers.push_back(reconstruct_layer(cl));
    return KanNetwork(std::move(layers));
}

double r_squared(std::span<const SplineGrid> originals,
                 std::span<const SplineGrid> reconstructions) {
    if (originals.size() != reconstructions.size()) {
        throw ShapeError("original/reconstruction counts differ");
    }
    if (originals.empty()) return 1.0;
    const int g = originals[0].size();
    for (std::size_t e = 0; e < originals.size(); ++e) {
        if (originals[e].size() != g || reconstructions[e].size() != g) {
            throw ShapeError("grid sizes differ inside the R2 scope");
        }
    }
    std::vector<double> mean(g, 0.0);
    for (const auto& o : originals) {
        for (int c = 0; c < g; ++c) mean[c] += o.coefficients[c];
    }
    for (int c = 0; c < g; ++c) mean[c] /= static_cast<double>(originals.size());

    double num = 0.0, den = 0.0;
    for (std::size_t e = 0; e < originals.size(); ++e) {
        for (int c = 0; c < g; ++c) {
            const double dr = originals[e].coefficients[c] - reconstructions[e].coefficients[c];
            const double dm = originals[e].coefficients[c] - mean[c];
            num += dr * dr;
            den += dm * dm;
        }
    }
    if (den == 0.0) {
        return num == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    return 1.0 - num / den;
}

namespace {
void collect_grids(const KanLayer& layer, std::vector<SplineGrid>& out) {
    for (int i = 0; i < layer.in_dim(); ++i) {
        for (int j = 0; j < layer.out_dim(); ++j) {
            out.push_back(layer.grid_copy(i, j));
        }
    }
}
}  // namespace

R2Report r2_report(const KanNetwork& original, const CompressedNetwork& compressed) {
    if (original.layer_count() != static_cast<int>(compressed.layers.size())) {
        throw ShapeError("layer counts differ");
    }
    R2Report report;
    std::vector<SplineGrid> all_orig, all_recon;
    for (int l = 0; l < original.layer_count(); ++l) {
        const KanLayer& orig = original.layers()[l];
        const KanLayer recon = reconstruct_layer(compressed.layers[l]);
        if (orig.in_dim() != recon.in_dim() || orig.out_dim() != recon.out_dim() ||
            orig.grid_size() != recon.grid_size()) {
            throw ShapeError("layer " + std::to_string(l) + " dimensions differ");
        }
        std::vector<SplineGrid> o, r;
        collect_grids(orig, o);
        collect_grids(recon, r);
        report.per_layer.push_back(r_squared(o, r));
        all_orig.insert(all_orig.end(), o.begin(), o.end());
        all_recon.insert(all_recon.end(), r.begin(), r.end());
    }
    report.aggregate = r_squared(all_orig, all_recon);
    return report;
}

}  // namespace holoquant
