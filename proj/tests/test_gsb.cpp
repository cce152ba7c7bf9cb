#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "holoquant/gsb.hpp"

using namespace holoquant;

namespace {

SplineGrid make_grid(std::vector<double> c, double lo = -1.0, double hi = 1.0) {
    return SplineGrid{std::move(c), lo, hi};
}

ShapeRecord raw_shape(std::vector<double> v) {
    ShapeRecord r;
    r.shape = std::move(v);
    r.gain = 1.0;
    return r;
}

double dist2(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

}  // namespace

TEST_CASE("gain-shape-bias split of a known grid") {
    const ShapeRecord r = normalize_grid(make_grid({1.0, 2.0, 3.0, 4.0}));
    CHECK(r.bias == 2.5);
    CHECK(r.gain == doctest::Approx(1.1180339887498949).epsilon(1e-16));
    REQUIRE(r.shape.size() == 4);
    CHECK(r.shape[0] == doctest::Approx(-1.3416407864998738).epsilon(1e-15));
    CHECK(r.shape[1] == doctest::Approx(-0.44721359549995793).epsilon(1e-15));
    CHECK(r.shape[2] == doctest::Approx(0.44721359549995793).epsilon(1e-15));
    CHECK(r.shape[3] == doctest::Approx(1.3416407864998738).epsilon(1e-15));
}

TEST_CASE("constant grids degenerate to gain zero with a zero shape") {
    const ShapeRecord r = normalize_grid(make_grid({7.0, 7.0, 7.0}));
    CHECK(r.gain == 0.0);
    CHECK(r.bias == 7.0);
    for (double s : r.shape) CHECK(s == 0.0);
    // variance just under the floor behaves the same
    const ShapeRecord tiny = normalize_grid(make_grid({1.0, 1.0 + 1e-12, 1.0}));
    CHECK(tiny.gain == 0.0);
}

TEST_CASE("extracted shapes have zero mean and unit population std") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> c(3 + rng() % 30);
        for (double& x : c) x = u(rng);
        const ShapeRecord r = normalize_grid(make_grid(c));
        if (r.gain == 0.0) continue;
        double mean = 0.0, var = 0.0;
        for (double s : r.shape) mean += s;
        mean /= static_cast<double>(r.shape.size());
        for (double s : r.shape) var += (s - mean) * (s - mean);
        var /= static_cast<double>(r.shape.size());
        CHECK(std::fabs(mean) <= 1e-12);
        CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-12));
        // gain * shape + bias reproduces the grid
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(r.gain * r.shape[i] + r.bias == doctest::Approx(c[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("k-means separates two obvious blobs") {
    std::vector<ShapeRecord> pts;
    pts.push_back(raw_shape({0.0, 0.0}));
    pts.push_back(raw_shape({0.2, 0.0}));
    pts.push_back(raw_shape({10.0, 10.0}));
    pts.push_back(raw_shape({10.2, 10.0}));
    KMeansConfig cfg;
    cfg.seed = 1;
    const Codebook cb = kmeans_codebook(pts, 2, cfg);
    REQUIRE(cb.k == 2);
    // order of the two centroids depends on seeding; sort by first coordinate
    std::vector<std::vector<double>> rows{{cb.row(0)[0], cb.row(0)[1]},
                                          {cb.row(1)[0], cb.row(1)[1]}};
    std::sort(rows.begin(), rows.end());
    CHECK(rows[0][0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rows[0][1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(rows[1][0] == doctest::Approx(10.1).epsilon(1e-12));
    CHECK(rows[1][1] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(cb.training_meta.inertia == doctest::Approx(0.04).epsilon(1e-9));
    CHECK(!cb.training_meta.padded);
    CHECK(!cb.training_meta.mini_batch);
}

TEST_CASE("assignments are nearest rows with lowest-index ties") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<ShapeRecord> pts(300);
    for (auto& p : pts) {
        p.shape.resize(6);
        for (double& x : p.shape) x = u(rng);
    }
    KMeansConfig cfg;
    cfg.seed = 2;
    const Codebook cb = kmeans_codebook(pts, 12, cfg);
    const std::vector<std::uint32_t> idx = assign_indices(pts, cb);
    REQUIRE(idx.size() == pts.size());
    double inertia = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int r = 0; r < cb.k; ++r) {
            const double d = dist2(pts[i].shape, cb.row(r));
            if (d < best_d) {  // strict: first minimum wins
                best_d = d;
                best = r;
            }
        }
        CHECK(idx[i] == static_cast<std::uint32_t>(best));
        inertia += best_d;
    }
    CHECK(cb.training_meta.inertia == doctest::Approx(inertia).epsilon(1e-9));
}

TEST_CASE("more Lloyd iterations never increase inertia") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<ShapeRecord> pts(160);
    for (auto& p : pts) {
        p.shape.resize(4);
        for (double& x : p.shape) x = u(rng);
    }
    double last = std::numeric_limits<double>::infinity();
    for (int iters : {1, 2, 3, 5, 10, 40}) {
        KMeansConfig cfg;
        cfg.max_iters = iters;
        cfg.seed = 3;
        const Codebook cb = kmeans_codebook(pts, 8, cfg);
        CHECK(cb.training_meta.inertia <= last * (1 + 1e-12));
        last = cb.training_meta.inertia;
    }
}

TEST_CASE("identical seeds give identical codebooks, different seeds may differ") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<ShapeRecord> pts(100);
    for (auto& p : pts) {
        p.shape.resize(5);
        for (double& x : p.shape) x = u(rng);
    }
    KMeansConfig cfg;
    cfg.seed = 4;
    const Codebook a = kmeans_codebook(pts, 6, cfg);
    const Codebook b = kmeans_codebook(pts, 6, cfg);
    CHECK(a.entries == b.entries);
    CHECK(a.training_meta.inertia == b.training_meta.inertia);
    CHECK(a.training_meta.seed == 4);
}

TEST_CASE("K above the number of distinct points pads and flags the codebook") {
    std::vector<ShapeRecord> pts;
    for (int n = 0; n < 12; ++n) {
        pts.push_back(raw_shape({static_cast<double>(n % 3), 0.5}));  // 3 distinct
    }
    KMeansConfig cfg;
    cfg.seed = 5;
    const Codebook cb = kmeans_codebook(pts, 8, cfg);
    CHECK(cb.k == 8);
    CHECK(cb.training_meta.padded);
    // every point is represented exactly despite the padding
    const std::vector<std::uint32_t> idx = assign_indices(pts, cb);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(dist2(pts[i].shape, cb.row(static_cast<int>(idx[i]))) == 0.0);
    }
}

TEST_CASE("large inputs fall back to mini-batch refinement deterministically") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<ShapeRecord> pts(500);
    for (auto& p : pts) {
        p.shape.resize(3);
        for (double& x : p.shape) x = u(rng);
    }
    KMeansConfig cfg;
    cfg.batch_size = 64;
    cfg.seed = 6;
    const Codebook a = kmeans_codebook(pts, 10, cfg);
    CHECK(a.training_meta.mini_batch);
    const Codebook b = kmeans_codebook(pts, 10, cfg);
    CHECK(a.entries == b.entries);
    // the full-batch path stays off when the dataset fits the batch budget
    cfg.batch_size = 512;
    const Codebook c = kmeans_codebook(pts, 10, cfg);
    CHECK(!c.training_meta.mini_batch);
}

namespace {

KanLayer layer_from_bases(int in, int out, const std::vector<std::vector<double>>& bases,
                          std::uint64_t seed) {
    const int G = static_cast<int>(bases.front().size());
    KanLayer layer(in, out, G, -1.0, 1.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> gain(0.5, 2.0);
    std::uniform_real_distribution<double> bias(-1.0, 1.0);
    for (std::int64_t e = 0; e < layer.edge_count(); ++e) {
        const std::vector<double>& base = bases[rng() % bases.size()];
        const double g = gain(rng), b = bias(rng);
        std::span<double> dst = layer.grid(e);
        for (int i = 0; i < G; ++i) dst[i] = g * base[i] + b;
    }
    return layer;
}

}  // namespace

TEST_CASE("layers built from K shared shapes are recovered almost exactly") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> bases(4, std::vector<double>(8));
    for (auto& base : bases) {
        for (double& x : base) x = u(rng);
    }
    const KanLayer layer = layer_from_bases(8, 8, bases, 12);
    VqConfig cfg;
    cfg.k = 4;
    cfg.seed = 7;
    cfg.restarts = 3;
    const CompressedLayer cl = compress_layer(layer, cfg);
    REQUIRE(cl.indices.size() == 64);
    REQUIRE(cl.gains.size() == 64);
    REQUIRE(cl.biases.size() == 64);
    CHECK(!cl.int8.has_value());

    const KanLayer back = reconstruct_layer(cl);
    for (std::int64_t e = 0; e < layer.edge_count(); ++e) {
        for (int i = 0; i < layer.grid_size(); ++i) {
            CHECK(back.grid(e)[i] == doctest::Approx(layer.grid(e)[i]).epsilon(1e-9).scale(1.0));
        }
    }

    KanNetwork net({layer});
    const CompressedNetwork cn = compress_network(net, cfg);
    const R2Report rep = r2_report(net, cn);
    CHECK(rep.aggregate >= 1.0 - 1e-9);
    CHECK(rep.per_layer[0] >= 1.0 - 1e-9);
}

TEST_CASE("near-constant grids compress to a pure bias") {
    KanLayer layer(1, 2, 5, -1.0, 1.0);
    for (int i = 0; i < 5; ++i) {
        layer.grid(0, 0)[i] = 3.0;                 // exactly constant
        layer.grid(0, 1)[i] = 1.0 + 1e-10 * i;     // below the variance floor
    }
    VqConfig cfg;
    cfg.k = 2;
    cfg.seed = 1;
    const CompressedLayer cl = compress_layer(layer, cfg);
    CHECK(cl.gains[0] == 0.0);
    CHECK(cl.biases[0] == 3.0);
    const KanLayer back = reconstruct_layer(cl);
    for (int i = 0; i < 5; ++i) CHECK(back.grid(0, 0)[i] == 3.0);
}

TEST_CASE("r_squared hand cases including the degenerate denominator") {
    const std::vector<SplineGrid> orig{make_grid({0.0, 2.0}), make_grid({2.0, 4.0})};
    const std::vector<SplineGrid> exact = orig;
    CHECK(r_squared(orig, exact) == 1.0);
    // predicting the mean grid for everything scores zero
    const std::vector<SplineGrid> mean2{make_grid({1.0, 3.0}), make_grid({1.0, 3.0})};
    CHECK(r_squared(orig, mean2) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    // swapping the reconstructions is worse than the mean
    const std::vector<SplineGrid> swapped{make_grid({2.0, 4.0}), make_grid({0.0, 2.0})};
    CHECK(r_squared(orig, swapped) == doctest::Approx(-3.0).epsilon(1e-15));
    // identical originals: zero denominator
    const std::vector<SplineGrid> same{make_grid({5.0, 5.0}), make_grid({5.0, 5.0})};
    CHECK(r_squared(same, same) == 1.0);
    const std::vector<SplineGrid> off{make_grid({5.0, 5.0}), make_grid({5.0, 6.0})};
    CHECK(r_squared(same, off) == -std::numeric_limits<double>::infinity());
    CHECK(r_squared({}, {}) == 1.0);
    CHECK_THROWS_AS(r_squared(orig, std::vector<SplineGrid>{make_grid({0.0, 2.0})}),
                    ShapeError);
}

TEST_CASE("r_squared ignores edge ordering") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<SplineGrid> orig, recon;
    for (int e = 0; e < 40; ++e) {
        std::vector<double> c(6), r(6);
        for (int i = 0; i < 6; ++i) {
            c[i] = u(rng);
            r[i] = c[i] + 0.01 * u(rng);
        }
        orig.push_back(make_grid(c));
        recon.push_back(make_grid(r));
    }
    const double before = r_squared(orig, recon);
    std::vector<int> perm(orig.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SplineGrid> orig_p, recon_p;
    for (int p : perm) {
        orig_p.push_back(orig[p]);
        recon_p.push_back(recon[p]);
    }
    CHECK(r_squared(orig_p, recon_p) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("compression quality is invariant to uniform rescaling") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    KanLayer layer(4, 4, 6, -1.0, 1.0);
    for (double& c : layer.coefficients()) c = u(rng);
    VqConfig cfg;
    cfg.k = 5;
    cfg.seed = 9;
    KanNetwork net({layer});
    const CompressedNetwork base = compress_network(net, cfg);
    const double r2_base = r2_report(net, base).aggregate;

    for (double s : {2.0, -1.0}) {  // powers of two and sign flips commute with rounding
        KanLayer scaled = layer;
        for (double& c : scaled.coefficients()) c *= s;
        KanNetwork snet({scaled});
        const CompressedNetwork sc = compress_network(snet, cfg);
        CHECK(r2_report(snet, sc).aggregate == r2_base);
        const CompressedLayer& cl = sc.layers[0];
        const CompressedLayer& bl = base.layers[0];
        CHECK(cl.indices == bl.indices);
        for (std::size_t e = 0; e < cl.gains.size(); ++e) {
            CHECK(cl.gains[e] == std::fabs(s) * bl.gains[e]);
            CHECK(cl.biases[e] == s * bl.biases[e]);
        }
    }
}

TEST_CASE("restarts keep the best-inertia run") {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    KanLayer layer(6, 6, 5, -1.0, 1.0);
    for (double& c : layer.coefficients()) c = u(rng);
    VqConfig one;
    one.k = 6;
    one.seed = 40;
    one.restarts = 1;
    VqConfig many = one;
    many.restarts = 8;
    const CompressedLayer a = compress_layer(layer, one);
    const CompressedLayer b = compress_layer(layer, many);
    CHECK(b.codebook.training_meta.inertia <=
          a.codebook.training_meta.inertia * (1 + 1e-12));
    // the winning run's seed is recorded
    CHECK(b.codebook.training_meta.seed >= 40);
    CHECK(b.codebook.training_meta.seed < 48);
}

TEST_CASE("int8 pass fills tables and rewrites masters to decoded values") {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    KanLayer layer(5, 4, 6, -1.0, 1.0);
    for (double& c : layer.coefficients()) c = u(rng);
    VqConfig cfg;
    cfg.k = 4;
    cfg.seed = 17;
    const CompressedLayer plain = compress_layer(layer, cfg);
    cfg.int8 = true;
    const CompressedLayer quant = compress_layer(layer, cfg);
    REQUIRE(quant.int8.has_value());
    CHECK(quant.indices == plain.indices);  // quantization never reassigns

    const Int8Tables& t = *quant.int8;
    REQUIRE(t.codebook_codes.size() == quant.codebook.entries.size());
    REQUIRE(t.gain_codes.size() == quant.gains.size());
    for (std::size_t n = 0; n < quant.codebook.entries.size(); ++n) {
        CHECK(quant.codebook.entries[n] ==
              dequantize_linear_code(t.codebook_codes[n], t.codebook_params));
    }
    for (std::size_t e = 0; e < quant.gains.size(); ++e) {
        CHECK(quant.gains[e] == dequantize_gain_code(t.gain_codes[e], t.gain_params));
        CHECK(quant.biases[e] == dequantize_linear_code(t.bias_codes[e], t.bias_params));
    }
    // decoded masters stay near the float-path masters
    for (std::size_t e = 0; e < quant.gains.size(); ++e) {
        CHECK(quant.gains[e] == doctest::Approx(plain.gains[e]).epsilon(0.02).scale(1.0));
    }
    const CompressedNetwork cn{std::vector<CompressedLayer>{plain}};
    const CompressedNetwork qn = quantize_compressed_network(cn);
    CHECK(qn.layers[0].int8.has_value());
}

TEST_CASE("compress_layer validates the codebook size") {
    KanLayer layer(2, 2, 4, -1.0, 1.0);
    VqConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(compress_layer(layer, cfg), ShapeError);
    cfg.k = 5;
    cfg.restarts = 0;
    CHECK_THROWS_AS(compress_layer(layer, cfg), ShapeError);
}
