#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <vector>

#include "holoquant/gsb.hpp"
#include "holoquant/lutham.hpp"
#include "holoquant/trainer.hpp"

using namespace holoquant;

TEST_CASE("index width table") {
    CHECK(index_bits(0) == 0);
    CHECK(index_bits(1) == 0);
    CHECK(index_bits(2) == 1);
    CHECK(index_bits(3) == 2);
    CHECK(index_bits(4) == 2);
    CHECK(index_bits(5) == 3);
    CHECK(index_bits(16) == 4);
    CHECK(index_bits(17) == 5);
    CHECK(index_bits(255) == 8);
    CHECK(index_bits(256) == 8);
    CHECK(index_bits(257) == 9);
    CHECK(index_bits(65536) == 16);
    CHECK(index_bits(65537) == 17);
}

TEST_CASE("bit packing against hand-packed bytes") {
    const std::vector<std::uint32_t> nibbles{1, 2, 3};
    CHECK(pack_indices(nibbles, 4) == std::vector<std::uint8_t>{0x21, 0x03});
    const std::vector<std::uint32_t> ones{1, 1, 1};
    CHECK(pack_indices(ones, 1) == std::vector<std::uint8_t>{0x07});
    const std::vector<std::uint32_t> ten{1023, 0, 513};
    CHECK(pack_indices(ten, 10) == std::vector<std::uint8_t>{0xff, 0x03, 0x10, 0x20});
    CHECK(unpack_indices(pack_indices(ten, 10), 3, 10) == ten);
    CHECK(pack_indices({}, 4).empty());
}

TEST_CASE("bit packing round-trips every width") {
    std::mt19937_64 rng(20);
    for (int bits = 1; bits <= 32; ++bits) {
        const std::uint64_t cap = bits == 32 ? 0xFFFFFFFFull : ((1ull << bits) - 1);
        std::vector<std::uint32_t> v(1 + rng() % 100);
        for (auto& x : v) x = static_cast<std::uint32_t>(rng() % (cap + 1));
        CHECK(unpack_indices(pack_indices(v, bits), v.size(), bits) == v);
    }
    CHECK_THROWS_AS(pack_indices(std::vector<std::uint32_t>{4}, 2), ContractError);
    CHECK_THROWS_AS(pack_indices(std::vector<std::uint32_t>{0}, 33), ContractError);
}

TEST_CASE("memory plan for a small layer, all three storage modes") {
    LayerHeader h;
    h.in_dim = 2;
    h.out_dim = 3;
    h.grid_size = 10;
    h.k = 16;
    ModelHeader mh;
    mh.layers = {h};

    const MemoryPlan fp = plan_memory(mh);
    CHECK(fp.layers[0].codebook_bytes == 640);
    CHECK(fp.layers[0].index_bytes == 3);
    CHECK(fp.layers[0].unpacked_index_bytes == 12);
    CHECK(fp.layers[0].gain_bytes == 24);
    CHECK(fp.layers[0].bias_bytes == 24);
    CHECK(fp.scratch_bytes == 2 * 3 * 8);
    CHECK(fp.payload_total == 640 + 3 + 24 + 24);
    CHECK(fp.working_set_total == 640 + 12 + 24 + 24 + 48);

    mh.layers[0].flags = kFlagInt8;
    const MemoryPlan i8 = plan_memory(mh);
    CHECK(i8.layers[0].codebook_bytes == 160);
    CHECK(i8.layers[0].index_bytes == 3);
    CHECK(i8.layers[0].gain_bytes == 6);
    CHECK(i8.layers[0].bias_bytes == 6);

    mh.layers[0].flags = 0;
    mh.layers[0].k = 0;  // dense
    const MemoryPlan dense = plan_memory(mh);
    CHECK(dense.layers[0].codebook_bytes == 6 * 10 * 4);
    CHECK(dense.layers[0].index_bytes == 0);
    CHECK(dense.layers[0].unpacked_index_bytes == 0);
    CHECK(dense.layers[0].gain_bytes == 0);
    CHECK(dense.layers[0].bias_bytes == 0);

    mh.layers[0].k = 1;  // single-row codebook needs no index storage
    const MemoryPlan k1 = plan_memory(mh);
    CHECK(k1.layers[0].index_bytes == 0);
    CHECK(k1.layers[0].unpacked_index_bytes == 0);
}

TEST_CASE("plan arithmetic overflows raise instead of wrapping") {
    LayerHeader h;
    h.in_dim = 0xFFFFFFFF;
    h.out_dim = 0xFFFFFFFF;
    h.grid_size = 0xFFFFFFFF;
    h.k = 0;
    ModelHeader mh;
    mh.layers = {h};
    CHECK_THROWS_AS(plan_memory(mh), PlanError);
}

namespace {

KanNetwork random_net(std::uint64_t seed, std::vector<int> dims, int G) {
    return init_network(dims, G, 0.4, seed);
}

CompressedNetwork random_compressed(std::uint64_t seed, int k, bool int8, int G = 6) {
    const KanNetwork net = random_net(seed, {3, 5, 2}, G);
    VqConfig cfg;
    cfg.k = k;
    cfg.seed = seed;
    cfg.int8 = int8;
    return compress_network(net, cfg);
}

// handcrafted layer so K can exceed the edge count
CompressedLayer crafted_layer(int in, int out, int G, int k, std::uint64_t seed) {
    CompressedLayer cl;
    cl.in_dim = in;
    cl.out_dim = out;
    cl.grid_size = G;
    cl.codebook.k = k;
    cl.codebook.grid_size = G;
    cl.codebook.entries.resize(static_cast<std::size_t>(k) * G);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& x : cl.codebook.entries) x = u(rng);
    const std::int64_t e = cl.edge_count();
    cl.indices.resize(e);
    cl.gains.resize(e);
    cl.biases.resize(e);
    for (std::int64_t n = 0; n < e; ++n) {
        cl.indices[n] = static_cast<std::uint32_t>(rng() % k);
        cl.gains[n] = (n % 5 == 0) ? 0.0 : std::fabs(u(rng)) + 0.01;
        cl.biases[n] = u(rng);
    }
    return cl;
}

}  // namespace

TEST_CASE("serialized prelude bytes are frozen") {
    const Model model = build_dense_model(random_net(1, {1, 2}, 3));
    const std::vector<std::uint8_t> bytes = serialize(model);
    REQUIRE(bytes.size() >= 16);
    CHECK(bytes[0] == 'S');
    CHECK(bytes[1] == 'K');
    CHECK(bytes[2] == 'A');
    CHECK(bytes[3] == 'N');
    CHECK(bytes[4] == 1);  // version 1, little-endian u32
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 0);
    CHECK(bytes[7] == 0);
    CHECK(bytes[8] == 0x04);  // endianness tag 0x01020304
    CHECK(bytes[9] == 0x03);
    CHECK(bytes[10] == 0x02);
    CHECK(bytes[11] == 0x01);
    CHECK(bytes[12] == 1);  // one layer
}

TEST_CASE("serialize/deserialize identity across storage modes") {
    std::vector<Model> models;
    models.push_back(build_dense_model(random_net(2, {2, 4, 1}, 7)));
    models.push_back(build_model(random_compressed(3, 2, false)));
    models.push_back(build_model(random_compressed(4, 5, true)));
    models.push_back(build_model(CompressedNetwork{{crafted_layer(2, 3, 4, 65536, 5)}}));
    models.push_back(build_model(CompressedNetwork{{crafted_layer(2, 2, 3, 1, 6)}}));

    for (const Model& m : models) {
        const std::vector<std::uint8_t> bytes = serialize(m);
        const Model back = deserialize(bytes);
        CHECK(serialize(back) == bytes);
        REQUIRE(back.layers.size() == m.layers.size());
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            CHECK(back.layers[l].table_f32 == m.layers[l].table_f32);
            CHECK(back.layers[l].table_i8 == m.layers[l].table_i8);
            CHECK(back.layers[l].idx16 == m.layers[l].idx16);
            CHECK(back.layers[l].idx32 == m.layers[l].idx32);
            CHECK(back.layers[l].gains_f32 == m.layers[l].gains_f32);
            CHECK(back.layers[l].gain_codes == m.layers[l].gain_codes);
            CHECK(back.layers[l].header.flags == m.layers[l].header.flags);
        }
    }
}

TEST_CASE("file size follows the documented section layout") {
    const Model m = build_model(random_compressed(8, 6, false));
    const std::vector<std::uint8_t> bytes = serialize(m);
    const MemoryPlan plan = plan_memory(m.header());
    std::uint64_t cursor = 16 + 72ull * m.layers.size();
    auto align64 = [](std::uint64_t v) { return (v + 63) / 64 * 64; };
    for (const LayerPlan& lp : plan.layers) {
        cursor = align64(cursor) + lp.codebook_bytes;
        if (lp.gain_bytes > 0) {  // compressed layers add index/gain/bias sections
            cursor = align64(cursor) + lp.index_bytes;
            cursor = align64(cursor) + lp.gain_bytes;
            cursor = align64(cursor) + lp.bias_bytes;
        }
    }
    CHECK(bytes.size() == cursor);
    // payload total counts section bytes without padding
    std::uint64_t payload = 0;
    for (const LayerPlan& lp : plan.layers) payload += lp.payload_bytes();
    CHECK(plan.payload_total == payload);
}

TEST_CASE("corrupted files report the fault and byte offset") {
    const Model m = build_model(random_compressed(9, 4, true));
    const std::vector<std::uint8_t> good = serialize(m);

    auto expect = [&](std::vector<std::uint8_t> bytes, FormatFault fault,
                      std::uint64_t offset, const char* fragment) {
        try {
            deserialize(bytes);
            FAIL_CHECK("expected FormatError for ", fragment);
        } catch (const FormatError& e) {
            CHECK(e.fault == fault);
            CHECK(e.offset == offset);
            CHECK(std::string(e.what()).find(fragment) != std::string::npos);
        }
    };

    std::vector<std::uint8_t> bad = good;
    bad[0] = 'X';
    expect(bad, FormatFault::BadMagic, 0, "magic");

    bad = good;
    bad[4] = 9;
    expect(bad, FormatFault::BadVersion, 4, "version");

    bad = good;
    std::swap(bad[8], bad[11]);
    expect(bad, FormatFault::BadEndianness, 8, "endian");

    bad = good;
    bad[12] = 0;
    expect(bad, FormatFault::BadHeader, 12, "layer count");

    bad = good;
    bad[16 + 8] = 1;  // layer 0 grid_size = 1
    expect(bad, FormatFault::BadHeader, 24, "grid");

    bad = good;
    bad[16 + 32] = 0xFE;  // unknown flag bits
    expect(bad, FormatFault::BadHeader, 48, "flags");

    bad = good;
    bad[16 + 36] = 1;  // reserved must stay zero
    expect(bad, FormatFault::BadHeader, 52, "reserved");

    bad = good;
    const double nan = std::nan("");
    std::memcpy(bad.data() + 16 + 40, &nan, 8);  // codebook scale
    expect(bad, FormatFault::BadQuantParam, 56, "scale");

    bad = good;
    const double zero = 0.0;
    std::memcpy(bad.data() + 16 + 56, &zero, 8);  // gain log step
    expect(bad, FormatFault::BadQuantParam, 72, "log");

    bad = good;
    std::memcpy(bad.data() + 16 + 16, &nan, 8);  // domain_lo
    expect(bad, FormatFault::BadHeader, 32, "domain");

    // chop inside the first section
    bad.assign(good.begin(), good.begin() + 200);
    try {
        deserialize(bad);
        FAIL_CHECK("expected truncation error");
    } catch (const FormatError& e) {
        CHECK(e.fault == FormatFault::Truncated);
        CHECK(std::string(e.what()).find("section") != std::string::npos);
        CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    }

    bad = good;
    bad.resize(2);  // shorter than the magic itself
    expect(bad, FormatFault::Truncated, 0, "magic");
}

TEST_CASE("an out-of-range stored index names the edge") {
    CompressedLayer cl = crafted_layer(1, 2, 2, 3, 10);
    cl.indices = {0, 1};
    const Model m = build_model(CompressedNetwork{{cl}});
    std::vector<std::uint8_t> bytes = serialize(m);
    // sections: codebook @128 (24 B), index @192 (1 B)
    REQUIRE(bytes[192] == 0x04);  // {0, 1} packed at 2 bits
    bytes[192] = 0x0F;            // edge 0 becomes index 3 == K
    try {
        deserialize(bytes);
        FAIL_CHECK("expected index range error");
    } catch (const FormatError& e) {
        CHECK(e.fault == FormatFault::IndexOutOfRange);
        CHECK(e.offset == 192);
        CHECK(std::string(e.what()).find("edge 0") != std::string::npos);
        CHECK(std::string(e.what()).find("K=3") != std::string::npos);
    }
}

TEST_CASE("build_model rejects inconsistent compressed layers") {
    CompressedLayer cl = crafted_layer(2, 2, 3, 4, 11);
    cl.indices[0] = 4;  // == K
    CHECK_THROWS_AS(build_model(CompressedNetwork{{cl}}), ContractError);
    cl = crafted_layer(2, 2, 3, 4, 11);
    cl.gains.pop_back();
    CHECK_THROWS_AS(build_model(CompressedNetwork{{cl}}), ContractError);
    cl = crafted_layer(2, 2, 3, 4, 11);
    cl.gains[0] = -0.5;
    CHECK_THROWS_AS(build_model(CompressedNetwork{{cl}}), ContractError);
}

TEST_CASE("dense models round-trip through float32 storage") {
    const KanNetwork net = random_net(12, {2, 3, 1}, 5);
    const Model m = build_dense_model(net);
    const KanNetwork back = to_dense_network(m);
    REQUIRE(back.layer_count() == net.layer_count());
    for (int l = 0; l < net.layer_count(); ++l) {
        const auto& orig = net.layers()[l].coefficients();
        const auto& got = back.layers()[l].coefficients();
        REQUIRE(got.size() == orig.size());
        for (std::size_t n = 0; n < orig.size(); ++n) {
            CHECK(got[n] == static_cast<double>(static_cast<float>(orig[n])));
        }
    }
    CHECK_THROWS_AS(decompress(m), ContractError);  // dense layers have no VQ view
}

TEST_CASE("decompress preserves codes and parameters exactly") {
    const CompressedNetwork cn = random_compressed(13, 4, true);
    const Model m = build_model(cn);
    const CompressedNetwork back = decompress(m);
    REQUIRE(back.layers.size() == cn.layers.size());
    for (std::size_t l = 0; l < cn.layers.size(); ++l) {
        CHECK(back.layers[l].indices == cn.layers[l].indices);
        REQUIRE(back.layers[l].int8.has_value());
        CHECK(back.layers[l].int8->codebook_codes == cn.layers[l].int8->codebook_codes);
        CHECK(back.layers[l].int8->gain_codes == cn.layers[l].int8->gain_codes);
        CHECK(back.layers[l].int8->bias_codes == cn.layers[l].int8->bias_codes);
        CHECK(back.layers[l].int8->gain_params.log_min ==
              cn.layers[l].int8->gain_params.log_min);
        CHECK(back.layers[l].gains == cn.layers[l].gains);
        CHECK(back.layers[l].biases == cn.layers[l].biases);
    }
}

TEST_CASE("pli_lookup agrees with dense evaluation of the reconstruction") {
    const CompressedNetwork cn = random_compressed(14, 6, false);
    const CompressedLayer& cl = cn.layers[0];
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-1.3, 1.3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t e = static_cast<std::int64_t>(rng() % cl.indices.size());
        const double x = u(rng);
        const SplineGrid grid = reconstruct_grid(cl, static_cast<int>(e / cl.out_dim),
                                                 static_cast<int>(e % cl.out_dim));
        const double direct = pli_lookup(cl.codebook, static_cast<int>(cl.indices[e]),
                                         cl.gains[e], cl.biases[e], x, cl.domain_lo,
                                         cl.domain_hi);
        CHECK(direct == doctest::Approx(eval_spline(grid, x)).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("runtime forward is bitwise equal to the reconstructed dense oracle") {
    for (bool int8 : {false, true}) {
        const CompressedNetwork cn = random_compressed(16, 5, int8);
        const Model m = build_model(cn);
        const KanNetwork oracle = to_dense_network(m);
        Workspace ws = make_workspace(m);
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        const int batch = 32;
        std::vector<double> inputs(batch * m.input_dim());
        for (double& x : inputs) x = u(rng);
        std::vector<double> outputs(batch * m.output_dim());
        compressed_forward(m, inputs, batch, outputs, ws);
        for (int r = 0; r < batch; ++r) {
            const std::vector<double> want = network_forward(
                oracle, std::span<const double>(inputs.data() + r * m.input_dim(),
                                                m.input_dim()));
            for (int c = 0; c < m.output_dim(); ++c) {
                CHECK(outputs[r * m.output_dim() + c] == want[c]);
            }
        }
    }
}

TEST_CASE("interp_ops counts one op per edge per sample, independent of G") {
    for (int G : {5, 64}) {
        const KanNetwork net = random_net(18, {2, 4, 1}, G);
        VqConfig cfg;
        cfg.k = 3;
        cfg.seed = 18;
        const Model m = build_model(compress_network(net, cfg));
        Workspace ws = make_workspace(m);
        const int batch = 7;
        std::vector<double> in(batch * 2, 0.25), out(batch);
        compressed_forward(m, in, batch, out, ws);
        CHECK(ws.interp_ops == static_cast<std::uint64_t>(batch) * (2 * 4 + 4 * 1));
        compressed_forward(m, in, batch, out, ws);  // counter accumulates
        CHECK(ws.interp_ops == 2ull * batch * 12);
    }
}

TEST_CASE("forward validates spans and workspace capacity") {
    const Model big = build_dense_model(random_net(19, {2, 9, 1}, 4));
    const Model small = build_dense_model(random_net(19, {2, 3, 1}, 4));
    Workspace ws = make_workspace(small);
    CHECK(ws.width() == 3);
    std::vector<double> in(2), out(1);
    CHECK_THROWS_AS(compressed_forward(big, in, 1, out, ws), ContractError);
    Workspace ok = make_workspace(big);
    CHECK(ok.width() == 9);
    std::vector<double> short_in(1);
    CHECK_THROWS_AS(compressed_forward(big, short_in, 1, out, ok), ShapeError);
    std::vector<double> short_out;
    CHECK_THROWS_AS(compressed_forward(big, in, 1, short_out, ok), ShapeError);
}

TEST_CASE("model files survive a disk round trip") {
    namespace fs = std::filesystem;
    const Model m = build_model(random_compressed(21, 4, true));
    const fs::path path = fs::temp_directory_path() / "holoquant_test_model.skan";
    save_model(m, path.string());
    const Model back = load_model(path.string());
    CHECK(serialize(back) == serialize(m));
    fs::remove(path);
    CHECK_THROWS_AS(load_model((fs::temp_directory_path() / "missing.skan").string()),
                    ValueError);
}

TEST_CASE("benchmark rows and csv schema") {
    std::vector<Model> models;
    models.push_back(build_dense_model(random_net(22, {1, 4, 1}, 5)));
    models.push_back(build_dense_model(random_net(22, {1, 4, 1}, 9)));
    BenchConfig bc;
    bc.batch = 8;
    bc.repeats = 5;
    bc.warmup = 1;
    const std::vector<BenchRow> rows = bench_iso_latency(models, bc);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].grid_size == 5);
    CHECK(rows[1].grid_size == 9);
    for (const BenchRow& r : rows) {
        CHECK(r.median_us > 0.0);
        CHECK(r.p25_us <= r.median_us);
        CHECK(r.median_us <= r.p75_us);
    }
    const std::string csv = bench_csv(rows);
    CHECK(csv.rfind("G,median_us,p25_us,p75_us\n", 0) == 0);

    // mismatched widths cannot be iso-latency compared
    models.push_back(build_dense_model(random_net(22, {1, 5, 1}, 9)));
    CHECK_THROWS_AS(bench_iso_latency(models, bc), ShapeError);
}

TEST_CASE("compression report components and ratios") {
    const KanNetwork net = random_net(23, {4, 8, 1}, 10);
    VqConfig cfg;
    cfg.k = 16;
    cfg.seed = 23;
    cfg.int8 = true;
    const Model m = build_model(compress_network(net, cfg));
    const std::vector<ReportRow> rows = compression_report(net, m);
    REQUIRE(rows.size() == 9);
    CHECK(rows[0].component == "dense_runtime");
    CHECK(rows[0].bytes == dense_runtime_bytes(net));
    CHECK(rows[0].ratio == 1.0);
    double payload = 0.0;
    bool saw_codebooks = false;
    for (const ReportRow& r : rows) {
        if (r.component == "codebooks") {
            saw_codebooks = true;
            CHECK(r.bytes == 2u * 16u * 10u);  // two layers, int8 entries
        }
        if (r.component == "file_payload_total") payload = static_cast<double>(r.bytes);
        if (r.bytes > 0) {
            CHECK(r.ratio ==
                  doctest::Approx(static_cast<double>(dense_runtime_bytes(net)) / r.bytes)
                      .epsilon(1e-12));
        }
    }
    CHECK(saw_codebooks);
    CHECK(payload == plan_memory(m.header()).payload_total);
    const std::string csv = compression_csv(rows);
    CHECK(csv.rfind("component,bytes,ratio\n", 0) == 0);
}

TEST_CASE("projected storage reproduces the headline large-scale figures") {
    const StorageEstimate est = projected_storage(3'200'000, 65536, 10, 1, true);
    CHECK(est.codebook_bytes == 655'360);
    CHECK(est.index_bytes == 6'400'000);    // 16 bits per edge
    CHECK(est.gain_bias_bytes == 6'400'000);  // 8 + 8 bits per edge
    CHECK(est.total_bytes == 13'455'360);
    // per-edge cost: 16-bit index + two int8 scalars = 32 bits
    const std::uint64_t per_edge_bits =
        (est.index_bytes + est.gain_bias_bytes) * 8 / 3'200'000;
    CHECK(per_edge_bits == 32);
}
