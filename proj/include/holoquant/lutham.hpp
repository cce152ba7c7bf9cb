#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "holoquant/gsb.hpp"
#include "holoquant/kan.hpp"

namespace holoquant {

// ---------------------------------------------------------------------------
// "SKAN" v1 container. Little-endian throughout. Layout:
//   0   char[4]  magic "SKAN"
//   4   u32      version (1)
//   8   u32      endianness tag 0x01020304
//   12  u32      layer count
//   16  72-byte layer headers, then payload sections in layer order, each
//       section padded so its file offset is a multiple of 64.
// Per layer the sections are: codebook (or dense coefficients when k == 0),
// bit-packed indices, gains, biases. Dense layers carry only coefficients.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kEndianTag = 0x01020304u;
inline constexpr std::size_t kSectionAlign = 64;
inline constexpr std::uint32_t kFlagInt8 = 1u;

struct LayerHeader {
    std::uint32_t in_dim = 0;
    std::uint32_t out_dim = 0;
    std::uint32_t grid_size = 0;
    std::uint32_t k = 0;  // 0 = dense float coefficients, no VQ tables
    double domain_lo = -1.0;
    double domain_hi = 1.0;
    std::uint32_t flags = 0;
    std::uint32_t reserved = 0;
    double codebook_scale = 0.0;
    double gain_log_min = 0.0;
    double gain_log_step = 1.0;
    double bias_scale = 0.0;

    bool int8() const { return (flags & kFlagInt8) != 0; }
    bool dense() const { return k == 0; }
    std::uint64_t edge_count() const {
        return static_cast<std::uint64_t>(in_dim) * out_dim;
    }
};

struct ModelHeader {
    std::uint32_t version = kFormatVersion;
    std::vector<LayerHeader> layers;
};

// Bits needed per stored index; 0 when k fits a single row.
int index_bits(std::uint32_t k);

struct LayerPlan {
    std::uint64_t codebook_bytes = 0;        // K*G*(1|4); dense layers: E*G*4
    std::uint64_t index_bytes = 0;           // bit-packed, as stored on disk
    std::uint64_t unpacked_index_bytes = 0;  // native-width runtime table
    std::uint64_t gain_bytes = 0;            // E*(1|4); dense layers: 0
    std::uint64_t bias_bytes = 0;

    std::uint64_t payload_bytes() const {
        return codebook_bytes + index_bytes + gain_bytes + bias_bytes;
    }
    std::uint64_t working_set_bytes() const {
        return codebook_bytes + unpacked_index_bytes + gain_bytes + bias_bytes;
    }
};

// Byte-exact sizes derived from the header alone, before any payload is read.
struct MemoryPlan {
    std::vector<LayerPlan> layers;
    std::uint64_t scratch_bytes = 0;       // double-buffered activations
    std::uint64_t payload_total = 0;       // sum of on-disk section sizes
    std::uint64_t working_set_total = 0;   // resident tables + scratch
};

MemoryPlan plan_memory(const ModelHeader& header);

// Indices occupy bits [i*bits, (i+1)*bits), LSB-first. bits in [0, 32].
std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, int bits);
std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes,
                                          std::uint64_t count, int bits);

// Resident form of one layer. Exactly one of table_f32/table_i8 is populated;
// indices live in idx16 when K fits 16 bits, else idx32.
struct RuntimeLayer {
    LayerHeader header;
    std::vector<float> table_f32;          // codebook or dense coefficients
    std::vector<std::int8_t> table_i8;     // int8 codebook codes
    std::vector<std::uint16_t> idx16;
    std::vector<std::uint32_t> idx32;
    std::vector<float> gains_f32;
    std::vector<float> biases_f32;
    std::vector<std::int8_t> gain_codes;
    std::vector<std::int8_t> bias_codes;

    std::uint32_t index(std::uint64_t e) const {
        if (!idx16.empty()) return idx16[e];
        if (!idx32.empty()) return idx32[e];
        return 0;
    }
    double gain(std::uint64_t e) const;
    double bias(std::uint64_t e) const;
};

struct Model {
    std::vector<RuntimeLayer> layers;

    ModelHeader header() const;
    int input_dim() const;
    int output_dim() const;
    int max_width() const;
};

Model build_dense_model(const KanNetwork& net);
Model build_model(const CompressedNetwork& cn);

// Inverse views: promote runtime tables back to double-precision structures.
// to_dense_network reconstructs every layer; decompress requires no dense
// layers and preserves codes/params exactly.
KanNetwork to_dense_network(const Model& model);
CompressedNetwork decompress(const Model& model);

std::vector<std::uint8_t> serialize(const Model& model);
Model deserialize(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// y = g * LinearInterp(C[k], x) + b on the codebook's double entries.
double pli_lookup(const Codebook& codebook, int k, double g, double b, double x,
                  double domain_lo, double domain_hi);
// Same kernel on runtime tables; the int8 variant dequantizes inline.
double pli_lookup_f32(std::span<const float> row, double domain_lo, double domain_hi,
                      double g, double b, double x);
double pli_lookup_i8(std::span<const std::int8_t> row, double scale, double domain_lo,
                     double domain_hi, double g, double b, double x);

// Preallocated activations for one forward stream. interp_ops counts edge
// interpolations, one per (edge, sample) — the iso-latency work proxy.
struct Workspace {
    std::vector<double> front;
    std::vector<double> back;
    std::uint64_t interp_ops = 0;

    int width() const { return static_cast<int>(front.size()); }
};

Workspace make_workspace(const Model& model);

// Batched forward; zero heap allocations once the workspace exists.
// inputs is batch*input_dim row-major, outputs batch*output_dim.
void compressed_forward(const Model& model, std::span<const double> inputs, int batch,
                        std::span<double> outputs, Workspace& ws);

struct BenchConfig {
    int batch = 64;
    int repeats = 101;
    int warmup = 10;
    std::uint64_t seed = 12345;
};

struct BenchRow {
    int grid_size = 0;
    double median_us = 0.0;
    double p25_us = 0.0;
    double p75_us = 0.0;
};

BenchRow bench_model(const Model& model, const BenchConfig& config);
// Models must be identical apart from grid size.
std::vector<BenchRow> bench_iso_latency(std::span<const Model> models, const BenchConfig& config);
std::string bench_csv(std::span<const BenchRow> rows);

struct ReportRow {
    std::string component;
    std::uint64_t bytes = 0;
    double ratio = 0.0;  // dense runtime bytes / component bytes; 0 when empty
};

std::vector<ReportRow> compression_report(const KanNetwork& dense, const Model& model);
std::string compression_csv(std::span<const ReportRow> rows);

// Header-only arithmetic for hypothetical sizes (large-scale projections).
struct StorageEstimate {
    std::uint64_t index_bytes = 0;
    std::uint64_t gain_bias_bytes = 0;
    std::uint64_t codebook_bytes = 0;
    std::uint64_t total_bytes = 0;
};

StorageEstimate projected_storage(std::uint64_t edges, std::uint64_t k, std::uint64_t grid_size,
                                  int codebooks, bool int8);

}  // namespace holoquant
