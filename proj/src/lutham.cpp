#include "holoquant/lutham.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "holoquant/quant.hpp"

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace holoquant {

namespace {

constexpr std::size_t kPreludeBytes = 16;
constexpr std::size_t kLayerHeaderBytes = 72;
constexpr std::uint32_t kMaxLayerCount = 1u << 20;

std::uint64_t mul_checked(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        throw PlanError("size arithmetic overflows 64 bits");
    }
    return a * b;
}

std::uint64_t add_checked(std::uint64_t a, std::uint64_t b) {
    if (b > std::numeric_limits<std::uint64_t>::max() - a) {
        throw PlanError("size arithmetic overflows 64 bits");
    }
    return a + b;
}

std::uint64_t align_up(std::uint64_t offset, std::uint64_t align) {
    return add_checked(offset, align - 1) / align * align;
}

}  // namespace

int index_bits(std::uint32_t k) {
    if (k <= 1) return 0;
    return std::bit_width(k - 1);
}

MemoryPlan plan_memory(const ModelHeader& header) {
    MemoryPlan plan;
    plan.layers.reserve(header.layers.size());
    std::uint64_t max_width = 0;
    for (const LayerHeader& h : header.layers) {
        if (h.in_dim == 0 || h.out_dim == 0 || h.grid_size < 2) {
            throw PlanError("layer header has degenerate dimensions");
        }
        const std::uint64_t e = h.edge_count();
        LayerPlan lp;
        if (h.dense()) {
            lp.codebook_bytes = mul_checked(mul_checked(e, h.grid_size), 4);
        } else {
            const std::uint64_t coeff_bytes = h.int8() ? 1 : 4;
            const std::uint64_t scalar_bytes = h.int8() ? 1 : 4;
            lp.codebook_bytes =
                mul_checked(mul_checked(static_cast<std::uint64_t>(h.k), h.grid_size),
                            coeff_bytes);
            const int bits = index_bits(h.k);
            lp.index_bytes = add_checked(mul_checked(e, bits), 7) / 8;
            if (bits > 0) {
                lp.unpacked_index_bytes = mul_checked(e, h.k <= 65536 ? 2 : 4);
            }
            lp.gain_bytes = mul_checked(e, scalar_bytes);
            lp.bias_bytes = mul_checked(e, scalar_bytes);
        }
        plan.payload_total = add_checked(plan.payload_total, lp.payload_bytes());
        plan.working_set_total = add_checked(plan.working_set_total, lp.working_set_bytes());
        max_width = std::max<std::uint64_t>({max_width, h.in_dim, h.out_dim});
        plan.layers.push_back(lp);
    }
    plan.scratch_bytes = mul_checked(mul_checked(max_width, 2), sizeof(double));
    plan.working_set_total = add_checked(plan.working_set_total, plan.scratch_bytes);
    return plan;
}

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, int bits) {
    if (bits < 0 || bits > 32) throw ContractError("index width must be 0..32 bits");
    const std::uint64_t limit = bits == 32 ? 0 : (std::uint64_t{1} << bits);
    for (std::uint32_t v : indices) {
        if (bits < 32 && v >= limit) {
            throw ContractError("index does not fit the declared bit width");
        }
    }
    if (bits == 0) return {};
    std::vector<std::uint8_t> out;
    out.reserve((indices.size() * bits + 7) / 8);
    std::uint64_t acc = 0;
    int filled = 0;
    for (std::uint32_t v : indices) {
        acc |= static_cast<std::uint64_t>(v) << filled;
        filled += bits;
        while (filled >= 8) {
            out.push_back(static_cast<std::uint8_t>(acc & 0xFF));
            acc >>= 8;
            filled -= 8;
        }
    }
    if (filled > 0) out.push_back(static_cast<std::uint8_t>(acc & 0xFF));
    return out;
}

std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes,
                                          std::uint64_t count, int bits) {
    if (bits < 0 || bits > 32) throw ContractError("index width must be 0..32 bits");
    std::vector<std::uint32_t> out(count, 0);
    if (bits == 0) return out;
    if (bytes.size() < (count * bits + 7) / 8) {
        throw ContractError("packed index buffer is too small");
    }
    const std::uint64_t mask =
        bits == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
    std::uint64_t acc = 0;
    int filled = 0;
    std::size_t pos = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        while (filled < bits) {
            acc |= static_cast<std::uint64_t>(bytes[pos++]) << filled;
            filled += 8;
        }
        out[i] = static_cast<std::uint32_t>(acc & mask);
        acc >>= bits;
        filled -= bits;
    }
    return out;
}

double RuntimeLayer::gain(std::uint64_t e) const {
    if (header.int8()) {
        return dequantize_gain_code(gain_codes[e],
                                    {header.gain_log_min, header.gain_log_step});
    }
    return static_cast<double>(gains_f32[e]);
}

double RuntimeLayer::bias(std::uint64_t e) const {
    if (header.int8()) {
        return static_cast<double>(bias_codes[e]) * header.bias_scale;
    }
    return static_cast<double>(biases_f32[e]);
}

ModelHeader Model::header() const {
    ModelHeader h;
    h.layers.reserve(layers.size());
    for (const auto& l : layers) h.layers.push_back(l.header);
    return h;
}

int Model::input_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().header.in_dim);
}

int Model::output_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.back().header.out_dim);
}

int Model::max_width() const {
    std::uint32_t w = 0;
    for (const auto& l : layers) {
        w = std::max({w, l.header.in_dim, l.header.out_dim});
    }
    return static_cast<int>(w);
}

Model build_dense_model(const KanNetwork& net) {
    Model m;
    m.layers.reserve(net.layers().size());
    for (const KanLayer& layer : net.layers()) {
        RuntimeLayer rl;
        rl.header.in_dim = static_cast<std::uint32_t>(layer.in_dim());
        rl.header.out_dim = static_cast<std::uint32_t>(layer.out_dim());
        rl.header.grid_size = static_cast<std::uint32_t>(layer.grid_size());
        rl.header.k = 0;
        rl.header.domain_lo = layer.domain_lo();
        rl.header.domain_hi = layer.domain_hi();
        rl.table_f32.reserve(layer.coefficients().size());
        for (double c : layer.coefficients()) {
            rl.table_f32.push_back(static_cast<float>(c));
        }
        m.layers.push_back(std::move(rl));
    }
    return m;
}

namespace {

void fill_indices(RuntimeLayer& rl, const std::vector<std::uint32_t>& indices,
                  std::uint32_t k) {
    if (index_bits(k) == 0) return;
    if (k <= 65536) {
        rl.idx16.reserve(indices.size());
        for (std::uint32_t v : indices) {
            rl.idx16.push_back(static_cast<std::uint16_t>(v));
        }
    } else {
        rl.idx32 = indices;
    }
}

}  // namespace

Model build_model(const CompressedNetwork& cn) {
    Model m;
    m.layers.reserve(cn.layers.size());
    for (const CompressedLayer& cl : cn.layers) {
        const std::uint64_t e = static_cast<std::uint64_t>(cl.edge_count());
        if (cl.codebook.k < 1) throw ContractError("compressed layer has an empty codebook");
        if (cl.indices.size() != e || cl.gains.size() != e || cl.biases.size() != e) {
            throw ContractError("compressed layer tables disagree on edge count");
        }
        if (cl.codebook.grid_size != cl.grid_size ||
            cl.codebook.entries.size() !=
                static_cast<std::size_t>(cl.codebook.k) * cl.grid_size) {
            throw ContractError("codebook does not match layer grid size");
        }
        for (std::uint32_t v : cl.indices) {
            if (v >= static_cast<std::uint32_t>(cl.codebook.k)) {
                throw ContractError("edge index exceeds codebook size");
            }
        }
        for (double g : cl.gains) {
            if (!(g >= 0.0)) throw ContractError("edge gains must be nonnegative");
        }
        RuntimeLayer rl;
        rl.header.in_dim = static_cast<std::uint32_t>(cl.in_dim);
        rl.header.out_dim = static_cast<std::uint32_t>(cl.out_dim);
        rl.header.grid_size = static_cast<std::uint32_t>(cl.grid_size);
        rl.header.k = static_cast<std::uint32_t>(cl.codebook.k);
        rl.header.domain_lo = cl.domain_lo;
        rl.header.domain_hi = cl.domain_hi;
        if (cl.int8.has_value()) {
            const Int8Tables& t = *cl.int8;
            if (t.codebook_codes.size() != cl.codebook.entries.size() ||
                t.gain_codes.size() != e || t.bias_codes.size() != e) {
                throw ContractError("int8 tables disagree with layer dimensions");
            }
            rl.header.flags |= kFlagInt8;
            rl.header.codebook_scale = t.codebook_params.scale;
            rl.header.gain_log_min = t.gain_params.log_min;
            rl.header.gain_log_step = t.gain_params.log_step;
            rl.header.bias_scale = t.bias_params.scale;
            rl.table_i8 = t.codebook_codes;
            rl.gain_codes = t.gain_codes;
            rl.bias_codes = t.bias_codes;
        } else {
            rl.table_f32.reserve(cl.codebook.entries.size());
            for (double v : cl.codebook.entries) {
                rl.table_f32.push_back(static_cast<float>(v));
            }
            rl.gains_f32.reserve(e);
            rl.biases_f32.reserve(e);
            for (double v : cl.gains) rl.gains_f32.push_back(static_cast<float>(v));
            for (double v : cl.biases) rl.biases_f32.push_back(static_cast<float>(v));
        }
        fill_indices(rl, cl.indices, rl.header.k);
        m.layers.push_back(std::move(rl));
    }
    return m;
}

namespace {

double table_value(const RuntimeLayer& rl, std::size_t pos) {
    if (rl.header.int8()) {
        return static_cast<double>(rl.table_i8[pos]) * rl.header.codebook_scale;
    }
    return static_cast<double>(rl.table_f32[pos]);
}

}  // namespace

KanNetwork to_dense_network(const Model& model) {
    std::vector<KanLayer> layers;
    layers.reserve(model.layers.size());
    for (const RuntimeLayer& rl : model.layers) {
        const LayerHeader& h = rl.header;
        KanLayer layer(static_cast<int>(h.in_dim), static_cast<int>(h.out_dim),
                       static_cast<int>(h.grid_size), h.domain_lo, h.domain_hi);
        auto& coeffs = layer.coefficients();
        const std::uint64_t edges = h.edge_count();
        if (h.dense()) {
            for (std::size_t c = 0; c < coeffs.size(); ++c) {
                coeffs[c] = static_cast<double>(rl.table_f32[c]);
            }
        } else {
            for (std::uint64_t e = 0; e < edges; ++e) {
                const double g = rl.gain(e);
                const double b = rl.bias(e);
                const std::size_t row =
                    static_cast<std::size_t>(rl.index(e)) * h.grid_size;
                for (std::uint32_t c = 0; c < h.grid_size; ++c) {
                    coeffs[e * h.grid_size + c] = g * table_value(rl, row + c) + b;
                }
            }
        }
        layers.push_back(std::move(layer));
    }
    return KanNetwork(std::move(layers));
}

CompressedNetwork decompress(const Model& model) {
    CompressedNetwork cn;
    cn.layers.reserve(model.layers.size());
    for (const RuntimeLayer& rl : model.layers) {
        const LayerHeader& h = rl.header;
        if (h.dense()) {
            throw ContractError("dense layer has no compressed form");
        }
        CompressedLayer cl;
        cl.in_dim = static_cast<int>(h.in_dim);
        cl.out_dim = static_cast<int>(h.out_dim);
        cl.grid_size = static_cast<int>(h.grid_size);
        cl.domain_lo = h.domain_lo;
        cl.domain_hi = h.domain_hi;
        cl.codebook.k = static_cast<int>(h.k);
        cl.codebook.grid_size = static_cast<int>(h.grid_size);
        const std::size_t table = static_cast<std::size_t>(h.k) * h.grid_size;
        cl.codebook.entries.resize(table);
        for (std::size_t c = 0; c < table; ++c) {
            cl.codebook.entries[c] = table_value(rl, c);
        }
        const std::uint64_t edges = h.edge_count();
        cl.indices.resize(edges);
        cl.gains.resize(edges);
        cl.biases.resize(edges);
        for (std::uint64_t e = 0; e < edges; ++e) {
            cl.indices[e] = rl.index(e);
            cl.gains[e] = rl.gain(e);
            cl.biases[e] = rl.bias(e);
        }
        if (h.int8()) {
            Int8Tables t;
            t.codebook_codes = rl.table_i8;
            t.gain_codes = rl.gain_codes;
            t.bias_codes = rl.bias_codes;
            t.codebook_params = {h.codebook_scale};
            t.gain_params = {h.gain_log_min, h.gain_log_step};
            t.bias_params = {h.bias_scale};
            cl.int8 = std::move(t);
        }
        cn.layers.push_back(std::move(cl));
    }
    return cn;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint8_t b[8];
    std::memcpy(b, &v, 8);
    out.insert(out.end(), b, b + 8);
}

void pad_to(std::vector<std::uint8_t>& out, std::size_t align) {
    while (out.size() % align != 0) out.push_back(0);
}

void put_section(std::vector<std::uint8_t>& out, const void* data, std::size_t bytes) {
    pad_to(out, kSectionAlign);
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + bytes);
}

void validate_for_serialize(const RuntimeLayer& rl, std::size_t l) {
    const LayerHeader& h = rl.header;
    const std::string where = "layer " + std::to_string(l);
    if (h.in_dim == 0 || h.out_dim == 0 || h.grid_size < 2) {
        throw ContractError(where + " has degenerate dimensions");
    }
    if (!(h.domain_lo < h.domain_hi) || !std::isfinite(h.domain_lo) ||
        !std::isfinite(h.domain_hi)) {
        throw ContractError(where + " has an invalid domain");
    }
    const std::uint64_t e = h.edge_count();
    const std::uint64_t table =
        h.dense() ? e * h.grid_size : static_cast<std::uint64_t>(h.k) * h.grid_size;
    if (h.dense()) {
        if (h.int8()) throw ContractError(where + ": dense layers are float only");
        if (rl.table_f32.size() != table) {
            throw ContractError(where + " coefficient table has the wrong size");
        }
        return;
    }
    if (h.int8()) {
        if (rl.table_i8.size() != table || rl.gain_codes.size() != e ||
            rl.bias_codes.size() != e) {
            throw ContractError(where + " int8 tables have the wrong size");
        }
        if (!(h.codebook_scale > 0.0) || !std::isfinite(h.codebook_scale) ||
            !(h.bias_scale > 0.0) || !std::isfinite(h.bias_scale) ||
            !std::isfinite(h.gain_log_min) || !(h.gain_log_step > 0.0) ||
            !std::isfinite(h.gain_log_step)) {
            throw ContractError(where + " has invalid quantization parameters");
        }
    } else {
        if (rl.table_f32.size() != table || rl.gains_f32.size() != e ||
            rl.biases_f32.size() != e) {
            throw ContractError(where + " float tables have the wrong size");
        }
    }
    const int bits = index_bits(h.k);
    if (bits == 0) {
        if (!rl.idx16.empty() || !rl.idx32.empty()) {
            throw ContractError(where + " carries an index table for K=1");
        }
    } else if (h.k <= 65536) {
        if (rl.idx16.size() != e) throw ContractError(where + " index table has the wrong size");
    } else {
        if (rl.idx32.size() != e) throw ContractError(where + " index table has the wrong size");
    }
    for (std::uint64_t i = 0; i < e && bits > 0; ++i) {
        if (rl.index(i) >= h.k) {
            throw ContractError(where + " edge " + std::to_string(i) +
                                " indexes past the codebook");
        }
    }
}

}  // namespace

std::vector<std::uint8_t> serialize(const Model& model) {
    if (model.layers.size() > kMaxLayerCount) {
        throw ContractError("implausible layer count");
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        validate_for_serialize(model.layers[l], l);
        if (l > 0 && model.layers[l].header.in_dim != model.layers[l - 1].header.out_dim) {
            throw ContractError("layer " + std::to_string(l) +
                                " input width does not chain");
        }
    }

    std::vector<std::uint8_t> out;
    out.reserve(kPreludeBytes + kLayerHeaderBytes * model.layers.size());
    out.insert(out.end(), {'S', 'K', 'A', 'N'});
    put_u32(out, kFormatVersion);
    put_u32(out, kEndianTag);
    put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
    for (const RuntimeLayer& rl : model.layers) {
        const LayerHeader& h = rl.header;
        put_u32(out, h.in_dim);
        put_u32(out, h.out_dim);
        put_u32(out, h.grid_size);
        put_u32(out, h.k);
        put_f64(out, h.domain_lo);
        put_f64(out, h.domain_hi);
        put_u32(out, h.flags);
        put_u32(out, 0);
        put_f64(out, h.codebook_scale);
        put_f64(out, h.gain_log_min);
        put_f64(out, h.gain_log_step);
        put_f64(out, h.bias_scale);
    }

    for (const RuntimeLayer& rl : model.layers) {
        const LayerHeader& h = rl.header;
        if (h.dense()) {
            put_section(out, rl.table_f32.data(), rl.table_f32.size() * 4);
            continue;
        }
        if (h.int8()) {
            put_section(out, rl.table_i8.data(), rl.table_i8.size());
        } else {
            put_section(out, rl.table_f32.data(), rl.table_f32.size() * 4);
        }
        const int bits = index_bits(h.k);
        std::vector<std::uint32_t> wide;
        if (!rl.idx16.empty()) {
            wide.assign(rl.idx16.begin(), rl.idx16.end());
        } else {
            wide = rl.idx32;
        }
        const std::vector<std::uint8_t> packed = pack_indices(wide, bits);
        put_section(out, packed.data(), packed.size());
        if (h.int8()) {
            put_section(out, rl.gain_codes.data(), rl.gain_codes.size());
            put_section(out, rl.bias_codes.data(), rl.bias_codes.size());
        } else {
            put_section(out, rl.gains_f32.data(), rl.gains_f32.size() * 4);
            put_section(out, rl.biases_f32.data(), rl.biases_f32.size() * 4);
        }
    }
    return out;
}

namespace {

struct Reader {
    std::span<const std::uint8_t> bytes;

    void need(std::uint64_t end, std::uint64_t at, const std::string& what) const {
        if (bytes.size() < end) {
            throw FormatError(FormatFault::Truncated, at, what + " is truncated");
        }
    }
    std::uint32_t u32(std::uint64_t at) const {
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + at, 4);
        return v;
    }
    double f64(std::uint64_t at) const {
        double v;
        std::memcpy(&v, bytes.data() + at, 8);
        return v;
    }
};

}  // namespace

Model deserialize(std::span<const std::uint8_t> bytes) {
    Reader r{bytes};
    r.need(4, 0, "magic");
    if (std::memcmp(bytes.data(), "SKAN", 4) != 0) {
        throw FormatError(FormatFault::BadMagic, 0, "bad magic, expected 'SKAN'");
    }
    r.need(8, 4, "version field");
    const std::uint32_t version = r.u32(4);
    if (version != kFormatVersion) {
        throw FormatError(FormatFault::BadVersion, 4,
                          "unsupported format version " + std::to_string(version));
    }
    r.need(12, 8, "endianness tag");
    if (r.u32(8) != kEndianTag) {
        throw FormatError(FormatFault::BadEndianness, 8, "endianness tag mismatch");
    }
    r.need(16, 12, "layer count");
    const std::uint32_t layer_count = r.u32(12);
    if (layer_count == 0 || layer_count > kMaxLayerCount) {
        throw FormatError(FormatFault::BadHeader, 12, "implausible layer count");
    }

    ModelHeader header;
    header.version = version;
    header.layers.resize(layer_count);
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::uint64_t at = kPreludeBytes + std::uint64_t{l} * kLayerHeaderBytes;
        r.need(at + kLayerHeaderBytes, at, "layer " + std::to_string(l) + " header");
        LayerHeader& h = header.layers[l];
        h.in_dim = r.u32(at + 0);
        h.out_dim = r.u32(at + 4);
        h.grid_size = r.u32(at + 8);
        h.k = r.u32(at + 12);
        h.domain_lo = r.f64(at + 16);
        h.domain_hi = r.f64(at + 24);
        h.flags = r.u32(at + 32);
        h.reserved = r.u32(at + 36);
        h.codebook_scale = r.f64(at + 40);
        h.gain_log_min = r.f64(at + 48);
        h.gain_log_step = r.f64(at + 56);
        h.bias_scale = r.f64(at + 64);

        const std::string where = "layer " + std::to_string(l);
        if (h.in_dim == 0 || h.out_dim == 0) {
            throw FormatError(FormatFault::BadHeader, at, where + " has a zero dimension");
        }
        if (h.grid_size < 2) {
            throw FormatError(FormatFault::BadHeader, at + 8,
                              where + " grid size must be at least 2");
        }
        if (!(h.domain_lo < h.domain_hi) || !std::isfinite(h.domain_lo) ||
            !std::isfinite(h.domain_hi)) {
            throw FormatError(FormatFault::BadHeader, at + 16, where + " has an invalid domain");
        }
        if ((h.flags & ~kFlagInt8) != 0) {
            throw FormatError(FormatFault::BadHeader, at + 32, where + " has unknown flags");
        }
        if (h.reserved != 0) {
            throw FormatError(FormatFault::BadHeader, at + 36,
                              where + " reserved field must be zero");
        }
        if (h.dense() && h.int8()) {
            throw FormatError(FormatFault::BadHeader, at + 32,
                              where + " is dense but flagged int8");
        }
        if (l > 0 && header.layers[l - 1].out_dim != h.in_dim) {
            throw FormatError(FormatFault::BadHeader, at, where + " input width does not chain");
        }
        if (h.int8()) {
            if (!(h.codebook_scale > 0.0) || !std::isfinite(h.codebook_scale)) {
                throw FormatError(FormatFault::BadQuantParam, at + 40,
                                  where + " codebook scale must be positive and finite");
            }
            if (!std::isfinite(h.gain_log_min)) {
                throw FormatError(FormatFault::BadQuantParam, at + 48,
                                  where + " gain log minimum must be finite");
            }
            if (!(h.gain_log_step > 0.0) || !std::isfinite(h.gain_log_step)) {
                throw FormatError(FormatFault::BadQuantParam, at + 56,
                                  where + " gain log step must be positive and finite");
            }
            if (!(h.bias_scale > 0.0) || !std::isfinite(h.bias_scale)) {
                throw FormatError(FormatFault::BadQuantParam, at + 64,
                                  where + " bias scale must be positive and finite");
            }
        }
    }

    MemoryPlan plan;
    try {
        plan = plan_memory(header);
    } catch (const PlanError& e) {
        throw FormatError(FormatFault::BadHeader, kPreludeBytes, e.what());
    }

    Model model;
    model.layers.resize(layer_count);
    std::uint64_t cursor = kPreludeBytes + std::uint64_t{layer_count} * kLayerHeaderBytes;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const LayerHeader& h = header.layers[l];
        const LayerPlan& lp = plan.layers[l];
        RuntimeLayer& rl = model.layers[l];
        rl.header = h;
        const std::string where = "layer " + std::to_string(l);
        const std::uint64_t e = h.edge_count();

        auto section = [&](std::uint64_t size, const char* name) {
            cursor = align_up(cursor, kSectionAlign);
            r.need(cursor + size, cursor, where + " " + name + " section");
            const std::uint8_t* p = bytes.data() + cursor;
            cursor += size;
            return p;
        };

        if (h.dense()) {
            const std::uint8_t* p = section(lp.codebook_bytes, "coefficient");
            rl.table_f32.resize(e * h.grid_size);
            std::memcpy(rl.table_f32.data(), p, lp.codebook_bytes);
            continue;
        }

        const std::uint8_t* cb = section(lp.codebook_bytes, "codebook");
        const std::size_t table = static_cast<std::size_t>(h.k) * h.grid_size;
        if (h.int8()) {
            rl.table_i8.resize(table);
            std::memcpy(rl.table_i8.data(), cb, lp.codebook_bytes);
        } else {
            rl.table_f32.resize(table);
            std::memcpy(rl.table_f32.data(), cb, lp.codebook_bytes);
        }

        const std::uint64_t index_at = align_up(cursor, kSectionAlign);
        const std::uint8_t* ix = section(lp.index_bytes, "index");
        const int bits = index_bits(h.k);
        if (bits > 0) {
            std::vector<std::uint32_t> wide =
                unpack_indices({ix, static_cast<std::size_t>(lp.index_bytes)}, e, bits);
            for (std::uint64_t i = 0; i < e; ++i) {
                if (wide[i] >= h.k) {
                    throw FormatError(FormatFault::IndexOutOfRange, index_at,
                                      where + " edge " + std::to_string(i) + " index " +
                                          std::to_string(wide[i]) + " is outside K=" +
                                          std::to_string(h.k));
                }
            }
            if (h.k <= 65536) {
                rl.idx16.resize(e);
                for (std::uint64_t i = 0; i < e; ++i) {
                    rl.idx16[i] = static_cast<std::uint16_t>(wide[i]);
                }
            } else {
                rl.idx32 = std::move(wide);
            }
        }

        if (h.int8()) {
            const std::uint8_t* g = section(lp.gain_bytes, "gain");
            rl.gain_codes.resize(e);
            std::memcpy(rl.gain_codes.data(), g, lp.gain_bytes);
            const std::uint8_t* b = section(lp.bias_bytes, "bias");
            rl.bias_codes.resize(e);
            std::memcpy(rl.bias_codes.data(), b, lp.bias_bytes);
        } else {
            const std::uint8_t* g = section(lp.gain_bytes, "gain");
            rl.gains_f32.resize(e);
            std::memcpy(rl.gains_f32.data(), g, lp.gain_bytes);
            const std::uint8_t* b = section(lp.bias_bytes, "bias");
            rl.biases_f32.resize(e);
            std::memcpy(rl.biases_f32.data(), b, lp.bias_bytes);
        }
    }
    return model;
}

void save_model(const Model& model, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValueError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValueError("short write to '" + path + "'");
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ValueError("cannot open '" + path + "'");
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw ValueError("short read from '" + path + "'");
    return deserialize(bytes);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

double pli_lookup(const Codebook& codebook, int k, double g, double b, double x,
                  double domain_lo, double domain_hi) {
    if (k < 0 || k >= codebook.k) {
        throw ShapeError("codebook row " + std::to_string(k) + " out of range");
    }
    const auto row = codebook.row(k);
    const GridBracket br = locate(domain_lo, domain_hi, codebook.grid_size, x);
    const double v = row[br.index] * (1.0 - br.t) + row[br.index + 1] * br.t;
    return g * v + b;
}

double pli_lookup_f32(std::span<const float> row, double domain_lo, double domain_hi,
                      double g, double b, double x) {
    const GridBracket br = locate(domain_lo, domain_hi, static_cast<int>(row.size()), x);
    const double v = static_cast<double>(row[br.index]) * (1.0 - br.t) +
                     static_cast<double>(row[br.index + 1]) * br.t;
    return g * v + b;
}

double pli_lookup_i8(std::span<const std::int8_t> row, double scale, double domain_lo,
                     double domain_hi, double g, double b, double x) {
    const GridBracket br = locate(domain_lo, domain_hi, static_cast<int>(row.size()), x);
    const double c0 = static_cast<double>(row[br.index]) * scale;
    const double c1 = static_cast<double>(row[br.index + 1]) * scale;
    return g * (c0 * (1.0 - br.t) + c1 * br.t) + b;
}

Workspace make_workspace(const Model& model) {
    Workspace ws;
    const int width = model.max_width();
    ws.front.assign(static_cast<std::size_t>(width), 0.0);
    ws.back.assign(static_cast<std::size_t>(width), 0.0);
    return ws;
}

namespace {

// One layer, one sample. Evaluates each edge exactly as the dense oracle
// does on reconstructed grids: decode both bracket coefficients, then
// interpolate — bit-identical to reconstruct-then-eval.
std::uint64_t forward_layer(const RuntimeLayer& rl, const double* x, double* y) {
    const LayerHeader& h = rl.header;
    const int in = static_cast<int>(h.in_dim);
    const int out = static_cast<int>(h.out_dim);
    const int grid = static_cast<int>(h.grid_size);
    for (int j = 0; j < out; ++j) y[j] = 0.0;
    std::uint64_t ops = 0;

    if (h.dense()) {
        for (int i = 0; i < in; ++i) {
            const GridBracket br = locate(h.domain_lo, h.domain_hi, grid, x[i]);
            const double w0 = 1.0 - br.t;
            const float* base = rl.table_f32.data() +
                                (static_cast<std::size_t>(i) * out) * grid + br.index;
            for (int j = 0; j < out; ++j, base += grid) {
                y[j] += static_cast<double>(base[0]) * w0 +
                        static_cast<double>(base[1]) * br.t;
            }
            ops += static_cast<std::uint64_t>(out);
        }
        return ops;
    }

    const bool int8 = h.int8();
    for (int i = 0; i < in; ++i) {
        const GridBracket br = locate(h.domain_lo, h.domain_hi, grid, x[i]);
        const double w0 = 1.0 - br.t;
        std::uint64_t e = static_cast<std::uint64_t>(i) * out;
        for (int j = 0; j < out; ++j, ++e) {
            const double g = rl.gain(e);
            const double b = rl.bias(e);
            const std::size_t row = static_cast<std::size_t>(rl.index(e)) * grid + br.index;
            double c0, c1;
            if (int8) {
                c0 = static_cast<double>(rl.table_i8[row]) * h.codebook_scale;
                c1 = static_cast<double>(rl.table_i8[row + 1]) * h.codebook_scale;
            } else {
                c0 = static_cast<double>(rl.table_f32[row]);
                c1 = static_cast<double>(rl.table_f32[row + 1]);
            }
            y[j] += (g * c0 + b) * w0 + (g * c1 + b) * br.t;
        }
        ops += static_cast<std::uint64_t>(out);
    }
    return ops;
}

}  // namespace

void compressed_forward(const Model& model, std::span<const double> inputs, int batch,
                        std::span<double> outputs, Workspace& ws) {
    if (model.layers.empty()) throw ShapeError("model has no layers");
    if (batch < 0) throw ShapeError("batch must be nonnegative");
    const std::size_t in = static_cast<std::size_t>(model.input_dim());
    const std::size_t out = static_cast<std::size_t>(model.output_dim());
    if (inputs.size() != in * static_cast<std::size_t>(batch)) {
        throw ShapeError("input buffer does not match batch * input_dim");
    }
    if (outputs.size() != out * static_cast<std::size_t>(batch)) {
        throw ShapeError("output buffer does not match batch * output_dim");
    }
    const int width = model.max_width();
    if (ws.width() < width || static_cast<int>(ws.back.size()) < width) {
        throw ContractError("workspace is smaller than the model's widest layer");
    }

    std::uint64_t ops = 0;
    for (int s = 0; s < batch; ++s) {
        double* cur = ws.front.data();
        double* nxt = ws.back.data();
        const double* x = inputs.data() + static_cast<std::size_t>(s) * in;
        for (std::size_t c = 0; c < in; ++c) cur[c] = x[c];
        for (const RuntimeLayer& rl : model.layers) {
            ops += forward_layer(rl, cur, nxt);
            std::swap(cur, nxt);
        }
        double* dst = outputs.data() + static_cast<std::size_t>(s) * out;
        for (std::size_t c = 0; c < out; ++c) dst[c] = cur[c];
    }
    ws.interp_ops += ops;
}

// ---------------------------------------------------------------------------
// benchmarking & reports
// ---------------------------------------------------------------------------

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    const auto n = static_cast<std::int64_t>(sorted.size());
    const auto idx = static_cast<std::size_t>(std::llround(q * static_cast<double>(n - 1)));
    return sorted[idx];
}

}  // namespace

BenchRow bench_model(const Model& model, const BenchConfig& config) {
    if (config.batch < 1 || config.repeats < 1 || config.warmup < 0) {
        throw ShapeError("bench needs batch >= 1, repeats >= 1, warmup >= 0");
    }
    const int in = model.input_dim();
    const int out = model.output_dim();
    const double lo = model.layers.front().header.domain_lo;
    const double hi = model.layers.front().header.domain_hi;

    std::mt19937_64 rng(config.seed);
    std::vector<double> inputs(static_cast<std::size_t>(config.batch) * in);
    for (double& v : inputs) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = lo + u * (hi - lo);
    }
    std::vector<double> outputs(static_cast<std::size_t>(config.batch) * out);
    Workspace ws = make_workspace(model);

    for (int w = 0; w < config.warmup; ++w) {
        compressed_forward(model, inputs, config.batch, outputs, ws);
    }
    std::vector<double> samples(static_cast<std::size_t>(config.repeats));
    for (int rep = 0; rep < config.repeats; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        compressed_forward(model, inputs, config.batch, outputs, ws);
        const auto t1 = std::chrono::steady_clock::now();
        const double us = std::chrono::duration<double, std::micro>(t1 - t0).count();
        samples[rep] = us / config.batch;
    }
    std::sort(samples.begin(), samples.end());
    BenchRow row;
    row.grid_size = static_cast<int>(model.layers.front().header.grid_size);
    row.median_us = percentile(samples, 0.5);
    row.p25_us = percentile(samples, 0.25);
    row.p75_us = percentile(samples, 0.75);
    return row;
}

std::vector<BenchRow> bench_iso_latency(std::span<const Model> models,
                                        const BenchConfig& config) {
    if (models.empty()) throw ShapeError("bench needs at least one model");
    const Model& ref = models.front();
    for (const Model& m : models) {
        if (m.layers.size() != ref.layers.size()) {
            throw ShapeError("bench models must share topology apart from grid size");
        }
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            const LayerHeader& a = m.layers[l].header;
            const LayerHeader& b = ref.layers[l].header;
            if (a.in_dim != b.in_dim || a.out_dim != b.out_dim || a.k != b.k ||
                a.flags != b.flags || a.domain_lo != b.domain_lo ||
                a.domain_hi != b.domain_hi) {
                throw ShapeError("bench models must share topology apart from grid size");
            }
        }
    }
    std::vector<BenchRow> rows;
    rows.reserve(models.size());
    for (const Model& m : models) rows.push_back(bench_model(m, config));
    return rows;
}

namespace {

void append_full(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

}  // namespace

std::string bench_csv(std::span<const BenchRow> rows) {
    std::string out = "G,median_us,p25_us,p75_us\n";
    for (const BenchRow& r : rows) {
        out += std::to_string(r.grid_size);
        out += ',';
        append_full(out, r.median_us);
        out += ',';
        append_full(out, r.p25_us);
        out += ',';
        append_full(out, r.p75_us);
        out += '\n';
    }
    return out;
}

std::vector<ReportRow> compression_report(const KanNetwork& dense, const Model& model) {
    if (dense.layer_count() != static_cast<int>(model.layers.size())) {
        throw ShapeError("layer counts differ");
    }
    for (int l = 0; l < dense.layer_count(); ++l) {
        const KanLayer& a = dense.layers()[l];
        const LayerHeader& b = model.layers[l].header;
        if (a.in_dim() != static_cast<int>(b.in_dim) ||
            a.out_dim() != static_cast<int>(b.out_dim) ||
            a.grid_size() != static_cast<int>(b.grid_size)) {
            throw ShapeError("layer " + std::to_string(l) + " topology differs");
        }
    }
    const std::uint64_t dense_bytes = dense_runtime_bytes(dense);
    const MemoryPlan plan = plan_memory(model.header());
    std::uint64_t codebooks = 0, packed = 0, unpacked = 0, gains = 0, biases = 0;
    for (const LayerPlan& lp : plan.layers) {
        codebooks += lp.codebook_bytes;
        packed += lp.index_bytes;
        unpacked += lp.unpacked_index_bytes;
        gains += lp.gain_bytes;
        biases += lp.bias_bytes;
    }
    auto ratio = [dense_bytes](std::uint64_t bytes) {
        return bytes == 0 ? 0.0
                          : static_cast<double>(dense_bytes) / static_cast<double>(bytes);
    };
    std::vector<ReportRow> rows;
    rows.push_back({"dense_runtime", dense_bytes, 1.0});
    rows.push_back({"codebooks", codebooks, ratio(codebooks)});
    rows.push_back({"indices_packed", packed, ratio(packed)});
    rows.push_back({"indices_unpacked", unpacked, ratio(unpacked)});
    rows.push_back({"gains", gains, ratio(gains)});
    rows.push_back({"biases", biases, ratio(biases)});
    rows.push_back({"scratch", plan.scratch_bytes, ratio(plan.scratch_bytes)});
    rows.push_back({"file_payload_total", plan.payload_total, ratio(plan.payload_total)});
    rows.push_back(
        {"working_set_total", plan.working_set_total, ratio(plan.working_set_total)});
    return rows;
}

std::string compression_csv(std::span<const ReportRow> rows) {
    std::string out = "component,bytes,ratio\n";
    for (const ReportRow& r : rows) {
        out += r.component;
        out += ',';
        out += std::to_string(r.bytes);
        out += ',';
        append_full(out, r.ratio);
        out += '\n';
    }
    return out;
}

StorageEstimate projected_storage(std::uint64_t edges, std::uint64_t k,
                                  std::uint64_t grid_size, int codebooks, bool int8) {
    if (k > std::numeric_limits<std::uint32_t>::max()) {
        throw PlanError("codebook size exceeds the 32-bit index space");
    }
    StorageEstimate est;
    const int bits = index_bits(static_cast<std::uint32_t>(k));
    est.index_bytes = add_checked(mul_checked(edges, bits), 7) / 8;
    est.gain_bias_bytes = mul_checked(edges, int8 ? 2 : 8);
    est.codebook_bytes = mul_checked(
        mul_checked(static_cast<std::uint64_t>(codebooks), k),
        mul_checked(grid_size, int8 ? 1 : 4));
    est.total_bytes =
        add_checked(add_checked(est.index_bytes, est.gain_bias_bytes), est.codebook_bytes);
    return est;
}

}  // namespace holoquant
