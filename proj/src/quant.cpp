#include "holoquant/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "holoquant/gsb.hpp"

namespace holoquant {

double round_half_even(double x) {
    const double f = std::floor(x);
    const double frac = x - f;
    if (frac < 0.5) return f;
    if (frac > 0.5) return f + 1.0;
    return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

namespace {
std::int8_t clamp_code(double r, double lo, double hi) {
    return static_cast<std::int8_t>(std::clamp(r, lo, hi));
}
}  // namespace

LinearQuantized quantize_linear_i8(std::span<const double> values) {
    double max_abs = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw ValueError("cannot quantize non-finite value");
        max_abs = std::max(max_abs, std::fabs(v));
    }
    LinearQuantized out;
    out.params.scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
    out.codes.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.codes[i] = clamp_code(round_half_even(values[i] / out.params.scale), -127.0, 127.0);
    }
    return out;
}

double dequantize_linear_code(std::int8_t code, const LinearQuantParams& params) {
    return static_cast<double>(code) * params.scale;
}

std::vector<double> dequantize_linear_i8(std::span<const std::int8_t> codes,
                                         const LinearQuantParams& params) {
    std::vector<double> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        out[i] = dequantize_linear_code(codes[i], params);
    }
    return out;
}

LogQuantized quantize_gains_log_i8(std::span<const double> gains) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_pos = 0.0;
    for (double g : gains) {
        if (!std::isfinite(g)) throw ValueError("cannot quantize non-finite gain");
        if (g < 0.0) throw ContractError("gains must be nonnegative");
        if (g > 0.0) {
            min_pos = std::min(min_pos, g);
            max_pos = std::max(max_pos, g);
        }
    }
    LogQuantized out;
    out.codes.resize(gains.size());
    if (max_pos == 0.0) {  // nothing positive to calibrate against
        out.params = {0.0, 1.0};
        std::fill(out.codes.begin(), out.codes.end(), kGainZeroCode);
        return out;
    }
    const double log_min = std::log2(min_pos);
    const double log_max = std::log2(max_pos);
    out.params.log_min = log_min;
    // A collapsed range (all positive gains equal) keeps log_step = 1; every
    // positive gain then lands on code 0.
    out.params.log_step = (log_max - log_min) < 1e-9 ? 1.0 : (log_max - log_min) / 126.0;
    for (std::size_t i = 0; i < gains.size(); ++i) {
        if (gains[i] == 0.0) {
            out.codes[i] = kGainZeroCode;
        } else {
            const double r = (std::log2(gains[i]) - log_min) / out.params.log_step;
            out.codes[i] = clamp_code(round_half_even(r), 0.0, 126.0);
        }
    }
    return out;
}

double dequantize_gain_code(std::int8_t code, const LogQuantParams& params) {
    if (code == kGainZeroCode) return 0.0;
    return std::exp2(params.log_min + static_cast<double>(code) * params.log_step);
}

std::vector<double> dequantize_gains_log_i8(std::span<const std::int8_t> codes,
                                            const LogQuantParams& params) {
    std::vector<double> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        out[i] = dequantize_gain_code(codes[i], params);
    }
    return out;
}

CompressedLayer quantize_compressed_layer(const CompressedLayer& cl) {
    CompressedLayer out = cl;
    Int8Tables tables;

    LinearQuantized cb = quantize_linear_i8(cl.codebook.entries);
    tables.codebook_codes = std::move(cb.codes);
    tables.codebook_params = cb.params;
    out.codebook.entries = dequantize_linear_i8(tables.codebook_codes, tables.codebook_params);

    LogQuantized g = quantize_gains_log_i8(cl.gains);
    tables.gain_codes = std::move(g.codes);
    tables.gain_params = g.params;
    out.gains = dequantize_gains_log_i8(tables.gain_codes, tables.gain_params);

    LinearQuantized b = quantize_linear_i8(cl.biases);
    tables.bias_codes = std::move(b.codes);
    tables.bias_params = b.params;
    out.biases = dequantize_linear_i8(tables.bias_codes, tables.bias_params);

    out.int8 = std::move(tables);
    return out;
}

CompressedNetwork quantize_compressed_network(const CompressedNetwork& cn) {
    CompressedNetwork out;
    out.layers.reserve(cn.layers.size());
    for (const auto& layer : cn.layers) {
        out.layers.push_back(quantize_compressed_layer(layer));
    }
    return out;
}

}  // namespace holoquant
