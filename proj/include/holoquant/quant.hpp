#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "holoquant/errors.hpp"

namespace holoquant {

// Symmetric linear Int8: v_hat = code * scale, zero point fixed at 0.
struct LinearQuantParams {
    double scale = 1.0;
};

// Logarithmic Int8 for nonnegative gains. Magnitude codes 0..126 decode to
// 2^(log_min + code*log_step); code 127 is reserved and decodes to exactly 0.
// The sign bit is always 0 in this format (gains are standard deviations).
struct LogQuantParams {
    double log_min = 0.0;
    double log_step = 1.0;
};

inline constexpr std::int8_t kGainZeroCode = 127;

// Banker's rounding, spelled out so every platform agrees bit-for-bit.
double round_half_even(double x);

struct LinearQuantized {
    std::vector<std::int8_t> codes;
    LinearQuantParams params;
};

// scale = max|v| / 127; all-zero input uses scale 1 with all codes 0.
// Unclamped round-trip error is at most scale/2 per element.
LinearQuantized quantize_linear_i8(std::span<const double> values);

double dequantize_linear_code(std::int8_t code, const LinearQuantParams& params);
std::vector<double> dequantize_linear_i8(std::span<const std::int8_t> codes,
                                         const LinearQuantParams& params);

struct LogQuantized {
    std::vector<std::int8_t> codes;
    LogQuantParams params;
};

// Calibrates log_min/log_step from the observed positive range; a degenerate
// range (all positive gains equal) keeps log_step = 1 with all codes 0.
// Relative round-trip error for in-range positive gains is at most
// 2^(log_step/2) - 1.
LogQuantized quantize_gains_log_i8(std::span<const double> gains);

double dequantize_gain_code(std::int8_t code, const LogQuantParams& params);
std::vector<double> dequantize_gains_log_i8(std::span<const std::int8_t> codes,
                                            const LogQuantParams& params);

}  // namespace holoquant
