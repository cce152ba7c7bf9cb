#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace holoquant {

// Dimension / length mismatches (input width, grid count, scope sizes).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numeric contract violations: non-finite inputs, negative gains, invalid ranges.
struct ValueError : std::domain_error {
    using std::domain_error::domain_error;
};

// Misuse of an API contract (undersized workspace, mismatched topologies).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct TrainingError : std::runtime_error {
    int epoch;
    TrainingError(int epoch_, const std::string& msg)
        : std::runtime_error(msg), epoch(epoch_) {}
};

// Config-file problems; line == 0 means no line information applies.
struct ConfigError : std::runtime_error {
    int line;
    explicit ConfigError(const std::string& msg, int line_ = 0)
        : std::runtime_error(msg), line(line_) {}
};

enum class FormatFault {
    BadMagic,
    BadVersion,
    BadEndianness,
    BadHeader,
    Truncated,
    IndexOutOfRange,
    BadQuantParam,
};

// Model-file errors carry the byte offset where the fault was detected.
struct FormatError : std::runtime_error {
    FormatFault fault;
    std::uint64_t offset;
    FormatError(FormatFault fault_, std::uint64_t offset_, const std::string& msg)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset_) + ")"),
          fault(fault_),
          offset(offset_) {}
};

// Memory-plan arithmetic overflow on absurd dimensions.
struct PlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace holoquant
