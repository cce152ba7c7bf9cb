#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "holoquant/errors.hpp"

namespace holoquant {

// One edge's piecewise-linear function: G coefficient values on a uniform
// grid spanning [domain_lo, domain_hi]. Grid spacing is derived, not stored.
struct SplineGrid {
    std::vector<double> coefficients;
    double domain_lo = -1.0;
    double domain_hi = 1.0;

    int size() const { return static_cast<int>(coefficients.size()); }
};

void validate_grid(const SplineGrid& grid);

// Position of grid node i. Node 0 is exactly domain_lo, node G-1 exactly
// domain_hi; interior nodes are lo + i*dx.
double node_position(double lo, double hi, int grid_size, int i);

// Bracket containing x after clamping to [lo, hi]. The interpolated value is
// c[index]*(1-t) + c[index+1]*t, which reproduces coefficients exactly at the
// node positions reported by node_position().
struct GridBracket {
    int index;       // in [0, G-2]
    double t;        // in [0, 1]
    bool clamped;    // x fell outside the domain
};
GridBracket locate(double lo, double hi, int grid_size, double x);

double eval_spline(std::span<const double> coefficients, double lo, double hi, double x);
double eval_spline(const SplineGrid& grid, double x);

// Dense layer: in_dim x out_dim edges, each a length-G grid over a shared
// domain. Coefficients are stored flat, edge-major in (input, output) order:
// edge (i, j) occupies [ (i*out_dim + j)*G, ... + G ).
class KanLayer {
public:
    KanLayer(int in_dim, int out_dim, int grid_size, double domain_lo, double domain_hi);

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }
    int grid_size() const { return grid_size_; }
    double domain_lo() const { return domain_lo_; }
    double domain_hi() const { return domain_hi_; }
    std::int64_t edge_count() const { return static_cast<std::int64_t>(in_dim_) * out_dim_; }

    std::span<double> grid(int i, int j);
    std::span<const double> grid(int i, int j) const;
    std::span<double> grid(std::int64_t edge);
    std::span<const double> grid(std::int64_t edge) const;
    SplineGrid grid_copy(int i, int j) const;

    std::vector<double>& coefficients() { return coefficients_; }
    const std::vector<double>& coefficients() const { return coefficients_; }

    // y_j = sum_i eval_spline(grid(i,j), x[i]); every edge contributes.
    void forward(std::span<const double> x, std::span<double> y) const;

private:
    int in_dim_;
    int out_dim_;
    int grid_size_;
    double domain_lo_;
    double domain_hi_;
    std::vector<double> coefficients_;  // E * G
};

std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> x);

class KanNetwork {
public:
    explicit KanNetwork(std::vector<KanLayer> layers);

    const std::vector<KanLayer>& layers() const { return layers_; }
    std::vector<KanLayer>& layers() { return layers_; }
    int layer_count() const { return static_cast<int>(layers_.size()); }
    int input_dim() const { return layers_.front().in_dim(); }
    int output_dim() const { return layers_.back().out_dim(); }
    std::int64_t edge_count() const;

private:
    std::vector<KanLayer> layers_;
};

std::vector<double> network_forward(const KanNetwork& net, std::span<const double> x);

// Bytes a dense float32 forward pass must hold resident: sum over layers of
// E * G * 4.
std::uint64_t dense_runtime_bytes(const KanNetwork& net);

}  // namespace holoquant
