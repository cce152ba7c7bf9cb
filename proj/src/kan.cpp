#include "holoquant/kan.hpp"

#include <cmath>
#include <string>

namespace holoquant {

void validate_grid(const SplineGrid& grid) {
    if (grid.size() < 2) {
        throw ShapeError("spline grid needs at least 2 coefficients, got " +
                         std::to_string(grid.size()));
    }
    if (!(grid.domain_lo < grid.domain_hi)) {
        throw ValueError("spline grid domain is empty or inverted");
    }
    for (double c : grid.coefficients) {
        if (!std::isfinite(c)) throw ValueError("spline grid has non-finite coefficient");
    }
}

double node_position(double lo, double hi, int grid_size, int i) {
    if (i == 0) return lo;
    if (i == grid_size - 1) return hi;
    const double dx = (hi - lo) / (grid_size - 1);
    return lo + i * dx;
}

GridBracket locate(double lo, double hi, int grid_size, double x) {
    if (!std::isfinite(x)) throw ValueError("spline evaluated at non-finite x");
    bool clamped = false;
    if (x < lo) {
        x = lo;
        clamped = true;
    } else if (x > hi) {
        x = hi;
        clamped = true;
    }
    const double dx = (hi - lo) / (grid_size - 1);
    int i = static_cast<int>(std::floor((x - lo) / dx));
    if (i < 0) i = 0;
    if (i > grid_size - 2) i = grid_size - 2;
    // Rounding in the division can land one bracket off; correct against the
    // actual node positions so grid-node inputs reproduce coefficients exactly.
    if (i < grid_size - 2 && x >= node_position(lo, hi, grid_size, i + 1)) {
        ++i;
    } else if (i > 0 && x < node_position(lo, hi, grid_size, i)) {
        --i;
    }
    double t;
    if (x >= node_position(lo, hi, grid_size, i + 1)) {
        t = 1.0;
    } else {
        t = (x - node_position(lo, hi, grid_size, i)) / dx;
        if (t < 0.0) t = 0.0;
        if (t > 1.0) t = 1.0;
    }
    return GridBracket{i, t, clamped};
}

double eval_spline(std::span<const double> coefficients, double lo, double hi, double x) {
    const GridBracket b = locate(lo, hi, static_cast<int>(coefficients.size()), x);
    return coefficients[b.index] * (1.0 - b.t) + coefficients[b.index + 1] * b.t;
}

double eval_spline(const SplineGrid& grid, double x) {
    validate_grid(grid);
    return eval_spline(std::span<const double>(grid.coefficients), grid.domain_lo,
                       grid.domain_hi, x);
}

KanLayer::KanLayer(int in_dim, int out_dim, int grid_size, double domain_lo, double domain_hi)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      grid_size_(grid_size),
      domain_lo_(domain_lo),
      domain_hi_(domain_hi) {
    if (in_dim < 1 || out_dim < 1) throw ShapeError("layer dimensions must be positive");
    if (grid_size < 2) throw ShapeError("grid size must be at least 2");
    if (!(domain_lo < domain_hi)) throw ValueError("layer domain is empty or inverted");
    coefficients_.assign(static_cast<std::size_t>(edge_count()) * grid_size, 0.0);
}

std::span<double> KanLayer::grid(int i, int j) {
    return grid(static_cast<std::int64_t>(i) * out_dim_ + j);
}

std::span<const double> KanLayer::grid(int i, int j) const {
    return grid(static_cast<std::int64_t>(i) * out_dim_ + j);
}

std::span<double> KanLayer::grid(std::int64_t edge) {
    return {coefficients_.data() + edge * grid_size_, static_cast<std::size_t>(grid_size_)};
}

std::span<const double> KanLayer::grid(std::int64_t edge) const {
    return {coefficients_.data() + edge * grid_size_, static_cast<std::size_t>(grid_size_)};
}

SplineGrid KanLayer::grid_copy(int i, int j) const {
    auto g = grid(i, j);
    return SplineGrid{{g.begin(), g.end()}, domain_lo_, domain_hi_};
}

void KanLayer::forward(std::span<const double> x, std::span<double> y) const {
    if (static_cast<int>(x.size()) != in_dim_) {
        throw ShapeError("layer input width " + std::to_string(x.size()) + ", expected " +
                         std::to_string(in_dim_));
    }
    for (int j = 0; j < out_dim_; ++j) y[j] = 0.0;
    for (int i = 0; i < in_dim_; ++i) {
        // One bracket per input feeds the whole row of outgoing edges.
        const GridBracket b = locate(domain_lo_, domain_hi_, grid_size_, x[i]);
        const double w0 = 1.0 - b.t;
        const double w1 = b.t;
        const double* row = coefficients_.data() +
                            static_cast<std::size_t>(i) * out_dim_ * grid_size_;
        for (int j = 0; j < out_dim_; ++j) {
            const double* c = row + static_cast<std::size_t>(j) * grid_size_;
            y[j] += c[b.index] * w0 + c[b.index + 1] * w1;
        }
    }
}

std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> x) {
    std::vector<double> y(layer.out_dim());
    layer.forward(x, y);
    return y;
}

KanNetwork::KanNetwork(std::vector<KanLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t l = 1; l < layers_.size(); ++l) {
        if (layers_[l - 1].out_dim() != layers_[l].in_dim()) {
            throw ShapeError("layer " + std::to_string(l - 1) + " out_dim " +
                             std::to_string(layers_[l - 1].out_dim()) +
                             " does not match layer " + std::to_string(l) + " in_dim " +
                             std::to_string(layers_[l].in_dim()));
        }
    }
}

std::int64_t KanNetwork::edge_count() const {
    std::int64_t total = 0;
    for (const auto& layer : layers_) total += layer.edge_count();
    return total;
}

std::vector<double> network_forward(const KanNetwork& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.input_dim()) {
        throw ShapeError("network input width " + std::to_string(x.size()) + ", expected " +
                         std::to_string(net.input_dim()));
    }
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (const auto& layer : net.layers()) {
        next.assign(layer.out_dim(), 0.0);
        layer.forward(cur, next);
        cur.swap(next);
    }
    return cur;
}

std::uint64_t dense_runtime_bytes(const KanNetwork& net) {
    std::uint64_t total = 0;
    for (const auto& layer : net.layers()) {
        total += static_cast<std::uint64_t>(layer.edge_count()) * layer.grid_size() * 4;
    }
    return total;
}

}  // namespace holoquant
