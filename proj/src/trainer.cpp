#include "holoquant/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace holoquant {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kNormFloor = 1e-12;  // below this an edge's l21 subgradient is zero
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

TargetFunction target_function_from_name(std::string_view name) {
    if (name == "sines") return TargetFunction::Sines;
    if (name == "poly") return TargetFunction::Poly;
    if (name == "bump") return TargetFunction::Bump;
    throw ValueError("unknown target function '" + std::string(name) +
                     "' (expected sines, poly, or bump)");
}

const char* target_function_name(TargetFunction f) {
    switch (f) {
        case TargetFunction::Sines: return "sines";
        case TargetFunction::Poly: return "poly";
        case TargetFunction::Bump: return "bump";
    }
    return "?";
}

double eval_target(TargetFunction f, std::span<const double> x) {
    const double d = static_cast<double>(x.size());
    switch (f) {
        case TargetFunction::Sines: {
            double s = 0.0;
            for (double v : x) s += std::sin(kPi * v);
            return s / d;
        }
        case TargetFunction::Poly: {
            double m = 0.0;
            for (double v : x) m += v;
            m /= d;
            return m * m * m - m;
        }
        case TargetFunction::Bump: {
            double r2 = 0.0;
            for (double v : x) r2 += v * v;
            return std::exp(-4.0 * r2 / d);
        }
    }
    return 0.0;
}

Dataset make_dataset(const SyntheticTask& task) {
    if (task.input_dim < 1) throw ShapeError("task input_dim must be positive");
    if (task.sample_count < 1) throw ShapeError("task sample_count must be positive");
    if (task.noise_sigma < 0.0) throw ValueError("task noise_sigma must be nonnegative");
    std::mt19937_64 rng(task.seed);
    std::uniform_real_distribution<double> input_dist(-1.0, 1.0);
    std::normal_distribution<double> noise_dist(0.0, 1.0);
    Dataset data;
    data.input_dim = task.input_dim;
    data.inputs.resize(static_cast<std::size_t>(task.sample_count) * task.input_dim);
    data.targets.resize(task.sample_count);
    for (int r = 0; r < task.sample_count; ++r) {
        double* row = data.inputs.data() + static_cast<std::size_t>(r) * task.input_dim;
        for (int c = 0; c < task.input_dim; ++c) row[c] = input_dist(rng);
        data.targets[r] =
            eval_target(task.target, {row, static_cast<std::size_t>(task.input_dim)});
    }
    // noise after all input draws, so sigma never perturbs the input stream
    if (task.noise_sigma > 0.0) {
        for (double& y : data.targets) y += task.noise_sigma * noise_dist(rng);
    }
    return data;
}

KanNetwork init_network(std::span<const int> dims, int grid_size, double sigma,
                        std::uint64_t seed, double domain_lo, double domain_hi) {
    if (dims.size() < 2) throw ShapeError("network needs at least 2 dims");
    if (sigma < 0.0) throw ValueError("init sigma must be nonnegative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma > 0.0 ? sigma : 1.0);
    std::vector<KanLayer> layers;
    layers.reserve(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        KanLayer layer(dims[l], dims[l + 1], grid_size, domain_lo, domain_hi);
        if (sigma > 0.0) {
            for (double& c : layer.coefficients()) c = dist(rng);
        }
        layers.push_back(std::move(layer));
    }
    return KanNetwork(std::move(layers));
}

std::vector<double> spline_gradient(const SplineGrid& grid, double x) {
    validate_grid(grid);
    const GridBracket b = locate(grid.domain_lo, grid.domain_hi, grid.size(), x);
    std::vector<double> w(grid.size(), 0.0);
    w[b.index] = 1.0 - b.t;
    w[b.index + 1] += b.t;
    return w;
}

L21Penalty group_l21_penalty(const KanLayer& layer, double lambda) {
    if (lambda < 0.0) throw ValueError("l21 lambda must be nonnegative");
    L21Penalty p;
    p.gradient.assign(layer.coefficients().size(), 0.0);
    const int G = layer.grid_size();
    for (std::int64_t e = 0; e < layer.edge_count(); ++e) {
        auto c = layer.grid(e);
        double sq = 0.0;
        for (double v : c) sq += v * v;
        const double norm = std::sqrt(sq);
        p.value += lambda * norm;
        if (norm >= kNormFloor) {
            double* g = p.gradient.data() + e * G;
            for (int k = 0; k < G; ++k) g[k] = lambda * c[k] / norm;
        }
    }
    return p;
}

LossGrad loss_and_gradient(const KanNetwork& net, const Dataset& data,
                           std::span<const int> rows, double l21_lambda) {
    if (data.input_dim != net.input_dim()) {
        throw ShapeError("dataset input_dim does not match network");
    }
    if (net.output_dim() != 1) {
        throw ShapeError("training expects a scalar-output network");
    }
    const int L = net.layer_count();
    LossGrad out;
    out.gradients.resize(L);
    for (int l = 0; l < L; ++l) {
        out.gradients[l].assign(net.layers()[l].coefficients().size(), 0.0);
    }

    std::vector<std::vector<double>> acts(L + 1);
    std::vector<double> delta, next_delta;
    const double inv_n = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());

    for (int row : rows) {
        auto x = data.row(row);
        acts[0].assign(x.begin(), x.end());
        for (int l = 0; l < L; ++l) {
            const KanLayer& layer = net.layers()[l];
            acts[l + 1].assign(layer.out_dim(), 0.0);
            layer.forward(acts[l], acts[l + 1]);
        }
        const double err = acts[L][0] - data.targets[row];
        out.mse += err * err * inv_n;

        delta.assign(1, 2.0 * err * inv_n);
        for (int l = L - 1; l >= 0; --l) {
            const KanLayer& layer = net.layers()[l];
            const int G = layer.grid_size();
            const double dx = (layer.domain_hi() - layer.domain_lo()) / (G - 1);
            next_delta.assign(layer.in_dim(), 0.0);
            double* grad = out.gradients[l].data();
            for (int i = 0; i < layer.in_dim(); ++i) {
                const GridBracket b =
                    locate(layer.domain_lo(), layer.domain_hi(), G, acts[l][i]);
                const double w0 = 1.0 - b.t;
                const double w1 = b.t;
                for (int j = 0; j < layer.out_dim(); ++j) {
                    const std::int64_t e = static_cast<std::int64_t>(i) * layer.out_dim() + j;
                    const double d = delta[j];
                    grad[e * G + b.index] += d * w0;
                    grad[e * G + b.index + 1] += d * w1;
                    if (!b.clamped) {
                        const double* c = layer.coefficients().data() + e * G;
                        next_delta[i] += d * (c[b.index + 1] - c[b.index]) / dx;
                    }
                }
            }
            delta.swap(next_delta);
        }
    }

    if (l21_lambda > 0.0) {
        for (int l = 0; l < L; ++l) {
            L21Penalty p = group_l21_penalty(net.layers()[l], l21_lambda);
            out.penalty += p.value;
            for (std::size_t k = 0; k < p.gradient.size(); ++k) {
                out.gradients[l][k] += p.gradient[k];
            }
        }
    }
    return out;
}

double evaluate_mse(const KanNetwork& net, const Dataset& data) {
    if (data.input_dim != net.input_dim()) {
        throw ShapeError("dataset input_dim does not match network");
    }
    double mse = 0.0;
    std::vector<double> y;
    for (int r = 0; r < data.size(); ++r) {
        y = network_forward(net, data.row(r));
        const double err = y[0] - data.targets[r];
        mse += err * err;
    }
    return data.size() > 0 ? mse / data.size() : 0.0;
}

TrainResult train(const KanNetwork& net, const SyntheticTask& task, const TrainConfig& config) {
    if (config.learning_rate < 0.0) throw ValueError("learning rate must be nonnegative");
    if (config.epochs < 1) throw ShapeError("epochs must be at least 1");
    if (config.batch_size < 1) throw ShapeError("batch size must be at least 1");
    if (task.input_dim != net.input_dim()) {
        throw ShapeError("task input_dim does not match network");
    }
    const Dataset data = make_dataset(task);
    const int L = net.layer_count();

    TrainResult result{net, {}};
    result.loss_history.reserve(config.epochs);

    std::vector<std::vector<double>> m(L), v(L);
    for (int l = 0; l < L; ++l) {
        m[l].assign(net.layers()[l].coefficients().size(), 0.0);
        v[l].assign(net.layers()[l].coefficients().size(), 0.0);
    }

    std::mt19937_64 rng(config.seed);
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::int64_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < data.size(); start += config.batch_size) {
            const int end = std::min(start + config.batch_size, data.size());
            std::span<const int> batch(order.data() + start,
                                       static_cast<std::size_t>(end - start));
            LossGrad lg = loss_and_gradient(result.network, data, batch, config.l21_lambda);
            if (!std::isfinite(lg.mse + lg.penalty)) {
                throw TrainingError(epoch, "training diverged at epoch " +
                                               std::to_string(epoch));
            }
            ++step;
            const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
            for (int l = 0; l < L; ++l) {
                auto& coeffs = result.network.layers()[l].coefficients();
                const auto& g = lg.gradients[l];
                for (std::size_t k = 0; k < coeffs.size(); ++k) {
                    m[l][k] = kAdamBeta1 * m[l][k] + (1.0 - kAdamBeta1) * g[k];
                    v[l][k] = kAdamBeta2 * v[l][k] + (1.0 - kAdamBeta2) * g[k] * g[k];
                    const double mhat = m[l][k] / bc1;
                    const double vhat = v[l][k] / bc2;
                    coeffs[k] -= config.learning_rate *
                                 (mhat / (std::sqrt(vhat) + kAdamEps) +
                                  config.weight_decay * coeffs[k]);
                }
            }
        }
        const double epoch_mse = evaluate_mse(result.network, data);
        if (!std::isfinite(epoch_mse)) {
            throw TrainingError(epoch,
                                "training diverged at epoch " + std::to_string(epoch));
        }
        result.loss_history.push_back(epoch_mse);
    }
    return result;
}

namespace {
double edge_norm(std::span<const double> c) {
    double sq = 0.0;
    for (double v : c) sq += v * v;
    return std::sqrt(sq);
}
}  // namespace

PruneResult prune_lowest(const KanNetwork& net, std::int64_t count) {
    const std::int64_t total = net.edge_count();
    if (count < 0) count = 0;
    if (count > total) count = total;

    struct Entry {
        double norm;
        int layer;
        std::int64_t edge;
    };
    std::vector<Entry> entries;
    entries.reserve(total);
    for (int l = 0; l < net.layer_count(); ++l) {
        const KanLayer& layer = net.layers()[l];
        for (std::int64_t e = 0; e < layer.edge_count(); ++e) {
            entries.push_back({edge_norm(layer.grid(e)), l, e});
        }
    }
    // stable sort keeps (layer, i, j) order among ties
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.norm < b.norm; });

    PruneResult result{net, {}, 0.0};
    result.masks.reserve(net.layer_count());
    for (const auto& layer : net.layers()) {
        PruneMask mask;
        mask.in_dim = layer.in_dim();
        mask.out_dim = layer.out_dim();
        mask.keep.assign(static_cast<std::size_t>(layer.edge_count()), 1);
        result.masks.push_back(std::move(mask));
    }
    if (count > 0) result.threshold = entries[count - 1].norm;
    for (std::int64_t r = 0; r < count; ++r) {
        const Entry& en = entries[r];
        result.masks[en.layer].keep[en.edge] = 0;
        auto g = result.network.layers()[en.layer].grid(en.edge);
        std::fill(g.begin(), g.end(), 0.0);
    }
    for (auto& mask : result.masks) mask.threshold = result.threshold;
    return result;
}

PruneResult prune_by_norm(const KanNetwork& net, double sparsity) {
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
        throw ValueError("sparsity must lie in [0, 1]");
    }
    // epsilon guard: sparsity expressed as k/E must prune exactly k edges
    const auto count = static_cast<std::int64_t>(
        std::floor(sparsity * static_cast<double>(net.edge_count()) + 1e-9));
    return prune_lowest(net, count);
}

}  // namespace holoquant
