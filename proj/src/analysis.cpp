#include "holoquant/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <Eigen/SVD>

#include "holoquant/lutham.hpp"

namespace holoquant {

int worker_count() {
    const char* env = std::getenv("HOLOQUANT_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == nullptr || *end != '\0' || v < 1 || v > 256) return 1;
    return static_cast<int>(v);
}

namespace {

// Runs cell(i) for i in [0, n); each cell writes only its own output slot,
// so results are identical at any worker count.
template <typename F>
void for_each_cell(int n, F cell) {
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) cell(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) cell(i);
        });
    }
    for (auto& t : pool) t.join();
}

int uniform_grid_size(const KanNetwork& net) {
    const int g = net.layers().front().grid_size();
    for (const KanLayer& layer : net.layers()) {
        if (layer.grid_size() != g) {
            throw ContractError("network mixes grid sizes");
        }
    }
    return g;
}

void append_full(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

}  // namespace

Matrix stack_coefficients(const KanNetwork& net) {
    Matrix m;
    m.cols = uniform_grid_size(net);
    m.rows = static_cast<int>(net.edge_count());
    m.data.reserve(static_cast<std::size_t>(m.rows) * m.cols);
    for (const KanLayer& layer : net.layers()) {
        m.data.insert(m.data.end(), layer.coefficients().begin(), layer.coefficients().end());
    }
    return m;
}

KanNetwork unstack_coefficients(const Matrix& m, KanNetwork net) {
    if (m.rows != static_cast<int>(net.edge_count()) || m.cols != uniform_grid_size(net)) {
        throw ShapeError("matrix does not match the network's edge layout");
    }
    std::size_t pos = 0;
    for (KanLayer& layer : net.layers()) {
        auto& coeffs = layer.coefficients();
        std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(pos), coeffs.size(),
                    coeffs.begin());
        pos += coeffs.size();
    }
    return net;
}

Matrix center_rows(const Matrix& m) {
    Matrix out = m;
    if (m.rows == 0) return out;
    std::vector<double> mean(m.cols, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) mean[c] += m.at(r, c);
    }
    for (int c = 0; c < m.cols; ++c) mean[c] /= m.rows;
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) out.at(r, c) -= mean[c];
    }
    return out;
}

SpectrumReport svd_spectrum(const Matrix& m) {
    if (m.rows < 1 || m.cols < 1) throw ShapeError("spectrum needs a non-empty matrix");
    for (double v : m.data) {
        if (!std::isfinite(v)) throw ValueError("spectrum input must be finite");
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        mapped(m.data.data(), m.rows, m.cols);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(mapped);

    SpectrumReport rep;
    const auto& sv = svd.singularValues();
    rep.singular_values.assign(sv.data(), sv.data() + sv.size());
    double total = 0.0;
    for (double s : rep.singular_values) total += s * s;
    rep.cumulative_fraction.resize(rep.singular_values.size());
    double run = 0.0;
    for (std::size_t i = 0; i < rep.singular_values.size(); ++i) {
        run += rep.singular_values[i] * rep.singular_values[i];
        rep.cumulative_fraction[i] = total > 0.0 ? run / total : 1.0;
    }
    auto rank_at = [&](double p) {
        for (std::size_t i = 0; i < rep.cumulative_fraction.size(); ++i) {
            if (rep.cumulative_fraction[i] >= p) return static_cast<int>(i) + 1;
        }
        return static_cast<int>(rep.cumulative_fraction.size());
    };
    rep.rank_90 = rank_at(0.90);
    rep.rank_94 = rank_at(0.94);
    rep.rank_99 = rank_at(0.99);
    return rep;
}

std::string spectrum_csv(const SpectrumReport& report) {
    std::string out = "rank,sigma,cumfrac\n";
    for (std::size_t i = 0; i < report.singular_values.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        append_full(out, report.singular_values[i]);
        out += ',';
        append_full(out, report.cumulative_fraction[i]);
        out += '\n';
    }
    return out;
}

std::string sweep_csv(const SweepCurve& curve) {
    std::string out = "x,y,seed\n";
    for (const SweepPoint& p : curve.points) {
        append_full(out, p.x);
        out += ',';
        append_full(out, p.y);
        out += ',';
        out += std::to_string(p.seed);
        out += '\n';
    }
    return out;
}

SweepCurve pruning_sweep(const KanNetwork& net, const Dataset& test,
                         std::span<const double> sparsities, std::uint64_t seed_tag) {
    for (std::size_t i = 0; i < sparsities.size(); ++i) {
        if (sparsities[i] < 0.0 || sparsities[i] > 1.0) {
            throw ValueError("sparsity levels must lie in [0, 1]");
        }
        if (i > 0 && sparsities[i] <= sparsities[i - 1]) {
            throw ValueError("sparsity levels must increase strictly");
        }
    }
    SweepCurve curve;
    curve.label = "pruning_sweep";
    curve.points.resize(sparsities.size());
    for_each_cell(static_cast<int>(sparsities.size()), [&](int i) {
        const PruneResult pr = prune_by_norm(net, sparsities[i]);
        curve.points[i] = {sparsities[i], evaluate_mse(pr.network, test), seed_tag};
    });
    return curve;
}

AblationResult codebook_ablation(const KanNetwork& net, const Dataset& test,
                                 std::span<const int> ks, int restarts, std::uint64_t seed) {
    if (ks.empty()) throw ShapeError("ablation needs at least one K");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1) throw ValueError("K must be positive");
        if (i > 0 && ks[i] <= ks[i - 1]) throw ValueError("K list must increase strictly");
    }
    const double baseline = evaluate_mse(net, test);
    AblationResult result;
    result.r2.label = "ablation_r2";
    result.mse_delta.label = "ablation_mse_delta";
    result.r2.points.resize(ks.size());
    result.mse_delta.points.resize(ks.size());
    for_each_cell(static_cast<int>(ks.size()), [&](int i) {
        VqConfig cfg;
        cfg.k = ks[i];
        cfg.restarts = restarts;
        cfg.seed = seed;
        const CompressedNetwork cn = compress_network(net, cfg);
        const double r2 = r2_report(net, cn).aggregate;
        const double mse = evaluate_mse(reconstruct_network(cn), test);
        result.r2.points[i] = {static_cast<double>(ks[i]), r2, seed};
        result.mse_delta.points[i] = {static_cast<double>(ks[i]), mse - baseline, seed};
    });
    return result;
}

std::uint64_t pruning_storage_bits(const KanNetwork& net, std::int64_t kept_edges) {
    if (kept_edges < 0 || kept_edges > net.edge_count()) {
        throw ValueError("kept edge count out of range");
    }
    const int g = uniform_grid_size(net);
    return static_cast<std::uint64_t>(kept_edges) * static_cast<std::uint64_t>(g) * 32u;
}

std::uint64_t vq_storage_bits(const KanNetwork& net, int k) {
    if (k < 1) throw ValueError("K must be positive");
    const int g = uniform_grid_size(net);
    const int bits = index_bits(static_cast<std::uint32_t>(k));
    std::uint64_t total = 0;
    for (const KanLayer& layer : net.layers()) {
        total += static_cast<std::uint64_t>(layer.edge_count()) *
                 (static_cast<std::uint64_t>(bits) + 16u);  // packed index + int8 gain/bias
        total += static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(g) * 8u;
    }
    return total;
}

int max_pow2_k_for_budget(const KanNetwork& net, std::uint64_t budget_bits) {
    const auto edges = static_cast<std::uint64_t>(net.edge_count());
    const std::uint64_t cap = std::bit_ceil(std::max<std::uint64_t>(edges, 1));
    int best = 0;
    for (std::uint64_t k = 1; k <= cap; k *= 2) {
        if (vq_storage_bits(net, static_cast<int>(k)) <= budget_bits) {
            best = static_cast<int>(k);
        }
    }
    return best;
}

ComparisonReport pruning_vs_vq(const KanNetwork& net, const Dataset& test,
                               std::span<const std::uint64_t> budgets, int restarts,
                               std::uint64_t seed) {
    if (budgets.empty()) throw ShapeError("comparison needs at least one budget");
    for (std::size_t i = 1; i < budgets.size(); ++i) {
        if (budgets[i] <= budgets[i - 1]) {
            throw ValueError("budgets must increase strictly");
        }
    }
    const std::int64_t edges = net.edge_count();
    const int g = uniform_grid_size(net);
    const double baseline = evaluate_mse(net, test);

    // resolve budgets up front so infeasible ones fail before any work runs
    std::vector<int> chosen_k(budgets.size());
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        chosen_k[i] = max_pow2_k_for_budget(net, budgets[i]);
        if (chosen_k[i] == 0) {
            throw ValueError("budget of " + std::to_string(budgets[i]) +
                             " bits cannot hold any codebook");
        }
    }

    ComparisonReport report;
    report.points.resize(budgets.size());
    for_each_cell(static_cast<int>(budgets.size()), [&](int i) {
        BudgetPoint pt;
        pt.budget_bits = budgets[i];
        pt.baseline_mse = baseline;
        const std::int64_t kept = std::min<std::int64_t>(
            edges, static_cast<std::int64_t>(budgets[i] /
                                             (static_cast<std::uint64_t>(g) * 32u)));
        pt.sparsity =
            1.0 - static_cast<double>(kept) / static_cast<double>(edges);
        const PruneResult pr = prune_lowest(net, edges - kept);
        pt.prune_mse = evaluate_mse(pr.network, test);

        pt.k = chosen_k[i];
        VqConfig cfg;
        cfg.k = pt.k;
        cfg.restarts = restarts;
        cfg.seed = seed;
        cfg.int8 = true;  // the bit accounting assumes int8 tables
        const CompressedNetwork cn = compress_network(net, cfg);
        pt.vq_mse = evaluate_mse(reconstruct_network(cn), test);
        report.points[i] = pt;
    });
    return report;
}

std::string comparison_csv(const ComparisonReport& report) {
    std::string out = "budget_bits,prune_mse,vq_mse,baseline_mse,sparsity,k\n";
    for (const BudgetPoint& p : report.points) {
        out += std::to_string(p.budget_bits);
        out += ',';
        append_full(out, p.prune_mse);
        out += ',';
        append_full(out, p.vq_mse);
        out += ',';
        append_full(out, p.baseline_mse);
        out += ',';
        append_full(out, p.sparsity);
        out += ',';
        out += std::to_string(p.k);
        out += '\n';
    }
    return out;
}

}  // namespace holoquant
