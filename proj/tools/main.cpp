#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "holoquant/analysis.hpp"
#include "holoquant/config.hpp"
#include "holoquant/gsb.hpp"
#include "holoquant/kan.hpp"
#include "holoquant/lutham.hpp"
#include "holoquant/quant.hpp"
#include "holoquant/trainer.hpp"

namespace fs = std::filesystem;
namespace hq = holoquant;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format3(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// 655360 -> "655,360"
std::string group_digits(std::uint64_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    const int n = static_cast<int>(digits.size());
    for (int i = 0; i < n; ++i) {
        if (i > 0 && (n - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw hq::ValueError("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw hq::ValueError("short write to '" + path.string() + "'");
}

struct ManifestField {
    std::string key;
    std::string value;
};

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::vector<ManifestField>& fields, const hq::Config* cfg) {
    std::string m;
    m += "tool = holoquant " + std::string(kToolVersion) + "\n";
    m += "command = " + command + "\n";
    for (const ManifestField& f : fields) m += f.key + " = " + f.value + "\n";
    m += "threads = " + std::to_string(hq::worker_count()) + "\n";
    if (cfg != nullptr) {
        m += "\n# resolved config\n";
        m += cfg->echo();
    }
    write_file(dir / "manifest.txt", m);
}

fs::path prepare_out_dir(const std::string& out_dir) {
    fs::path dir(out_dir);
    fs::create_directories(dir);
    return dir;
}

hq::SyntheticTask task_from_config(const hq::Config& cfg) {
    hq::SyntheticTask task;
    task.input_dim = static_cast<int>(cfg.integer("task", "input_dim"));
    const std::string target = cfg.get("task", "target");
    try {
        task.target = hq::target_function_from_name(target);
    } catch (const hq::ValueError& e) {
        throw hq::ConfigError(std::string(e.what()) + " (key 'target' in section [task])");
    }
    task.sample_count = static_cast<int>(cfg.integer_or("task", "samples", 1000));
    task.noise_sigma = cfg.number_or("task", "noise_sigma", 0.0);
    task.seed = static_cast<std::uint64_t>(cfg.integer_or("task", "seed", 0));
    return task;
}

// held-out data: same task family, disjoint seed
hq::Dataset test_dataset(hq::SyntheticTask task) {
    task.seed += 1;
    return hq::make_dataset(task);
}

struct GlobalFlags {
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const GlobalFlags& flags) {
    const hq::Config cfg = hq::Config::load(config_path);
    const hq::SyntheticTask task = task_from_config(cfg);

    const std::vector<std::int64_t> dims64 = cfg.integer_list("model", "dims");
    std::vector<int> dims;
    for (std::int64_t d : dims64) {
        if (d < 1) throw hq::ConfigError("entries of 'dims' must be positive");
        dims.push_back(static_cast<int>(d));
    }
    if (dims.size() < 2) throw hq::ConfigError("'dims' needs at least two entries");
    if (dims.front() != task.input_dim) {
        throw hq::ConfigError("first entry of 'dims' must equal [task] input_dim");
    }
    if (dims.back() != 1) throw hq::ConfigError("last entry of 'dims' must be 1");
    const int grid = static_cast<int>(cfg.integer("model", "grid_size"));
    const double lo = cfg.number_or("model", "domain_lo", -1.0);
    const double hi = cfg.number_or("model", "domain_hi", 1.0);

    hq::TrainConfig tc;
    tc.learning_rate = cfg.number_or("train", "learning_rate", 1e-3);
    tc.epochs = static_cast<int>(cfg.integer_or("train", "epochs", 100));
    tc.batch_size = static_cast<int>(cfg.integer_or("train", "batch_size", 16));
    tc.weight_decay = cfg.number_or("train", "weight_decay", 1e-4);
    tc.l21_lambda = cfg.number_or("train", "l21_lambda", 0.0);
    tc.init_sigma = cfg.number_or("train", "init_sigma", 0.1);
    tc.seed = static_cast<std::uint64_t>(cfg.integer_or("train", "seed", 0));
    if (flags.seed.has_value()) tc.seed = *flags.seed;

    const hq::KanNetwork net0 = hq::init_network(dims, grid, tc.init_sigma, tc.seed, lo, hi);
    const hq::TrainResult result = hq::train(net0, task, tc);

    const fs::path dir = prepare_out_dir(flags.out_dir);
    hq::save_model(hq::build_dense_model(result.network), (dir / "model.skan").string());

    std::string loss = "epoch,mse\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
        loss += std::to_string(e) + "," + format_full(result.loss_history[e]) + "\n";
    }
    write_file(dir / "loss.csv", loss);
    write_manifest(dir, "train",
                   {{"config", config_path},
                    {"task_seed", std::to_string(task.seed)},
                    {"train_seed", std::to_string(tc.seed)},
                    {"outputs", "model.skan loss.csv"}},
                   &cfg);

    std::cout << "trained " << dims.size() - 1 << "-layer network, G=" << grid << "\n";
    std::cout << "final training MSE: " << format_full(result.loss_history.back()) << " after "
              << tc.epochs << " epochs\n";
    std::cout << "wrote " << (dir / "model.skan").string() << "\n";
    return 0;
}

int cmd_compress(const std::string& model_path, int k, int restarts, int iters, int batch,
                 bool int8, const GlobalFlags& flags) {
    if (k < 1) throw hq::ConfigError("--k must be at least 1");
    if (restarts < 1) throw hq::ConfigError("--restarts must be at least 1");
    const hq::Model loaded = hq::load_model(model_path);
    const hq::KanNetwork dense = hq::to_dense_network(loaded);

    hq::VqConfig vq;
    vq.k = k;
    vq.restarts = restarts;
    vq.max_iters = iters;
    vq.batch_size = batch;
    vq.seed = flags.seed.value_or(0);
    vq.int8 = int8;
    const hq::CompressedNetwork cn = hq::compress_network(dense, vq);
    const hq::R2Report r2 = hq::r2_report(dense, cn);

    for (std::size_t l = 0; l < cn.layers.size(); ++l) {
        std::cout << "layer " << l << ": R2 = " << format_full(r2.per_layer[l]);
        if (cn.layers[l].codebook.training_meta.padded) {
            std::cout << "  (codebook padded: K exceeds distinct shapes)";
        }
        std::cout << "\n";
    }
    std::cout << "aggregate R2 = " << format_full(r2.aggregate) << "\n";

    const int bits = hq::index_bits(static_cast<std::uint32_t>(k));
    const int scalar_bits = int8 ? 8 : 32;
    std::cout << "per-edge storage: " << bits << " + " << scalar_bits << " + " << scalar_bits
              << " = " << bits + 2 * scalar_bits << " bits\n";

    const hq::Model model = hq::build_model(cn);
    const fs::path dir = prepare_out_dir(flags.out_dir);
    hq::save_model(model, (dir / "compressed.skan").string());

    std::string r2csv = "scope,r2\n";
    for (std::size_t l = 0; l < r2.per_layer.size(); ++l) {
        r2csv += "layer" + std::to_string(l) + "," + format_full(r2.per_layer[l]) + "\n";
    }
    r2csv += "aggregate," + format_full(r2.aggregate) + "\n";
    write_file(dir / "r2.csv", r2csv);

    const std::vector<hq::ReportRow> rows = hq::compression_report(dense, model);
    write_file(dir / "compression.csv", hq::compression_csv(rows));
    write_manifest(dir, "compress",
                   {{"model", model_path},
                    {"k", std::to_string(k)},
                    {"restarts", std::to_string(restarts)},
                    {"iters", std::to_string(iters)},
                    {"batch", std::to_string(batch)},
                    {"int8", int8 ? "true" : "false"},
                    {"seed", std::to_string(vq.seed)},
                    {"outputs", "compressed.skan r2.csv compression.csv"}},
                   nullptr);
    std::cout << "wrote " << (dir / "compressed.skan").string() << "\n";
    return 0;
}

std::vector<std::vector<double>> parse_input_csv(const std::string& path, int expected_width) {
    std::ifstream in(path);
    if (!in) throw hq::ValueError("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        bool blank = true;
        for (char c : line) {
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        }
        if (blank) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                while (used < cell.size() &&
                       std::isspace(static_cast<unsigned char>(cell[used]))) {
                    ++used;
                }
                if (used != cell.size()) throw std::invalid_argument("trailing junk");
                row.push_back(v);
            } catch (const std::exception&) {
                throw hq::ValueError("row " + std::to_string(line_no) +
                                     ": cannot parse '" + cell + "' as a number");
            }
        }
        if (static_cast<int>(row.size()) != expected_width) {
            throw hq::ValueError("row " + std::to_string(line_no) + ": expected " +
                                 std::to_string(expected_width) + " values, got " +
                                 std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_run(const std::string& model_path, const std::string& input_path,
            const GlobalFlags& flags) {
    const hq::Model model = hq::load_model(model_path);
    const std::vector<std::vector<double>> rows =
        parse_input_csv(input_path, model.input_dim());

    const int batch = static_cast<int>(rows.size());
    const int in = model.input_dim();
    const int out = model.output_dim();
    std::vector<double> inputs(static_cast<std::size_t>(batch) * in);
    for (int r = 0; r < batch; ++r) {
        std::copy(rows[r].begin(), rows[r].end(),
                  inputs.begin() + static_cast<std::ptrdiff_t>(r) * in);
    }
    std::vector<double> outputs(static_cast<std::size_t>(batch) * out);
    hq::Workspace ws = hq::make_workspace(model);
    hq::compressed_forward(model, inputs, batch, outputs, ws);

    std::string csv;
    for (int r = 0; r < batch; ++r) {
        for (int c = 0; c < out; ++c) {
            if (c > 0) csv += ',';
            csv += format_full(outputs[static_cast<std::size_t>(r) * out + c]);
        }
        csv += '\n';
    }
    const fs::path dir = prepare_out_dir(flags.out_dir);
    write_file(dir / "outputs.csv", csv);
    write_manifest(dir, "run",
                   {{"model", model_path},
                    {"input", input_path},
                    {"rows", std::to_string(batch)},
                    {"outputs", "outputs.csv"}},
                   nullptr);
    std::cout << "wrote " << batch << " output rows to " << (dir / "outputs.csv").string()
              << "\n";
    return 0;
}

int cmd_bench(const std::vector<std::string>& model_paths, int batch, int repeats, int warmup,
              const GlobalFlags& flags) {
    if (model_paths.size() < 2) {
        throw hq::ConfigError("bench needs at least two --model files");
    }
    std::vector<hq::Model> models;
    models.reserve(model_paths.size());
    for (const std::string& p : model_paths) models.push_back(hq::load_model(p));

    hq::BenchConfig bc;
    bc.batch = batch;
    bc.repeats = repeats;
    bc.warmup = warmup;
    bc.seed = flags.seed.value_or(bc.seed);
    const std::vector<hq::BenchRow> rows = hq::bench_iso_latency(models, bc);

    double lo = rows.front().median_us, hi = rows.front().median_us;
    for (const hq::BenchRow& r : rows) {
        lo = std::min(lo, r.median_us);
        hi = std::max(hi, r.median_us);
        std::cout << "G=" << r.grid_size << ": median " << format3(r.median_us)
                  << " us, IQR [" << format3(r.p25_us) << ", " << format3(r.p75_us) << "]\n";
    }
    std::cout << "max/min median ratio: " << format3(hi / lo) << "\n";

    const fs::path dir = prepare_out_dir(flags.out_dir);
    write_file(dir / "bench.csv", hq::bench_csv(rows));
    std::string paths_joined;
    for (const std::string& p : model_paths) {
        if (!paths_joined.empty()) paths_joined += ' ';
        paths_joined += p;
    }
    write_manifest(dir, "bench",
                   {{"models", paths_joined},
                    {"batch", std::to_string(batch)},
                    {"repeats", std::to_string(repeats)},
                    {"warmup", std::to_string(warmup)},
                    {"seed", std::to_string(bc.seed)},
                    {"outputs", "bench.csv"}},
                   nullptr);
    return 0;
}

void spectrum_summary(std::string& out, const char* name, const hq::SpectrumReport& rep) {
    const int n = static_cast<int>(rep.singular_values.size());
    if (!rep.cumulative_fraction.empty() && rep.cumulative_fraction.front() >= 1.0 - 1e-9) {
        out += std::string(name) + ": rank-1: 100.0% at r=1\n";
    }
    out += std::string(name) + ": 90% variance at rank " + std::to_string(rep.rank_90) +
           " of " + std::to_string(n) + ", 94% at " + std::to_string(rep.rank_94) +
           ", 99% at " + std::to_string(rep.rank_99) + "\n";
}

int cmd_analyze(const std::string& model_path, const std::string& mode,
                const std::string& config_path, int restarts, const GlobalFlags& flags) {
    const hq::Model model = hq::load_model(model_path);
    const hq::KanNetwork dense = hq::to_dense_network(model);
    const fs::path dir = prepare_out_dir(flags.out_dir);
    const std::uint64_t seed = flags.seed.value_or(0);
    std::string summary;

    if (mode == "spectrum") {
        const hq::Matrix raw = hq::stack_coefficients(dense);
        const hq::SpectrumReport rep_raw = hq::svd_spectrum(raw);
        const hq::SpectrumReport rep_centered = hq::svd_spectrum(hq::center_rows(raw));
        write_file(dir / "spectrum.csv", hq::spectrum_csv(rep_raw));
        write_file(dir / "spectrum_centered.csv", hq::spectrum_csv(rep_centered));
        spectrum_summary(summary, "raw", rep_raw);
        spectrum_summary(summary, "centered", rep_centered);
        write_file(dir / "summary.txt", summary);
        write_manifest(dir, "analyze",
                       {{"model", model_path},
                        {"mode", mode},
                        {"outputs", "spectrum.csv spectrum_centered.csv summary.txt"}},
                       nullptr);
        std::cout << summary;
        return 0;
    }

    if (config_path.empty()) {
        throw hq::ConfigError("mode '" + mode + "' needs --config with a [task] section");
    }
    const hq::Config cfg = hq::Config::load(config_path);
    const hq::SyntheticTask task = task_from_config(cfg);
    if (task.input_dim != dense.input_dim()) {
        throw hq::ShapeError("task input_dim does not match the model");
    }
    const hq::Dataset test = test_dataset(task);
    const double baseline = hq::evaluate_mse(dense, test);

    if (mode == "prune-sweep") {
        const std::vector<double> sparsities = cfg.number_list("analyze", "sparsities");
        const hq::SweepCurve curve = hq::pruning_sweep(dense, test, sparsities, task.seed);
        write_file(dir / "sweep.csv", hq::sweep_csv(curve));
        summary += "baseline test MSE: " + format_full(baseline) + "\n";
        for (const hq::SweepPoint& p : curve.points) {
            summary += "sparsity " + format3(p.x) + ": MSE " + format_full(p.y) + " (" +
                       format3(p.y / baseline) + "x baseline)\n";
        }
        write_file(dir / "summary.txt", summary);
        write_manifest(dir, "analyze",
                       {{"model", model_path},
                        {"mode", mode},
                        {"config", config_path},
                        {"outputs", "sweep.csv summary.txt"}},
                       &cfg);
        std::cout << summary;
        return 0;
    }

    if (mode == "ablation") {
        const std::vector<std::int64_t> ks64 = cfg.integer_list("analyze", "ks");
        std::vector<int> ks(ks64.begin(), ks64.end());
        const hq::AblationResult ab = hq::codebook_ablation(dense, test, ks, restarts, seed);
        write_file(dir / "ablation_r2.csv", hq::sweep_csv(ab.r2));
        write_file(dir / "ablation_mse.csv", hq::sweep_csv(ab.mse_delta));
        for (const hq::SweepPoint& p : ab.r2.points) {
            summary += "K=" + std::to_string(static_cast<int>(p.x)) + ": R2 " +
                       format_full(p.y) + "\n";
        }
        if (ab.r2.points.size() >= 3) {
            const double first_gain = ab.r2.points[1].y - ab.r2.points[0].y;
            const double last_gain = ab.r2.points.back().y -
                                     ab.r2.points[ab.r2.points.size() - 2].y;
            summary += "first-step R2 gain: " + format_full(first_gain) + "\n";
            summary += "last-step R2 gain: " + format_full(last_gain) + "\n";
            summary += std::string("diminishing returns: ") +
                       (last_gain < first_gain ? "yes" : "no") + "\n";
        }
        write_file(dir / "summary.txt", summary);
        write_manifest(dir, "analyze",
                       {{"model", model_path},
                        {"mode", mode},
                        {"config", config_path},
                        {"restarts", std::to_string(restarts)},
                        {"seed", std::to_string(seed)},
                        {"outputs", "ablation_r2.csv ablation_mse.csv summary.txt"}},
                       &cfg);
        std::cout << summary;
        return 0;
    }

    if (mode == "prune-vs-vq") {
        const std::vector<std::int64_t> budgets64 = cfg.integer_list("analyze", "budgets");
        std::vector<std::uint64_t> budgets;
        for (std::int64_t b : budgets64) {
            if (b < 1) throw hq::ConfigError("entries of 'budgets' must be positive");
            budgets.push_back(static_cast<std::uint64_t>(b));
        }
        const hq::ComparisonReport rep =
            hq::pruning_vs_vq(dense, test, budgets, restarts, seed);
        write_file(dir / "comparison.csv", hq::comparison_csv(rep));
        int wins = 0;
        for (const hq::BudgetPoint& p : rep.points) {
            if (p.vq_mse < p.prune_mse) ++wins;
            summary += "budget " + std::to_string(p.budget_bits) + " bits: prune MSE " +
                       format_full(p.prune_mse) + " (sparsity " + format3(p.sparsity) +
                       "), VQ MSE " + format_full(p.vq_mse) + " (K=" + std::to_string(p.k) +
                       ")\n";
        }
        summary += "VQ wins at " + std::to_string(wins) + " of " +
                   std::to_string(rep.points.size()) + " matched budgets\n";
        write_file(dir / "summary.txt", summary);
        write_manifest(dir, "analyze",
                       {{"model", model_path},
                        {"mode", mode},
                        {"config", config_path},
                        {"restarts", std::to_string(restarts)},
                        {"seed", std::to_string(seed)},
                        {"outputs", "comparison.csv summary.txt"}},
                       &cfg);
        std::cout << summary;
        return 0;
    }

    throw hq::ConfigError("unknown mode '" + mode +
                          "' (expected spectrum, prune-sweep, ablation, or prune-vs-vq)");
}

int cmd_inspect(const std::string& model_path) {
    const hq::Model model = hq::load_model(model_path);
    const hq::ModelHeader header = model.header();
    const hq::MemoryPlan plan = hq::plan_memory(header);

    std::cout << "file: " << model_path << "\n";
    std::cout << "format: SKAN v" << header.version << ", " << header.layers.size()
              << " layer(s)\n";
    std::uint64_t dense_bytes = 0;
    bool any_compressed = false;
    for (std::size_t l = 0; l < header.layers.size(); ++l) {
        const hq::LayerHeader& h = header.layers[l];
        const hq::LayerPlan& lp = plan.layers[l];
        dense_bytes += h.edge_count() * h.grid_size * 4;
        std::cout << "layer " << l << ": " << h.in_dim << " -> " << h.out_dim
                  << ", G=" << h.grid_size << ", E=" << group_digits(h.edge_count());
        if (h.dense()) {
            std::cout << ", dense float32\n";
            std::cout << "  coefficients: " << group_digits(lp.codebook_bytes) << " B\n";
            continue;
        }
        any_compressed = true;
        std::cout << ", K=" << group_digits(h.k) << (h.int8() ? ", int8" : ", float32")
                  << "\n";
        std::cout << "  codebook: " << group_digits(lp.codebook_bytes) << " B\n";
        std::cout << "  indices: " << group_digits(lp.index_bytes) << " B packed ("
                  << hq::index_bits(h.k) << " bits/edge), "
                  << group_digits(lp.unpacked_index_bytes) << " B unpacked\n";
        std::cout << "  gains: " << group_digits(lp.gain_bytes) << " B, biases: "
                  << group_digits(lp.bias_bytes) << " B\n";
        if (h.int8()) {
            std::cout << "  quant: codebook scale " << format_full(h.codebook_scale)
                      << ", gain log_min " << format_full(h.gain_log_min) << ", log_step "
                      << format_full(h.gain_log_step) << ", bias scale "
                      << format_full(h.bias_scale) << "\n";
        }
    }
    std::cout << "scratch: " << group_digits(plan.scratch_bytes) << " B\n";
    std::cout << "file payload: " << group_digits(plan.payload_total) << " B\n";
    std::cout << "working set: " << group_digits(plan.working_set_total) << " B\n";
    if (!any_compressed) {
        std::cout << "ratio: uncompressed\n";
    } else {
        std::cout << "dense runtime equivalent: " << group_digits(dense_bytes) << " B\n";
        std::cout << "compression ratio: "
                  << format3(static_cast<double>(dense_bytes) /
                             static_cast<double>(plan.payload_total))
                  << "x (file payload), "
                  << format3(static_cast<double>(dense_bytes) /
                             static_cast<double>(plan.working_set_total))
                  << "x (working set)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spline-network vector-quantization toolkit"};
    app.require_subcommand(1);

    GlobalFlags flags;
    std::optional<std::int64_t> seed_opt;

    std::string config_path, model_path, input_path, mode;
    std::vector<std::string> model_paths;
    int k = 16, restarts = 3, iters = 50, vq_batch = 4096;
    bool int8 = false;
    int bench_batch = 64, repeats = 101, warmup = 10;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed_opt, "seed override");
        cmd->add_option("--out-dir", flags.out_dir, "output directory");
    };

    CLI::App* train = app.add_subcommand("train", "train a dense spline network");
    train->add_option("--config", config_path, "config file")->required();
    add_common(train);

    CLI::App* compress = app.add_subcommand("compress", "vector-quantize a dense model");
    compress->add_option("--model", model_path, "input model file")->required();
    compress->add_option("--k", k, "codebook size");
    compress->add_option("--restarts", restarts, "k-means restarts");
    compress->add_option("--iters", iters, "k-means iterations");
    compress->add_option("--batch", vq_batch, "k-means mini-batch threshold");
    compress->add_flag("--int8", int8, "quantize codebook/gains/biases to int8");
    add_common(compress);

    CLI::App* run = app.add_subcommand("run", "evaluate a model on CSV inputs");
    run->add_option("--model", model_path, "model file")->required();
    run->add_option("--input", input_path, "input CSV")->required();
    add_common(run);

    CLI::App* bench = app.add_subcommand("bench", "latency comparison across grid sizes");
    bench->add_option("--model", model_paths, "model files (repeat)")->required();
    bench->add_option("--batch", bench_batch, "batch size per timed call");
    bench->add_option("--repeats", repeats, "timed repetitions");
    bench->add_option("--warmup", warmup, "warmup calls");
    add_common(bench);

    CLI::App* analyze = app.add_subcommand("analyze", "diagnostic studies");
    analyze->add_option("--model", model_path, "model file")->required();
    analyze->add_option("--mode", mode, "spectrum|prune-sweep|ablation|prune-vs-vq")
        ->required();
    analyze->add_option("--config", config_path, "task/analysis config");
    analyze->add_option("--restarts", restarts, "k-means restarts");
    add_common(analyze);

    CLI::App* inspect = app.add_subcommand("inspect", "dump model header and memory plan");
    inspect->add_option("--model", model_path, "model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (seed_opt.has_value()) {
        flags.seed = static_cast<std::uint64_t>(*seed_opt);
    }

    try {
        if (train->parsed()) return cmd_train(config_path, flags);
        if (compress->parsed()) {
            return cmd_compress(model_path, k, restarts, iters, vq_batch, int8, flags);
        }
        if (run->parsed()) return cmd_run(model_path, input_path, flags);
        if (bench->parsed()) {
            return cmd_bench(model_paths, bench_batch, repeats, warmup, flags);
        }
        if (analyze->parsed()) {
            return cmd_analyze(model_path, mode, config_path, restarts, flags);
        }
        if (inspect->parsed()) return cmd_inspect(model_path);
    } catch (const hq::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const hq::FormatError& e) {
        std::cerr << "model file error: " << e.what() << "\n";
        return 2;
    } catch (const hq::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 2;
    } catch (const hq::ShapeError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const hq::ValueError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 3;
}
