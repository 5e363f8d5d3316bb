// Command-line pipeline driver: dataset generation, training, architecture
// sweeps, evaluation and timing benchmarks, all steered by one JSON config.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include <scsurro/config.hpp>

namespace fs = std::filesystem;
using namespace scsurro;

namespace {

// distinct exit codes per failure class
constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_data = 3;
constexpr int exit_divergence = 4;
constexpr int exit_solver = 5;

struct CommonOptions {
    std::string config_path = "configs/desk.json";
    std::string out_dir;
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool deterministic = false;
    bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "pipeline config file")
        ->capture_default_str();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config and env)");
    cmd->add_option("--jobs", opts.jobs, "worker count for per-config solver runs")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", opts.seed, "override the first training seed")
        ->each([&](const std::string&) { opts.seed_set = true; });
    cmd->add_flag("--deterministic", opts.deterministic,
                  "single-threaded reference mode with bit-stable outputs");
    cmd->add_flag("--dry-run", opts.dry_run, "print the plan without writing anything");
}

fs::path resolve_out_dir(const PipelineConfig& config, const CommonOptions& opts) {
    if (!opts.out_dir.empty()) return opts.out_dir;
    if (const char* env = std::getenv("SCSURRO_OUT_DIR"); env && *env) return env;
    return config.out_dir;
}

std::string dataset_path(const fs::path& out, const std::string& split) {
    return (out / ("dataset_" + split + ".sfds")).string();
}

SolenoidConfig with_size(SolenoidConfig base, const SplitConfig& size) {
    base.n_turns = size.n_turns;
    base.n_pancakes_half = size.n_pancakes;
    return base;
}

CurrentDensityHistory solve_config(const PipelineConfig& config, const SplitConfig& size) {
    const SolenoidConfig geo = with_size(config.geometry, size);
    auto mesh = discretize(build_solenoid(geo), config.mesh_resolution());
    return RampSolver(mesh, config.power_law).solve_ramp(config.snapshot_times());
}

// Ordered parallel map over configs; output order is independent of thread
// scheduling, so --jobs does not perturb the written bytes.
template <typename F>
void parallel_for(std::size_t count, int jobs, F&& body) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n_workers = std::min<int>(jobs, static_cast<int>(count));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1))
                    body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

int cmd_generate(const PipelineConfig& config, const CommonOptions& opts) {
    const fs::path out = resolve_out_dir(config, opts);
    auto manifests =
        build_splits(config.split_plan(), config.geometry, config.snapshot_times(),
                     config.points_per_tape);

    const std::size_t rows_per_point =
        config.snapshot_times().size();   // one row per element per snapshot
    if (opts.dry_run) {
        for (const auto& m : manifests) {
            std::size_t rows = 0;
            for (const auto& c : m.configs)
                rows += static_cast<std::size_t>(c.n_turns) *
                        static_cast<std::size_t>(c.n_pancakes) *
                        static_cast<std::size_t>(config.points_per_tape) * rows_per_point;
            std::cout << m.split << ": " << m.configs.size() << " configs, ~" << rows
                      << " rows -> " << dataset_path(out, m.split) << "\n";
        }
        return exit_ok;
    }

    fs::create_directories(out);
    const int jobs = opts.deterministic ? 1 : opts.jobs;
    nlohmann::json index;
    for (const auto& manifest : manifests) {
        std::vector<std::vector<SampleRecord>> per_config(manifest.configs.size());
        std::atomic<bool> logged_failure{false};
        parallel_for(manifest.configs.size(), jobs, [&](std::size_t i) {
            const auto& size = manifest.configs[i];
            try {
                auto history = solve_config(config, size);
                per_config[i] =
                    sample_history(history, config.power_law, manifest.normalization);
            } catch (const std::exception& e) {
                if (!logged_failure.exchange(true))
                    std::cerr << "solver failed on (N=" << size.n_turns
                              << ", Np=" << size.n_pancakes << "): " << e.what() << "\n";
                throw;
            }
        });
        std::vector<SampleRecord> records;
        for (auto& part : per_config)
            records.insert(records.end(), part.begin(), part.end());
        const std::string path = dataset_path(out, manifest.split);
        write_dataset(records, manifest, path);
        std::cout << manifest.split << ": " << records.size() << " rows -> " << path << "\n";
        index[manifest.split] = {{"path", path}, {"rows", records.size()}};
    }
    std::ofstream((out / "dataset_index.json").string()) << index.dump(2) << "\n";
    return exit_ok;
}

TrainMatrix load_split(const fs::path& out, const std::string& split) {
    return to_matrix(read_dataset(dataset_path(out, split)).records);
}

void emit_run_artifacts(const TrainRun& run, const fs::path& out, const std::string& stem) {
    std::ofstream((out / (stem + ".json")).string()) << nlohmann::json(run).dump(2) << "\n";
    std::ofstream csv((out / (stem + "_loss.csv")).string());
    write_loss_curve_csv(run, csv);

    std::vector<double> x, tr, va;
    for (const auto& e : run.epochs) {
        x.push_back(e.epoch);
        tr.push_back(e.train_loss);
        va.push_back(e.val_loss);
    }
    if (x.size() >= 2) {
        std::ofstream svg((out / (stem + "_loss.svg")).string());
        write_svg_line_plot(svg, x, {{"train", tr}, {"val", va}}, "loss vs epoch", true);
    }
}

int cmd_train(const PipelineConfig& config, const CommonOptions& opts,
              const std::string& resume_path) {
    const fs::path out = resolve_out_dir(config, opts);
    const NetworkArch arch = config.archs.front();
    TrainHyper hyper = config.hyper;
    hyper.seed = opts.seed_set ? opts.seed : config.seeds.front();

    if (opts.dry_run) {
        std::cout << "train: 1 run, arch hidden=" << arch.hidden << " depth=" << arch.depth
                  << ", seed " << hyper.seed << ", <= " << hyper.max_epochs << " epochs\n";
        return exit_ok;
    }

    TrainMatrix tr = load_split(out, "train");
    TrainMatrix val = load_split(out, "interp_val");

    NetworkParams initial;
    const NetworkParams* initial_ptr = nullptr;
    if (!resume_path.empty()) {
        initial = load_params(resume_path, arch);   // rejects a mismatched header
        initial_ptr = &initial;
    }

    auto result = train(arch, tr, val, hyper, config.target_train_loss, initial_ptr);
    fs::create_directories(out);
    save_params(arch, result.params, (out / "model.sfnn").string());
    emit_run_artifacts(result.run, out, "train_run");
    std::cout << "status " << to_string(result.run.status) << ", best train "
              << result.run.best_train_loss << ", best val " << result.run.best_val_loss
              << " at epoch " << result.run.best_epoch << "\n";
    return result.run.status == TrainStatus::diverged ? exit_divergence : exit_ok;
}

int cmd_sweep(const PipelineConfig& config, const CommonOptions& opts) {
    const fs::path out = resolve_out_dir(config, opts);
    if (opts.dry_run) {
        std::cout << "sweep: " << config.archs.size() * config.seeds.size() << " runs ("
                  << config.archs.size() << " archs x " << config.seeds.size() << " seeds)\n";
        return exit_ok;
    }
    TrainMatrix tr = load_split(out, "train");
    TrainMatrix val = load_split(out, "interp_val");
    fs::create_directories(out);

    SweepReport report;
    bool any_diverged = false;
    for (std::size_t a = 0; a < config.archs.size(); ++a) {
        for (std::uint64_t seed : config.seeds) {
            SweepEntry entry;
            entry.arch = config.archs[a];
            entry.seed = seed;
            TrainHyper hyper = config.hyper;
            hyper.seed = seed;
            try {
                auto result =
                    train(entry.arch, tr, val, hyper, config.target_train_loss);
                entry.run = result.run;
                entry.failed = result.run.status == TrainStatus::diverged ||
                               result.run.status == TrainStatus::degenerate;
                if (entry.failed) entry.error = to_string(result.run.status);
                any_diverged |= result.run.status == TrainStatus::diverged;
                const std::string name =
                    "ckpt_a" + std::to_string(a) + "_s" + std::to_string(seed) + ".sfnn";
                save_params(entry.arch, result.params, (out / name).string());
            } catch (const std::exception& e) {
                entry.failed = true;
                entry.error = e.what();
            }
            std::cout << "arch " << a << " seed " << seed << ": "
                      << (entry.failed ? entry.error : "ok") << "\n";
            report.entries.push_back(std::move(entry));
        }
    }
    std::ofstream((out / "sweep_report.json").string())
        << nlohmann::json(report).dump(2) << "\n";
    return any_diverged ? exit_divergence : exit_ok;
}

int cmd_eval(const PipelineConfig& config, const CommonOptions& opts) {
    const fs::path out = resolve_out_dir(config, opts);
    if (opts.dry_run) {
        std::cout << "eval: 5 splits, " << config.eval_configs.size()
                  << " loss-surface configs\n";
        return exit_ok;
    }
    auto ckpt = load_params((out / "model.sfnn").string());
    const Normalization nz = make_normalization(config.geometry);

    EvalReport report;
    for (const std::string split :
         {"train", "interp_val", "extrap_N", "extrap_Np", "extrap_both"}) {
        auto records = read_dataset(dataset_path(out, split)).records;
        report.split_losses.emplace_back(
            split, eval_split(ckpt.arch, ckpt.params, records, config.hyper.eval_batch_size));
    }

    std::vector<CurrentDensityHistory> histories;
    for (const auto& size : config.eval_configs) histories.push_back(solve_config(config, size));
    report.loss_surface =
        loss_error_surface(ckpt.arch, ckpt.params, histories, config.power_law, nz);

    if (!histories.empty()) {
        // thresholded error map on the first eval config's final snapshot
        const auto& solved = histories.front();
        auto pred = predict_field(ckpt.arch, ckpt.params, solved.mesh, solved.times, nz,
                                  config.power_law);
        auto map = relative_error_map(pred.history.current_density.back(),
                                      solved.current_density.back(), config.power_law.J_c,
                                      config.error_threshold);
        report.error_map_max = map.max_error;
        report.error_map_mean = map.mean_error;

        std::ofstream csv((out / "error_map.csv").string());
        csv << "element,rel_error\n";
        for (std::size_t i = 0; i < map.errors.size(); ++i)
            csv << map.indices[i] << ',' << map.errors[i] << '\n';
        if (!map.empty()) {
            std::ofstream svg((out / "error_map.svg").string());
            write_svg_heatmap(svg, map.errors, static_cast<int>(map.errors.size()),
                              "thresholded relative error");
        }
    }

    std::ofstream((out / "eval_report.json").string())
        << nlohmann::json(report).dump(2) << "\n";
    std::ofstream surface_csv((out / "loss_surface.csv").string());
    write_loss_surface_csv(report.loss_surface, surface_csv);
    for (const auto& [split, loss] : report.split_losses)
        std::cout << split << " MSE " << loss << "\n";
    return exit_ok;
}

int cmd_bench(const PipelineConfig& config, const CommonOptions& opts) {
    const fs::path out = resolve_out_dir(config, opts);
    if (opts.dry_run) {
        std::cout << "bench: (N=" << config.bench_config.n_turns
                  << ", Np=" << config.bench_config.n_pancakes << "), "
                  << config.bench_repetitions << " repetitions\n";
        return exit_ok;
    }
    auto ckpt = load_params((out / "model.sfnn").string());
    auto row = timing_benchmark(ckpt.arch, ckpt.params,
                                with_size(config.geometry, config.bench_config),
                                config.snapshot_times(), config.bench_resolution(),
                                config.power_law, config.bench_repetitions);
    std::ofstream((out / "bench.json").string()) << nlohmann::json(row).dump(2) << "\n";
    std::cout << "solver " << row.solver_seconds << " s, surrogate " << row.surrogate_seconds
              << " s, speedup " << row.speedup << "x (" << row.query_rows << " rows)\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"solenoid current-density surrogate pipeline"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string resume_path;

    auto* generate = app.add_subcommand("generate", "run the solver and write datasets");
    auto* train_cmd = app.add_subcommand("train", "train one model on the generated datasets");
    auto* sweep = app.add_subcommand("sweep", "train every configured arch x seed");
    auto* eval = app.add_subcommand("eval", "split losses, error maps and loss surfaces");
    auto* bench = app.add_subcommand("bench", "time the solver against the surrogate");
    for (auto* cmd : {generate, train_cmd, sweep, eval, bench}) add_common(cmd, opts);
    train_cmd->add_option("--resume", resume_path, "warm-start from a checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    try {
        const PipelineConfig config = load_pipeline_config(opts.config_path);
        if (generate->parsed()) return cmd_generate(config, opts);
        if (train_cmd->parsed()) return cmd_train(config, opts, resume_path);
        if (sweep->parsed()) return cmd_sweep(config, opts);
        if (eval->parsed()) return cmd_eval(config, opts);
        if (bench->parsed()) return cmd_bench(config, opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const StepFailure& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return exit_solver;
    } catch (const DatasetError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const NetworkError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    }
    return exit_ok;
}
