// Acceptance gate: twelve end-to-end checks covering gradient correctness,
// solver physics, the desk-scale training pipeline, extrapolation quality,
// speedup and reproducibility. One PASS/FAIL line per criterion; the process
// exits nonzero if any criterion fails.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <scsurro/config.hpp>

namespace fs = std::filesystem;
using namespace scsurro;

namespace {

int n_failed = 0;

void report(int criterion, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << criterion << ". " << name << ": " << detail
              << "\n";
    std::cout.flush();
    if (!ok) ++n_failed;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------- criterion 1

double loss_of(const NetworkArch& arch, const NetworkParams& params, const Eigen::MatrixXd& X,
               const Eigen::MatrixXd& Y) {
    return mse(forward(arch, params, X), Y);
}

// Worst relative deviation between analytic and central-difference gradients
// over every parameter entry of the network.
double worst_gradient_deviation(const NetworkArch& arch, std::uint64_t seed) {
    // unit-scale random weights keep every layer's gradient well above the
    // finite-difference noise floor, unlike the fan-scaled init of a deep net
    NetworkParams params = init_params(arch, seed);
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> w(-0.7, 0.7);
    for (auto& layer : params.layers) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = w(rng);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = w(rng);
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd X(32, arch.input_dim), Y(32, arch.output_dim);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        for (Eigen::Index c = 0; c < X.cols(); ++c) X(r, c) = u(rng);
        for (Eigen::Index c = 0; c < Y.cols(); ++c) Y(r, c) = u(rng);
    }

    ForwardCache cache;
    Eigen::MatrixXd pred = forward(arch, params, X, &cache);
    Eigen::MatrixXd dloss;
    mse(pred, Y, &dloss);
    Gradients grads = backward(arch, params, cache, dloss);

    const double h = 1e-6;
    double worst = 0.0;
    auto fd_check = [&](double& entry, double analytic) {
        const double saved = entry;
        entry = saved + h;
        const double up = loss_of(arch, params, X, Y);
        entry = saved - h;
        const double down = loss_of(arch, params, X, Y);
        entry = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
                fd_check(layer.weight(r, c), grads.layers[l].weight(r, c));
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            fd_check(layer.bias[i], grads.layers[l].bias[i]);
    }
    return worst;
}

void criterion_1() {
    const NetworkArch residual{NetworkArch::Kind::residual, 6, 1, 16, 3};
    const NetworkArch plain{NetworkArch::Kind::plain, 6, 1, 16, 6};
    const double a = worst_gradient_deviation(residual, 11);
    const double b = worst_gradient_deviation(plain, 13);
    report(1, "gradient oracle", a < 1e-5 && b < 1e-5,
           "worst relative deviation residual " + fmt(a) + ", plain " + fmt(b) +
               " (tolerance 1e-5)");
}

// ---------------------------------------------------------------- criterion 2

void criterion_2() {
    const NetworkArch arch{NetworkArch::Kind::residual, 6, 1, 16, 3};
    NetworkParams params = init_params(arch, 5);
    for (int b = 0; b < arch.depth; ++b) {
        auto& lin2 = params.layers[static_cast<std::size_t>(2 * b + 2)];
        lin2.weight.setZero();
        lin2.bias.setZero();
    }
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd X(16, arch.input_dim);
    for (Eigen::Index r = 0; r < X.rows(); ++r)
        for (Eigen::Index c = 0; c < X.cols(); ++c) X(r, c) = u(rng);

    const Eigen::MatrixXd trunk = residual_trunk_output(arch, params, X);
    const Eigen::MatrixXd projection =
        (X * params.layers[0].weight.transpose()).rowwise() +
        params.layers[0].bias.transpose();
    const bool exact = (trunk.array() == projection.array()).all();
    report(2, "residual identity", exact,
           exact ? "zeroed blocks reproduce the input projection bitwise"
                 : "trunk deviates from the input projection");
}

// ---------------------------------------------------------------- criterion 3

void criterion_3() {
    // manual stepping: the per-tape constraint must hold after every step
    SolenoidConfig c;
    c.n_turns = 2;
    c.n_pancakes_half = 2;
    auto mesh = discretize(build_solenoid(c), 0.5e-3);
    RampSolver solver(mesh, PowerLawParams{});
    auto state = solver.initial_state();
    double t = 0.0, worst = 0.0;
    bool all_converged = true;
    for (int s = 0; s < 20; ++s) {
        t += 5e-3;
        const double target = c.ramp_rate * t;
        all_converged &= solver.step(state, 5e-3, target).converged;
        auto sums = solver.tapeSums(state.currents);
        for (Eigen::Index i = 0; i < sums.size(); ++i)
            worst = std::max(worst, std::abs(sums[i] - target) / target);
    }

    // adaptive ramp: worst accepted-step violation is tracked by the solver
    SolenoidConfig d;
    d.n_turns = 4;
    d.n_pancakes_half = 2;
    auto ramp = RampSolver(discretize(build_solenoid(d), 0.2e-3), PowerLawParams{})
                    .solve_ramp({0.25, 0.5, 0.75, 1.0});
    worst = std::max(worst, ramp.max_constraint_rel_error);
    report(3, "solver conservation", all_converged && worst <= 1e-8,
           "worst per-turn current violation " + fmt(worst) + " (tolerance 1e-8)");
}

// ---------------------------------------------------------------- criterion 4

// Critical-state solution for a thin strip at transport current I = F * Ic:
// |J| = Jc outside |x| < b = a sqrt(1 - F^2), arctangent profile inside.
double bean_strip_profile(double x, double a, double F, double Jc) {
    const double b = a * std::sqrt(1.0 - F * F);
    const double ax = std::abs(x);
    if (ax >= b) return Jc;
    return 2.0 * Jc / M_PI * std::atan(std::sqrt((a * a - b * b) / (b * b - ax * ax)));
}

void criterion_4() {
    // single tape, r/w = 50; Ic = 200 A so the 50 A ramp ends at 0.25 Ic; the
    // fast ramp puts the front electric field near the criterion Ec where the
    // n = 21 law approximates the critical state
    SolenoidConfig c;
    c.inner_radius = 0.2 - 0.5 * c.tape_thickness;
    c.n_turns = 1;
    c.n_pancakes_half = 1;
    c.ramp_rate = 3000.0;
    auto mesh = discretize(build_solenoid(c), 0.05e-3);
    PowerLawParams p;
    auto history = RampSolver(mesh, p, MirrorImages::off).solve_ramp({c.ramp_duration()});

    const double a = 0.5 * c.tape_width;
    const double z_mid = 0.5 * (mesh.elements.front().loop_z + mesh.elements.back().loop_z);
    const Eigen::VectorXd& J = history.current_density.back();
    double worst = 0.0;
    int checked = 0;
    for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
        const double ref =
            bean_strip_profile(mesh.elements[i].loop_z - z_mid, a, 0.25, p.J_c);
        if (ref >= 0.95 * p.J_c) {   // penetrated region
            worst = std::max(
                worst, std::abs(std::abs(J[static_cast<Eigen::Index>(i)]) - ref) / ref);
            ++checked;
        }
    }
    report(4, "analytic strip oracle", checked >= 4 && worst < 0.05,
           "worst deviation over " + std::to_string(checked) + " penetrated points " +
               fmt(worst) + " (tolerance 0.05)");
}

// ---------------------------------------------------------------- criterion 5

void criterion_5() {
    SolenoidConfig c;
    c.n_turns = 2;
    c.n_pancakes_half = 1;
    auto quarter = discretize(build_solenoid(c), 0.4e-3);
    PowerLawParams p;
    auto hq = RampSolver(quarter, p, MirrorImages::on).solve_ramp({0.5});

    ElementMesh full = quarter;
    for (const auto& e : quarter.elements) {
        MeshElement m = e;
        m.loop_z = -e.loop_z;
        m.pancake = -e.pancake;
        m.support_lo = -e.support_hi;
        m.support_hi = -e.support_lo;
        full.elements.push_back(m);
    }
    auto hf = RampSolver(full, p, MirrorImages::off).solve_ramp({0.5});

    const auto n = static_cast<Eigen::Index>(quarter.elements.size());
    const double scale = hq.current_density[0].cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        worst = std::max(worst,
                         std::abs(hf.current_density[0][i] - hq.current_density[0][i]));
        worst = std::max(
            worst, std::abs(hf.current_density[0][n + i] - hq.current_density[0][i]));
    }
    report(5, "mirror-symmetry oracle", worst < 1e-6 * scale,
           "worst relative element mismatch " + fmt(worst / scale) + " (tolerance 1e-6)");
}

// ---------------------------------------------------------------- criterion 6

void criterion_6(const PipelineConfig& config) {
    // time-step self-convergence at the desk reference magnet (N=12, Np=2):
    // halving the maximum backward-Euler step must not move the loss; the
    // snapshot grid (and therefore the quadrature) is held fixed
    SolenoidConfig c = config.geometry;
    auto mesh = discretize(build_solenoid(c), config.mesh_resolution());
    const double T = c.ramp_duration();
    const auto times = config.snapshot_times();

    SolverOptions coarse_opts, fine_opts;
    coarse_opts.dt_max = T / 200.0;
    fine_opts.dt_max = T / 400.0;
    auto coarse = RampSolver(mesh, config.power_law, MirrorImages::on, coarse_opts)
                      .solve_ramp(times);
    auto fine = RampSolver(mesh, config.power_law, MirrorImages::on, fine_opts)
                    .solve_ramp(times);
    const double q_coarse = magnetization_loss(coarse, config.power_law);
    const double q_fine = magnetization_loss(fine, config.power_law);
    const double change = std::abs(q_fine - q_coarse) / q_fine;
    report(6, "dissipation", q_coarse >= 0.0 && q_fine >= 0.0 && change < 0.01,
           "loss " + fmt(q_coarse) + " J >= 0, dt-halving change " + fmt(change) +
               " (tolerance 0.01)");
}

// ------------------------------------------------------- criteria 7, 8, 9, 12

struct PipelineArtifacts {
    std::map<std::string, std::vector<SampleRecord>> splits;
    std::vector<CurrentDensityHistory> extrap_histories;
    TrainResult result;
    NetworkArch arch;
};

PipelineArtifacts run_desk_pipeline(const PipelineConfig& config) {
    PipelineArtifacts art;
    auto manifests = build_splits(config.split_plan(), config.geometry,
                                  config.snapshot_times(), config.points_per_tape);
    for (const auto& manifest : manifests) {
        std::vector<SampleRecord> records;
        for (const auto& size : manifest.configs) {
            SolenoidConfig geo = config.geometry;
            geo.n_turns = size.n_turns;
            geo.n_pancakes_half = size.n_pancakes;
            auto mesh = discretize(build_solenoid(geo), config.mesh_resolution());
            auto history =
                RampSolver(mesh, config.power_law).solve_ramp(config.snapshot_times());
            auto part = sample_history(history, config.power_law, manifest.normalization);
            records.insert(records.end(), part.begin(), part.end());
            if (manifest.split.rfind("extrap", 0) == 0)
                art.extrap_histories.push_back(std::move(history));
        }
        art.splits[manifest.split] = std::move(records);
    }

    art.arch = config.archs.front();
    TrainHyper hyper = config.hyper;
    hyper.seed = config.seeds.front();
    art.result = train(art.arch, to_matrix(art.splits.at("train")),
                       to_matrix(art.splits.at("interp_val")), hyper,
                       config.target_train_loss);
    return art;
}

void criterion_7(const PipelineArtifacts& art, const PipelineConfig& config) {
    const TrainRun& run = art.result.run;
    const bool trained =
        run.best_train_loss <= 1e-4 && run.best_epoch < config.hyper.max_epochs;
    const bool val_close = run.best_val_loss <= 100.0 * run.best_train_loss;
    report(7, "desk-scale training", trained && val_close,
           "best train MSE " + fmt(run.best_train_loss) + " (<= 1e-4) at epoch " +
               std::to_string(run.best_epoch) + ", val/train ratio " +
               fmt(run.best_val_loss / run.best_train_loss) + " (<= 100)");
}

void criterion_8(const PipelineArtifacts& art) {
    std::map<std::string, double> losses;
    for (const auto& [split, records] : art.splits)
        losses[split] = eval_split(art.arch, art.result.params, records);
    const double tr = losses.at("train");
    const double in = losses.at("interp_val");
    const double ex = std::min({losses.at("extrap_N"), losses.at("extrap_Np"),
                                losses.at("extrap_both")});
    report(8, "loss ordering", tr <= in && in <= ex,
           "train " + fmt(tr) + " <= interp " + fmt(in) + " <= extrap (min) " + fmt(ex));
}

void criterion_9(const PipelineArtifacts& art, const PipelineConfig& config) {
    auto surface =
        loss_error_surface(art.arch, art.result.params, art.extrap_histories,
                           config.power_law, make_normalization(config.geometry));
    double worst = 0.0;
    std::string detail;
    for (const auto& entry : surface) {
        if (entry.excluded) continue;
        worst = std::max(worst, entry.rel_error);
        detail += "(N=" + std::to_string(entry.config.n_turns) +
                  ",Np=" + std::to_string(entry.config.n_pancakes) + ") " +
                  fmt(entry.rel_error) + "  ";
    }
    report(9, "magnetization-loss extrapolation", !surface.empty() && worst <= 0.15,
           "relative total-loss errors " + detail + "(tolerance 0.15)");
}

void criterion_12(const PipelineArtifacts& art) {
    const TrainRun& run = art.result.run;
    int saved = 0;
    for (const auto& e : run.epochs) saved += e.checkpointed ? 1 : 0;
    const bool ok = saved > 0 && audit_checkpoints(run);
    report(12, "dual-loss checkpointing", ok,
           std::to_string(saved) +
               " checkpoints, every one strictly improves both losses");
}

// --------------------------------------------------------------- criterion 10

void criterion_10(const PipelineArtifacts& art, const PipelineConfig& config) {
    SolenoidConfig geo = config.geometry;
    geo.n_turns = config.bench_config.n_turns;
    geo.n_pancakes_half = config.bench_config.n_pancakes;
    auto row = timing_benchmark(art.arch, art.result.params, geo, config.snapshot_times(),
                                config.bench_resolution(), config.power_law,
                                config.bench_repetitions);
    report(10, "speedup", row.speedup >= 1e3,
           "solver " + fmt(row.solver_seconds) + " s vs surrogate " +
               fmt(row.surrogate_seconds) + " s on " + std::to_string(row.query_rows) +
               " rows: " + fmt(row.speedup) + "x (>= 1e3)");
}

// --------------------------------------------------------------- criterion 11

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string(SCSURRO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path.string(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void criterion_11() {
    const fs::path dir = fs::temp_directory_path() / "scsurro_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // a reduced pipeline keeps the double run affordable; the code paths
    // exercised (solver, sampling, serialization, training) are the full ones
    nlohmann::json cfg = {
        {"geometry",
         {{"inner_radius", 10e-3},
          {"tape_width", 4e-3},
          {"tape_thickness", 0.1e-3},
          {"n_turns", 3},
          {"n_pancakes_half", 1},
          {"pancake_gap", 1e-3},
          {"op_current", 50.0},
          {"ramp_rate", 50.0},
          {"sc_layer_thickness", 1e-6}}},
        {"power_law", {{"E_c", 1e-4}, {"J_c", 5e10}, {"n_index", 21.0}}},
        {"plan", "custom"},
        {"custom_plan",
         {{"train", {{{"N", 2}, {"Np", 1}}, {{"N", 4}, {"Np", 1}}}},
          {"interp_val", {{{"N", 3}, {"Np", 1}}}},
          {"extrap_n", {{{"N", 5}, {"Np", 1}}}},
          {"extrap_np", {{{"N", 2}, {"Np", 2}}}},
          {"extrap_both", {{{"N", 5}, {"Np", 2}}}}}},
        {"points_per_tape", 5},
        {"snapshots", 3},
        {"archs",
         {{{"kind", "residual"},
           {"input_dim", 6},
           {"output_dim", 1},
           {"hidden", 8},
           {"depth", 2}}}},
        {"seeds", {7}},
        {"hyper",
         {{"batch_size", 16},
          {"eval_batch_size", 1024},
          {"max_epochs", 20},
          {"lr_initial", 1e-3},
          {"lr_factor", 0.6},
          {"lr_interval", 50}}},
        {"target_train_loss", -1.0},
        {"eval_configs", nlohmann::json::array()},
        {"out_dir", (dir / "out").string()}};
    const std::string cfg_path = (dir / "cfg.json").string();
    std::ofstream(cfg_path) << cfg.dump(2);

    bool ran = true;
    for (const char* sub : {"a", "b"}) {
        const std::string out = (dir / sub).string();
        ran &= run_cli("generate --deterministic --config " + cfg_path + " --out " + out) == 0;
        ran &= run_cli("train --deterministic --config " + cfg_path + " --out " + out) == 0;
    }
    bool identical = ran;
    for (const char* file : {"dataset_train.sfds", "dataset_interp_val.sfds",
                             "dataset_extrap_both.sfds", "model.sfnn",
                             "train_run_loss.csv"})
        identical &= !slurp(dir / "a" / file).empty() &&
                     slurp(dir / "a" / file) == slurp(dir / "b" / file);
    report(11, "determinism", identical,
           ran ? (identical ? "datasets, loss curves and checkpoints are bit-identical"
                            : "repeated runs differ")
               : "pipeline invocation failed");
}

} // namespace

int main() {
    const char* cfg_env = std::getenv("SCSURRO_ACCEPTANCE_CONFIG");
    const std::string cfg_path = cfg_env && *cfg_env ? cfg_env : SCSURRO_DESK_CONFIG;
    PipelineConfig config;
    try {
        config = load_pipeline_config(cfg_path);
    } catch (const std::exception& e) {
        std::cerr << "cannot load pipeline config " << cfg_path << ": " << e.what() << "\n";
        return 1;
    }

    try {
        criterion_1();
        criterion_2();
        criterion_3();
        criterion_4();
        criterion_5();
        criterion_6(config);

        auto art = run_desk_pipeline(config);
        criterion_7(art, config);
        criterion_8(art);
        criterion_9(art, config);
        criterion_10(art, config);
        criterion_11();
        criterion_12(art);
    } catch (const std::exception& e) {
        std::cerr << "acceptance aborted: " << e.what() << "\n";
        return 1;
    }

    std::cout << (n_failed == 0 ? "ACCEPTANCE PASSED"
                                : "ACCEPTANCE FAILED (" + std::to_string(n_failed) +
                                      " criteria)")
              << "\n";
    return n_failed == 0 ? 0 : 1;
}
