#pragma once

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>
#include <vector>

#include <scsurro/emsolver.hpp>
#include <scsurro/trainer.hpp>

namespace scsurro {

struct FieldPrediction {
    CurrentDensityHistory history;
    /// True when the queried configuration sits beyond the normalization
    /// references (turn or pancake count above the reference maximum), i.e.
    /// the model is extrapolating.
    bool extrapolating = false;
};

/// Precision of the batched forward pass: `full` is the bit-stable reference
/// (identical output for any batch size); `single` runs at the checkpoint's
/// storage width and is several times faster.
enum class InferencePrecision { full, single };

/// Evaluates the surrogate on a solver-congruent query grid: every element of
/// `mesh` at every time in `times`. Inputs pass through the same 32-bit cast
/// as the stored datasets so a prediction on a training grid reproduces the
/// training rows exactly.
inline FieldPrediction predict_field(const NetworkArch& arch, const NetworkParams& params,
                                     const ElementMesh& mesh, const std::vector<double>& times,
                                     const Normalization& nz, const PowerLawParams& power,
                                     int batch_size = 8192,
                                     InferencePrecision precision = InferencePrecision::full) {
    if (times.empty()) throw std::invalid_argument("predict_field: no snapshot times");
    if (mesh.elements.empty()) throw std::invalid_argument("predict_field: empty mesh");
    if (batch_size < 1) throw std::invalid_argument("predict_field: batch_size must be >= 1");

    const auto& cfg = mesh.config;
    const auto n_elems = static_cast<Eigen::Index>(mesh.elements.size());
    const auto n_rows = static_cast<Eigen::Index>(times.size()) * n_elems;
    Eigen::MatrixXf X(n_rows, 6);
    for (std::size_t s = 0; s < times.size(); ++s) {
        for (Eigen::Index i = 0; i < n_elems; ++i) {
            const auto& e = mesh.elements[static_cast<std::size_t>(i)];
            const RawSample raw{e.loop_radius,
                                e.loop_z,
                                times[s],
                                static_cast<double>(cfg.n_turns),
                                static_cast<double>(cfg.n_pancakes_half),
                                static_cast<double>(e.pancake)};
            const auto x = normalize_inputs(raw, nz);
            const Eigen::Index row = static_cast<Eigen::Index>(s) * n_elems + i;
            for (int d = 0; d < 6; ++d)
                X(row, d) = static_cast<float>(x[static_cast<std::size_t>(d)]);
        }
    }

    Eigen::VectorXd y(n_rows);
    if (precision == InferencePrecision::single) {
        const InferenceParams fparams = make_inference_params(arch, params);
        for (Eigen::Index lo = 0; lo < n_rows; lo += batch_size) {
            const Eigen::Index n = std::min<Eigen::Index>(batch_size, n_rows - lo);
            y.segment(lo, n) =
                forward(arch, fparams, X.middleRows(lo, n)).col(0).cast<double>();
        }
    } else {
        const Eigen::MatrixXd Xd = X.cast<double>();
        for (Eigen::Index lo = 0; lo < n_rows; lo += batch_size) {
            const Eigen::Index n = std::min<Eigen::Index>(batch_size, n_rows - lo);
            y.segment(lo, n) = forward(arch, params, Xd.middleRows(lo, n)).col(0);
        }
    }

    FieldPrediction out;
    out.history.mesh = mesh;
    out.history.times = times;
    out.history.quarter_model = true;
    for (std::size_t s = 0; s < times.size(); ++s) {
        Eigen::VectorXd J(n_elems);
        for (Eigen::Index i = 0; i < n_elems; ++i)
            J[i] = denormalize_output(y[static_cast<Eigen::Index>(s) * n_elems + i], power.J_c);
        out.history.current_density.push_back(std::move(J));
    }
    out.extrapolating = cfg.n_turns > nz.n_ref || cfg.n_pancakes_half > nz.np_ref;
    return out;
}

/// Size-weighted MSE of the model over one stored split.
inline double eval_split(const NetworkArch& arch, const NetworkParams& params,
                         const std::vector<SampleRecord>& records, int batch_size = 8192) {
    if (records.empty()) throw std::invalid_argument("eval_split: empty split");
    return evaluate_loss(arch, params, to_matrix(records), batch_size);
}

struct RelativeErrorMap {
    std::vector<double> errors;   // one entry per unmasked point, grid order
    std::vector<int> indices;     // grid index of each unmasked point
    double max_error = 0.0;
    double mean_error = 0.0;

    bool empty() const { return errors.empty(); }
};

/// Pointwise |pred - ref| / |ref| restricted to where |ref| / Jc exceeds the
/// threshold; the unpenetrated interior is masked out.
inline RelativeErrorMap relative_error_map(const Eigen::VectorXd& pred,
                                           const Eigen::VectorXd& ref, double J_c,
                                           double threshold = 0.4) {
    if (pred.size() != ref.size())
        throw std::invalid_argument("relative_error_map: grids are not congruent");
    if (J_c <= 0.0) throw std::invalid_argument("relative_error_map: J_c must be positive");
    RelativeErrorMap map;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < ref.size(); ++i) {
        if (std::abs(ref[i]) / J_c <= threshold) continue;
        const double err = std::abs(pred[i] - ref[i]) / std::abs(ref[i]);
        map.errors.push_back(err);
        map.indices.push_back(static_cast<int>(i));
        map.max_error = std::max(map.max_error, err);
        sum += err;
    }
    if (!map.errors.empty()) map.mean_error = sum / static_cast<double>(map.errors.size());
    return map;
}

struct LossErrorEntry {
    SplitConfig config;
    double loss_solver = 0.0;      // J
    double loss_surrogate = 0.0;   // J
    double rel_error = 0.0;
    bool extrapolating = false;
    bool excluded = false;         // solver loss was zero; no relative error
};

/// Relative total-loss error per configuration. The surrogate's dissipation
/// uses the electric field reconstructed from its own predicted current
/// density through the material law, so only the declared model output enters.
inline std::vector<LossErrorEntry> loss_error_surface(
    const NetworkArch& arch, const NetworkParams& params,
    const std::vector<CurrentDensityHistory>& solver_histories, const PowerLawParams& power,
    const Normalization& nz) {
    std::vector<LossErrorEntry> out;
    for (const auto& solved : solver_histories) {
        LossErrorEntry entry;
        entry.config = {solved.mesh.config.n_turns, solved.mesh.config.n_pancakes_half};
        entry.loss_solver = magnetization_loss(solved, power);

        auto pred = predict_field(arch, params, solved.mesh, solved.times, nz, power);
        entry.extrapolating = pred.extrapolating;
        entry.loss_surrogate = magnetization_loss(pred.history, power);

        if (entry.loss_solver == 0.0) {
            entry.excluded = true;
        } else {
            entry.rel_error =
                std::abs(entry.loss_surrogate - entry.loss_solver) / entry.loss_solver;
        }
        out.push_back(entry);
    }
    return out;
}

struct TimingRow {
    SplitConfig config;
    std::size_t query_rows = 0;
    double solver_seconds = 0.0;
    double surrogate_seconds = 0.0;
    double speedup = 0.0;
};

namespace detail {

template <typename F>
double median_seconds(F&& body, int repetitions) {
    std::vector<double> times;
    for (int r = 0; r < repetitions; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

} // namespace detail

/// Wall-clock medians for a full solver ramp versus batched surrogate
/// inference on the identical query grid. Absolute numbers are machine
/// dependent; only the ratio is meaningful.
inline TimingRow timing_benchmark(const NetworkArch& arch, const NetworkParams& params,
                                  const SolenoidConfig& config, const std::vector<double>& times,
                                  double resolution, const PowerLawParams& power,
                                  int repetitions = 3) {
    if (repetitions < 3)
        throw std::invalid_argument("timing_benchmark: need at least 3 repetitions");
    auto mesh = discretize(build_solenoid(config), resolution);
    const Normalization nz = make_normalization(config);

    TimingRow row;
    row.config = {config.n_turns, config.n_pancakes_half};
    row.query_rows = mesh.elements.size() * times.size();
    row.solver_seconds = detail::median_seconds(
        [&] { RampSolver(mesh, power).solve_ramp(times); }, repetitions);
    row.surrogate_seconds = detail::median_seconds(
        [&] {
            predict_field(arch, params, mesh, times, nz, power, 8192,
                          InferencePrecision::single);
        },
        repetitions);
    if (row.surrogate_seconds <= 0.0)
        row.surrogate_seconds = 1e-9;   // clock resolution floor
    row.speedup = row.solver_seconds / row.surrogate_seconds;
    return row;
}

struct EvalReport {
    std::vector<std::pair<std::string, double>> split_losses;
    std::vector<LossErrorEntry> loss_surface;
    std::vector<TimingRow> timings;
    double error_map_max = 0.0;
    double error_map_mean = 0.0;
};

inline void to_json(nlohmann::json& j, const LossErrorEntry& e) {
    j = nlohmann::json{{"n_turns", e.config.n_turns},
                       {"n_pancakes", e.config.n_pancakes},
                       {"loss_solver", e.loss_solver},
                       {"loss_surrogate", e.loss_surrogate},
                       {"rel_error", e.rel_error},
                       {"extrapolating", e.extrapolating},
                       {"excluded", e.excluded}};
}

inline void to_json(nlohmann::json& j, const TimingRow& r) {
    j = nlohmann::json{{"n_turns", r.config.n_turns},
                       {"n_pancakes", r.config.n_pancakes},
                       {"query_rows", r.query_rows},
                       {"solver_seconds", r.solver_seconds},
                       {"surrogate_seconds", r.surrogate_seconds},
                       {"speedup", r.speedup}};
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    j = nlohmann::json{{"split_losses", nlohmann::json::object()},
                       {"loss_surface", r.loss_surface},
                       {"timings", r.timings},
                       {"error_map_max", r.error_map_max},
                       {"error_map_mean", r.error_map_mean}};
    for (const auto& [name, loss] : r.split_losses) j["split_losses"][name] = loss;
}

inline void write_loss_surface_csv(const std::vector<LossErrorEntry>& surface,
                                   std::ostream& out) {
    out << "n_turns,n_pancakes,loss_solver,loss_surrogate,rel_error,extrapolating,excluded\n";
    for (const auto& e : surface)
        out << e.config.n_turns << ',' << e.config.n_pancakes << ',' << e.loss_solver << ','
            << e.loss_surrogate << ',' << e.rel_error << ',' << (e.extrapolating ? 1 : 0) << ','
            << (e.excluded ? 1 : 0) << '\n';
}

// ---- minimal standalone SVG emitters ----

namespace detail {

inline std::string svg_color(double v) {
    // blue (0) to red (1) through white
    const double t = std::clamp(v, 0.0, 1.0);
    const auto chan = [](double x) {
        return std::to_string(static_cast<int>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))));
    };
    const double r = t < 0.5 ? 2.0 * t : 1.0;
    const double g = t < 0.5 ? 2.0 * t : 2.0 * (1.0 - t);
    const double b = t < 0.5 ? 1.0 : 2.0 * (1.0 - t);
    return "rgb(" + chan(r) + "," + chan(g) + "," + chan(b) + ")";
}

} // namespace detail

/// Line plot of one or more named series over a shared x grid.
inline void write_svg_line_plot(std::ostream& out, const std::vector<double>& x,
                                const std::vector<std::pair<std::string, std::vector<double>>>&
                                    series,
                                const std::string& title, bool log_y = false) {
    if (x.size() < 2) throw std::invalid_argument("svg plot: need at least 2 points");
    for (const auto& [name, y] : series)
        if (y.size() != x.size())
            throw std::invalid_argument("svg plot: series '" + name + "' length mismatch");

    const double W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 40;
    double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
    for (const auto& [name, y] : series)
        for (double v : y) {
            const double t = log_y ? std::log10(std::max(v, 1e-300)) : v;
            ylo = std::min(ylo, t);
            yhi = std::max(yhi, t);
        }
    if (yhi <= ylo) yhi = ylo + 1.0;
    const double xlo = x.front(), xhi = x.back();

    auto px = [&](double v) { return ml + (v - xlo) / (xhi - xlo) * (W - ml - mr); };
    auto py = [&](double v) {
        const double t = log_y ? std::log10(std::max(v, 1e-300)) : v;
        return H - mb - (t - ylo) / (yhi - ylo) * (H - mt - mb);
    };

    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
        << "</text>\n"
        << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
        << "' stroke='black'/>\n"
        << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n";

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::size_t si = 0;
    for (const auto& [name, y] : series) {
        const char* color = palette[si % 5];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < x.size(); ++i) out << px(x[i]) << ',' << py(y[i]) << ' ';
        out << "'/>\n<text x='" << W - mr - 8 << "' y='" << mt + 16.0 * static_cast<double>(si + 1)
            << "' text-anchor='end' font-size='12' fill='" << color << "'>" << name
            << "</text>\n";
        ++si;
    }
    out << "</svg>\n";
}

/// Heatmap of a dense row-major grid; values are min-max scaled.
inline void write_svg_heatmap(std::ostream& out, const std::vector<double>& values, int n_cols,
                              const std::string& title) {
    if (n_cols < 1 || values.empty() || values.size() % static_cast<std::size_t>(n_cols) != 0)
        throw std::invalid_argument("svg heatmap: grid shape mismatch");
    const int n_rows = static_cast<int>(values.size()) / n_cols;
    const double lo = *std::min_element(values.begin(), values.end());
    const double hi = *std::max_element(values.begin(), values.end());
    const double span = hi > lo ? hi - lo : 1.0;

    const double cell = std::max(4.0, 560.0 / std::max(n_cols, n_rows));
    const double W = cell * n_cols + 40, H = cell * n_rows + 60;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
        << "</text>\n";
    for (int r = 0; r < n_rows; ++r)
        for (int c = 0; c < n_cols; ++c) {
            const double v =
                (values[static_cast<std::size_t>(r) * static_cast<std::size_t>(n_cols) +
                        static_cast<std::size_t>(c)] -
                 lo) /
                span;
            out << "<rect x='" << 20 + c * cell << "' y='" << 40 + r * cell << "' width='"
                << cell << "' height='" << cell << "' fill='" << detail::svg_color(v)
                << "'/>\n";
        }
    out << "</svg>\n";
}

} // namespace scsurro
