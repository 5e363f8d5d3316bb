#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "geometry.hpp"
#include "inductance.hpp"

namespace scsurro {

/// E-J power law of the superconductor, E = Ec sign(J) |J/Jc|^n.
/// Implemented sign-odd so the dissipation E*J is non-negative everywhere.
struct PowerLawParams {
    double E_c = 1e-4;      // V/m, electric-field criterion (1 uV/cm)
    double J_c = 5e10;      // A/m^2
    double n_index = 21.0;

    void validate() const {
        if (!(E_c > 0.0)) throw std::invalid_argument("PowerLawParams: E_c must be > 0");
        if (!(J_c > 0.0)) throw std::invalid_argument("PowerLawParams: J_c must be > 0");
        if (!(n_index > 1.0)) throw std::invalid_argument("PowerLawParams: n_index must be > 1");
    }

    /// Critical current of one tape, Jc * width * sc_layer_thickness.
    double critical_current(const SolenoidConfig& c) const {
        return J_c * c.tape_width * c.sc_layer_thickness;
    }
};

inline double power_law_efield(double J, const PowerLawParams& p) {
    if (!std::isfinite(J))
        throw std::invalid_argument("power_law_efield: non-finite current density");
    const double x = std::abs(J) / p.J_c;
    return std::copysign(p.E_c * std::pow(x, p.n_index), J);
}

/// dE/dJ of the power law; non-negative, zero at J = 0 for n > 1.
inline double power_law_defield(double J, const PowerLawParams& p) {
    const double x = std::abs(J) / p.J_c;
    return p.E_c * p.n_index / p.J_c * std::pow(x, p.n_index - 1.0);
}

/// Element currents plus the per-tape voltage multipliers that enforce the
/// transport-current constraint.
struct SolverState {
    Eigen::VectorXd currents;        // A, one per mesh element
    Eigen::VectorXd tape_voltages;   // V per turn, one per tape
    double time = 0.0;
};

struct SolverOptions {
    double rtol = 1e-8;
    double atol = 1e-12;
    int max_newton = 50;
    double constraint_rtol = 1e-9;   // per-tape current sum, relative to I_target
    double dt_initial_fraction = 0.05;  // of the first snapshot interval
    double dt_min = 1e-10;           // s
    double dt_max = std::numeric_limits<double>::infinity();   // s
    double dt_growth = 1.5;
    int grow_after = 3;              // consecutive accepted steps before growing dt
};

struct StepResult {
    bool converged = false;
    int newton_iterations = 0;
    double constraint_rel_error = 0.0;
};

/// Space-time current density output of a ramp, Jphi referred to the
/// superconducting layer thickness.
struct CurrentDensityHistory {
    ElementMesh mesh;
    std::vector<double> times;               // s, strictly increasing
    std::vector<Eigen::VectorXd> current_density;   // A/m^2 per element
    bool quarter_model = true;               // mirror half not materialized
    double max_constraint_rel_error = 0.0;   // worst accepted-step violation
};

class StepFailure : public std::runtime_error {
public:
    StepFailure(const std::string& what, double time)
        : std::runtime_error(what), failing_time(time) {}
    double failing_time;
};

/// Implicit time stepper for the loop-current network. Each backward-Euler
/// step solves
///   L (I - I_old)/dt + 2 pi r E(J) = V_tape,   sum_{i in tape} I_i = I_target
/// by damped Newton on the augmented (currents, voltages) system. The
/// Jacobian block L/dt + diag(dE/dJ) is SPD, so the saddle system is solved
/// by LLT block elimination with a small Schur complement over the tapes.
class RampSolver {
public:
    RampSolver(ElementMesh mesh, PowerLawParams params,
               MirrorImages images = MirrorImages::on,
               SolverOptions options = {})
        : mesh_(std::move(mesh)), params_(params), options_(options),
          quarter_model_(images == MirrorImages::on) {
        mesh_.config.validate();
        params_.validate();
        const std::size_t n = mesh_.elements.size();
        L_ = assemble_inductance_matrix(mesh_, images).L;

        // Tapes keyed by (pancake, turn); element order inside a tape follows
        // the mesh order.
        std::map<std::pair<int, int>, int> tape_of;
        tape_index_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto key = std::make_pair(mesh_.elements[i].pancake, mesh_.elements[i].turn);
            auto [it, inserted] = tape_of.try_emplace(key, static_cast<int>(tape_of.size()));
            tape_index_[i] = it->second;
        }
        n_tapes_ = static_cast<int>(tape_of.size());

        circumference_.resize(static_cast<Eigen::Index>(n));
        inv_section_.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& e = mesh_.elements[i];
            circumference_[static_cast<Eigen::Index>(i)] = 2.0 * M_PI * e.loop_radius;
            inv_section_[static_cast<Eigen::Index>(i)] =
                1.0 / (e.width * mesh_.config.sc_layer_thickness);
        }
    }

    const ElementMesh& mesh() const { return mesh_; }
    const Eigen::MatrixXd& inductance() const { return L_; }
    int n_tapes() const { return n_tapes_; }
    bool quarter_model() const { return quarter_model_; }

    SolverState initial_state() const {
        SolverState s;
        s.currents = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh_.elements.size()));
        s.tape_voltages = Eigen::VectorXd::Zero(n_tapes_);
        s.time = 0.0;
        return s;
    }

    /// One backward-Euler step to target transport current I_target per tape.
    /// On convergence `state` is advanced in place; otherwise it is left
    /// untouched and the caller should reduce dt.
    StepResult step(SolverState& state, double dt, double I_target) const {
        if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
        const Eigen::Index n = state.currents.size();
        if (n != static_cast<Eigen::Index>(mesh_.elements.size()) ||
            state.tape_voltages.size() != n_tapes_)
            throw std::invalid_argument("step: state does not match mesh");

        const Eigen::VectorXd& I_old = state.currents;

        // Warm start: spread the current increment uniformly in sheet density.
        Eigen::VectorXd I = I_old;
        {
            Eigen::VectorXd tape_sum = tapeSums(I_old);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double w = mesh_.elements[static_cast<std::size_t>(i)].width;
                I[i] += (I_target - tape_sum[tape_index_[static_cast<std::size_t>(i)]]) *
                        (w / mesh_.config.tape_width);
            }
        }
        Eigen::VectorXd V = state.tape_voltages;

        const double volt_scale_floor = options_.atol;
        const double I_scale = std::max(std::abs(I_target), 1e-12);
        // Amp -> volt conversion for the merit function.
        const double rho = L_.diagonal().mean() / dt;

        Eigen::VectorXd F(n), G(n_tapes_);
        auto residual = [&](const Eigen::VectorXd& Ic, const Eigen::VectorXd& Vc,
                            Eigen::VectorXd& Fout, Eigen::VectorXd& Gout, double* scale) {
            Eigen::VectorXd flux_rate = L_ * ((Ic - I_old) / dt);
            double s = volt_scale_floor;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double J = Ic[i] * inv_section_[i];
                const double e_res = circumference_[i] * power_law_efield(J, params_);
                const double v = Vc[tape_index_[static_cast<std::size_t>(i)]];
                Fout[i] = flux_rate[i] + e_res - v;
                s = std::max(s, std::abs(flux_rate[i]) + std::abs(e_res) + std::abs(v));
            }
            Gout = tapeSums(Ic);
            Gout.array() -= I_target;
            if (scale) *scale = s;
        };
        auto merit = [&](const Eigen::VectorXd& Fv, const Eigen::VectorXd& Gv) {
            return std::sqrt(Fv.squaredNorm() + rho * rho * Gv.squaredNorm());
        };

        double scale = 0.0;
        residual(I, V, F, G, &scale);

        StepResult result;
        Eigen::MatrixXd A(n, n);
        Eigen::MatrixXd rhs(n, 1 + n_tapes_);
        Eigen::VectorXd F_try(n), G_try(n_tapes_);

        for (int iter = 0; iter < options_.max_newton; ++iter) {
            const bool f_ok = F.lpNorm<Eigen::Infinity>() <= options_.rtol * scale + options_.atol;
            const bool g_ok =
                G.lpNorm<Eigen::Infinity>() <= options_.constraint_rtol * I_scale;
            if (f_ok && g_ok) {
                result.converged = true;
                break;
            }

            A = L_ / dt;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double J = I[i] * inv_section_[i];
                A(i, i) += circumference_[i] * power_law_defield(J, params_) * inv_section_[i];
            }

            // Solve [A -S^T; S 0] [dI; dV] = [-F; -G] via the tape Schur
            // complement: columns are A^{-1}F and A^{-1}S^T.
            rhs.col(0) = F;
            rhs.rightCols(n_tapes_).setZero();
            for (Eigen::Index i = 0; i < n; ++i)
                rhs(i, 1 + tape_index_[static_cast<std::size_t>(i)]) = 1.0;
            Eigen::LLT<Eigen::MatrixXd> llt(A);
            if (llt.info() != Eigen::Success)
                break;   // Jacobian lost definiteness; treat as step failure
            Eigen::MatrixXd sol = llt.solve(rhs);

            Eigen::MatrixXd schur(n_tapes_, n_tapes_);
            Eigen::VectorXd sq(n_tapes_);
            schur.setZero();
            sq.setZero();
            for (Eigen::Index i = 0; i < n; ++i) {
                const int t = tape_index_[static_cast<std::size_t>(i)];
                sq[t] += sol(i, 0);
                for (int u = 0; u < n_tapes_; ++u)
                    schur(t, u) += sol(i, 1 + u);
            }
            Eigen::VectorXd dV = Eigen::LLT<Eigen::MatrixXd>(schur).solve(sq - G);
            Eigen::VectorXd dI = -sol.col(0) + sol.rightCols(n_tapes_) * dV;

            // Backtracking line search on the combined residual norm.
            const double m0 = merit(F, G);
            double lambda = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 13; ++ls, lambda *= 0.5) {
                Eigen::VectorXd I_try = I + lambda * dI;
                Eigen::VectorXd V_try = V + lambda * dV;
                residual(I_try, V_try, F_try, G_try, &scale);
                if (merit(F_try, G_try) <= (1.0 - 1e-4 * lambda) * m0) {
                    I = std::move(I_try);
                    V = std::move(V_try);
                    F = F_try;
                    G = G_try;
                    accepted = true;
                    break;
                }
            }
            ++result.newton_iterations;
            if (!accepted)
                break;
        }

        if (!result.converged) {
            const bool f_ok = F.lpNorm<Eigen::Infinity>() <= options_.rtol * scale + options_.atol;
            const bool g_ok = G.lpNorm<Eigen::Infinity>() <= options_.constraint_rtol * I_scale;
            result.converged = f_ok && g_ok;
        }
        if (result.converged) {
            result.constraint_rel_error = G.lpNorm<Eigen::Infinity>() / I_scale;
            state.currents = std::move(I);
            state.tape_voltages = std::move(V);
            state.time += dt;
        }
        return result;
    }

    /// Ramps the transport current I(t) = ramp_rate * t and records the sheet
    /// current density at the requested snapshot times. Sub-steps adaptively:
    /// dt halves on Newton failure and grows again after repeated successes.
    CurrentDensityHistory solve_ramp(const std::vector<double>& snapshot_times) const {
        if (snapshot_times.empty())
            throw std::invalid_argument("solve_ramp: no snapshot times");
        const double T = mesh_.config.ramp_duration();
        for (std::size_t s = 0; s < snapshot_times.size(); ++s) {
            if (snapshot_times[s] < 0.0 || snapshot_times[s] > T * (1.0 + 1e-12))
                throw std::invalid_argument("solve_ramp: snapshot outside the ramp window");
            if (s > 0 && !(snapshot_times[s] > snapshot_times[s - 1]))
                throw std::invalid_argument("solve_ramp: snapshot times must be strictly increasing");
        }

        CurrentDensityHistory history;
        history.mesh = mesh_;
        history.quarter_model = quarter_model_;

        SolverState state = initial_state();
        const double first_span = snapshot_times.back() / static_cast<double>(snapshot_times.size());
        double dt = options_.dt_initial_fraction * std::max(first_span, options_.dt_min);
        int streak = 0;

        for (double t_snap : snapshot_times) {
            while (state.time < t_snap - 1e-15 * T) {
                dt = std::min(dt, options_.dt_max);
                double dt_try = std::min(dt, t_snap - state.time);
                // absorb rounding slivers: a ~ulp-sized remainder step would
                // amplify cancellation noise through the 1/dt flux term
                if (t_snap - state.time - dt_try < 1e-9 * T)
                    dt_try = t_snap - state.time;
                const double I_target = mesh_.config.ramp_rate * (state.time + dt_try);
                StepResult r = step(state, dt_try, I_target);
                if (r.converged) {
                    history.max_constraint_rel_error =
                        std::max(history.max_constraint_rel_error, r.constraint_rel_error);
                    if (++streak >= options_.grow_after) {
                        dt *= options_.dt_growth;
                        streak = 0;
                    }
                } else {
                    streak = 0;
                    dt = 0.5 * dt_try;
                    if (dt < options_.dt_min)
                        throw StepFailure("solve_ramp: Newton failed to converge at t = " +
                                              std::to_string(state.time),
                                          state.time);
                }
            }
            history.times.push_back(t_snap);
            history.current_density.push_back(state.currents.cwiseProduct(inv_section_));
        }
        return history;
    }

    Eigen::VectorXd tapeSums(const Eigen::VectorXd& I) const {
        Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_tapes_);
        for (Eigen::Index i = 0; i < I.size(); ++i)
            sums[tape_index_[static_cast<std::size_t>(i)]] += I[i];
        return sums;
    }

private:
    ElementMesh mesh_;
    PowerLawParams params_;
    SolverOptions options_;
    bool quarter_model_;
    Eigen::MatrixXd L_;
    std::vector<int> tape_index_;
    int n_tapes_ = 0;
    Eigen::VectorXd circumference_;
    Eigen::VectorXd inv_section_;
};

inline CurrentDensityHistory solve_ramp(const ElementMesh& mesh, const PowerLawParams& params,
                                        const std::vector<double>& snapshot_times,
                                        MirrorImages images = MirrorImages::on,
                                        const SolverOptions& options = {}) {
    return RampSolver(mesh, params, images, options).solve_ramp(snapshot_times);
}

/// Total energy dissipated over the ramp: trapezoidal time integration of
/// sum_i E(J_i) J_i * (2 pi r_i w_i delta), doubled for the mirror half when
/// the history comes from a quarter model.
inline double magnetization_loss(const CurrentDensityHistory& history,
                                 const PowerLawParams& params) {
    if (history.times.size() < 2)
        throw std::invalid_argument("magnetization_loss: need at least 2 snapshots");
    const double delta = history.mesh.config.sc_layer_thickness;

    std::vector<double> power(history.times.size());
    for (std::size_t s = 0; s < history.times.size(); ++s) {
        const Eigen::VectorXd& J = history.current_density[s];
        double p = 0.0;
        for (std::size_t i = 0; i < history.mesh.elements.size(); ++i) {
            const auto& e = history.mesh.elements[i];
            const double volume = 2.0 * M_PI * e.loop_radius * e.width * delta;
            const double Ji = J[static_cast<Eigen::Index>(i)];
            p += power_law_efield(Ji, params) * Ji * volume;
        }
        power[s] = p;
    }
    double energy = 0.0;
    for (std::size_t s = 1; s < history.times.size(); ++s)
        energy += 0.5 * (power[s] + power[s - 1]) * (history.times[s] - history.times[s - 1]);
    return history.quarter_model ? 2.0 * energy : energy;
}

/// Writes one CSV per snapshot: columns (turn, pancake, r, z, Jphi), SI units.
/// Files are named <prefix>_t<index>.csv.
inline void write_history_csv(const CurrentDensityHistory& history, const std::string& prefix) {
    for (std::size_t s = 0; s < history.times.size(); ++s) {
        std::ofstream out(prefix + "_t" + std::to_string(s) + ".csv");
        if (!out)
            throw std::runtime_error("write_history_csv: cannot open output file");
        out << "turn,pancake,r,z,Jphi\n" << std::setprecision(17);
        const Eigen::VectorXd& J = history.current_density[s];
        for (std::size_t i = 0; i < history.mesh.elements.size(); ++i) {
            const auto& e = history.mesh.elements[i];
            out << e.turn << ',' << e.pancake << ',' << e.loop_radius << ',' << e.loop_z << ','
                << J[static_cast<Eigen::Index>(i)] << '\n';
        }
    }
}

} // namespace scsurro
