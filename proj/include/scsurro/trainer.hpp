#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <scsurro/autonet.hpp>
#include <scsurro/dataset.hpp>

namespace scsurro {

struct TrainHyper {
    int batch_size = 4096;
    int eval_batch_size = 8192;
    int max_epochs = 500;
    std::uint64_t seed = 0;
    LrSchedule schedule{};
    double divergence_factor = 1e3;

    void validate() const {
        if (batch_size < 1 || eval_batch_size < 1 || max_epochs < 1)
            throw NetworkError("TrainHyper: sizes must be >= 1");
        if (divergence_factor <= 1.0)
            throw NetworkError("TrainHyper: divergence_factor must exceed 1");
    }
};

/// Dataset rows in the dense layout the network consumes.
struct TrainMatrix {
    Eigen::MatrixXd inputs;    // rows x 6
    Eigen::MatrixXd targets;   // rows x 1
};

inline TrainMatrix to_matrix(const std::vector<SampleRecord>& records) {
    TrainMatrix m;
    const auto n = static_cast<Eigen::Index>(records.size());
    m.inputs.resize(n, 6);
    m.targets.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < 6; ++c)
            m.inputs(i, c) = records[static_cast<std::size_t>(i)].inputs[static_cast<std::size_t>(c)];
        m.targets(i, 0) = records[static_cast<std::size_t>(i)].target;
    }
    return m;
}

/// Size-weighted MSE over a dataset, evaluated in batches.
inline double evaluate_loss(const NetworkArch& arch, const NetworkParams& params,
                            const TrainMatrix& data, int eval_batch_size = 8192) {
    if (data.inputs.rows() == 0) throw NetworkError("evaluate_loss: empty dataset");
    double sum = 0.0;
    for (Eigen::Index lo = 0; lo < data.inputs.rows(); lo += eval_batch_size) {
        const Eigen::Index n = std::min<Eigen::Index>(eval_batch_size, data.inputs.rows() - lo);
        const Eigen::MatrixXd pred = forward(arch, params, data.inputs.middleRows(lo, n));
        sum += (pred - data.targets.middleRows(lo, n)).squaredNorm();
    }
    return sum / static_cast<double>(data.inputs.rows());
}

enum class TrainStatus { converged, epoch_limit, diverged, degenerate };

inline const char* to_string(TrainStatus s) {
    switch (s) {
        case TrainStatus::converged: return "converged";
        case TrainStatus::epoch_limit: return "epoch_limit";
        case TrainStatus::diverged: return "diverged";
        case TrainStatus::degenerate: return "degenerate";
    }
    return "unknown";
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    bool checkpointed = false;
};

struct TrainRun {
    NetworkArch arch;
    TrainHyper hyper;
    TrainStatus status = TrainStatus::epoch_limit;
    std::vector<EpochRecord> epochs;
    double best_train_loss = 0.0;
    double best_val_loss = 0.0;
    int best_epoch = -1;
};

struct TrainResult {
    NetworkParams params;   // last checkpointed parameters
    TrainRun run;
};

/// A checkpoint is taken only when both losses improve strictly; this guards
/// against keeping weights that memorize the training set while validation
/// degrades.
inline bool checkpoint_rule(double train_loss, double val_loss, double best_train,
                            double best_val) {
    return train_loss < best_train && val_loss < best_val;
}

/// Minibatch Adam over the training matrix. Batches are drawn from a seeded
/// per-epoch permutation, so a fixed seed reproduces the run bit for bit.
/// `target_train_loss`, when positive, stops the run once the epoch's train
/// loss drops below it.
inline TrainResult train(const NetworkArch& arch, const TrainMatrix& train_data,
                         const TrainMatrix& val_data, const TrainHyper& hyper,
                         double target_train_loss = -1.0,
                         const NetworkParams* initial = nullptr) {
    arch.validate();
    hyper.validate();
    if (train_data.inputs.rows() == 0 || val_data.inputs.rows() == 0)
        throw NetworkError("train: empty split");
    if (train_data.inputs.cols() != arch.input_dim)
        throw NetworkError("train: input width does not match the architecture");
    if (initial) check_shapes(arch, *initial);

    NetworkParams params = initial ? *initial : init_params(arch, hyper.seed);
    OptimizerState opt = make_optimizer_state(arch, params);
    std::uint64_t shuffle_state = hyper.seed ^ 0x5deece66dull;

    TrainResult result;
    result.run.arch = arch;
    result.run.hyper = hyper;
    result.run.best_train_loss = std::numeric_limits<double>::infinity();
    result.run.best_val_loss = std::numeric_limits<double>::infinity();

    const Eigen::Index n_rows = train_data.inputs.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const double initial_loss =
        evaluate_loss(arch, params, train_data, hyper.eval_batch_size);

    for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
        const double lr = hyper.schedule(epoch);
        // Fisher-Yates with the same portable generator as the initializer
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                detail::uniform01(shuffle_state) * static_cast<double>(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }

        double epoch_sum = 0.0;
        Eigen::MatrixXd bx(hyper.batch_size, arch.input_dim);
        Eigen::MatrixXd by(hyper.batch_size, arch.output_dim);
        for (Eigen::Index lo = 0; lo < n_rows; lo += hyper.batch_size) {
            const Eigen::Index n = std::min<Eigen::Index>(hyper.batch_size, n_rows - lo);
            for (Eigen::Index k = 0; k < n; ++k) {
                const Eigen::Index src = order[static_cast<std::size_t>(lo + k)];
                bx.row(k) = train_data.inputs.row(src);
                by.row(k) = train_data.targets.row(src);
            }
            ForwardCache cache;
            Eigen::MatrixXd pred = forward(arch, params, bx.topRows(n), &cache);
            Eigen::MatrixXd dloss;
            const double batch_loss = mse(pred, by.topRows(n), &dloss);
            epoch_sum += batch_loss * static_cast<double>(n);
            Gradients grads = backward(arch, params, cache, dloss);
            adam_update(params, grads, opt, lr);
        }
        const double train_loss = epoch_sum / static_cast<double>(n_rows);
        const double val_loss = evaluate_loss(arch, params, val_data, hyper.eval_batch_size);

        EpochRecord rec{epoch, train_loss, val_loss, lr, false};
        if (checkpoint_rule(train_loss, val_loss, result.run.best_train_loss,
                            result.run.best_val_loss)) {
            rec.checkpointed = true;
            result.run.best_train_loss = train_loss;
            result.run.best_val_loss = val_loss;
            result.run.best_epoch = epoch;
            result.params = params;
        }
        result.run.epochs.push_back(rec);

        if (!std::isfinite(train_loss) || !std::isfinite(val_loss) ||
            train_loss > hyper.divergence_factor * initial_loss) {
            result.run.status = TrainStatus::diverged;
            break;
        }
        if (target_train_loss > 0.0 && train_loss <= target_train_loss) {
            result.run.status = TrainStatus::converged;
            break;
        }
    }

    if (result.run.best_epoch < 0) {
        // no epoch improved both losses at once; surface that instead of
        // silently returning the random initialization
        result.run.status = TrainStatus::degenerate;
        result.params = params;
    }
    return result;
}

/// Every checkpointed epoch must have improved both losses over all earlier
/// checkpoints. Used by tests and the acceptance gate.
inline bool audit_checkpoints(const TrainRun& run) {
    double best_train = std::numeric_limits<double>::infinity();
    double best_val = std::numeric_limits<double>::infinity();
    for (const auto& e : run.epochs) {
        if (e.checkpointed) {
            if (!(e.train_loss < best_train && e.val_loss < best_val)) return false;
            best_train = e.train_loss;
            best_val = e.val_loss;
        }
    }
    return true;
}

struct SweepEntry {
    NetworkArch arch;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    TrainRun run;
};

struct SweepReport {
    std::vector<SweepEntry> entries;

    /// Mean and variance of the best validation loss over successful runs of
    /// one architecture.
    struct ArchSummary {
        NetworkArch arch;
        int runs = 0;
        double mean_val = 0.0;
        double var_val = 0.0;
    };

    std::vector<ArchSummary> summarize() const {
        std::vector<ArchSummary> out;
        for (const auto& e : entries) {
            if (e.failed) continue;
            auto it = std::find_if(out.begin(), out.end(),
                                   [&](const ArchSummary& s) { return s.arch == e.arch; });
            if (it == out.end()) {
                out.push_back({e.arch, 0, 0.0, 0.0});
                it = out.end() - 1;
            }
            it->runs += 1;
            it->mean_val += e.run.best_val_loss;
            it->var_val += e.run.best_val_loss * e.run.best_val_loss;
        }
        for (auto& s : out) {
            s.mean_val /= s.runs;
            s.var_val = std::max(0.0, s.var_val / s.runs - s.mean_val * s.mean_val);
        }
        return out;
    }
};

/// Trains every architecture with every seed; individual failures are
/// recorded, not fatal.
inline SweepReport run_sweep(const std::vector<NetworkArch>& archs,
                             const std::vector<std::uint64_t>& seeds,
                             const TrainMatrix& train_data, const TrainMatrix& val_data,
                             const TrainHyper& base_hyper) {
    SweepReport report;
    for (const auto& arch : archs) {
        for (std::uint64_t seed : seeds) {
            SweepEntry entry;
            entry.arch = arch;
            entry.seed = seed;
            TrainHyper hyper = base_hyper;
            hyper.seed = seed;
            try {
                entry.run = train(arch, train_data, val_data, hyper).run;
                entry.failed = entry.run.status == TrainStatus::diverged ||
                               entry.run.status == TrainStatus::degenerate;
                if (entry.failed) entry.error = to_string(entry.run.status);
            } catch (const std::exception& e) {
                entry.failed = true;
                entry.error = e.what();
            }
            report.entries.push_back(std::move(entry));
        }
    }
    return report;
}

inline void write_loss_curve_csv(const TrainRun& run, std::ostream& out) {
    out << "epoch,train_loss,val_loss,lr,checkpointed\n";
    for (const auto& e : run.epochs)
        out << e.epoch << ',' << std::hexfloat << e.train_loss << ',' << e.val_loss << ','
            << e.lr << std::defaultfloat << ',' << (e.checkpointed ? 1 : 0) << '\n';
}

inline void to_json(nlohmann::json& j, const TrainRun& run) {
    j = nlohmann::json{{"arch", run.arch},
                       {"status", to_string(run.status)},
                       {"best_train_loss", run.best_train_loss},
                       {"best_val_loss", run.best_val_loss},
                       {"best_epoch", run.best_epoch},
                       {"epochs", nlohmann::json::array()}};
    for (const auto& e : run.epochs)
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"val_loss", e.val_loss},
                               {"lr", e.lr},
                               {"checkpointed", e.checkpointed}});
}

inline void to_json(nlohmann::json& j, const SweepReport& report) {
    j = nlohmann::json{{"entries", nlohmann::json::array()},
                       {"summary", nlohmann::json::array()}};
    for (const auto& e : report.entries)
        j["entries"].push_back({{"arch", e.arch},
                                {"seed", e.seed},
                                {"failed", e.failed},
                                {"error", e.error},
                                {"best_val_loss", e.failed ? 0.0 : e.run.best_val_loss},
                                {"status", to_string(e.run.status)}});
    for (const auto& s : report.summarize())
        j["summary"].push_back({{"arch", s.arch},
                                {"runs", s.runs},
                                {"mean_val_loss", s.mean_val},
                                {"var_val_loss", s.var_val}});
}

} // namespace scsurro
