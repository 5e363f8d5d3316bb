#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <scsurro/analysis.hpp>

namespace scsurro {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One declarative document driving the whole pipeline: geometry and material
/// constants, the split plan, the architecture grid, training hyperparameters
/// and evaluation settings.
struct PipelineConfig {
    SolenoidConfig geometry;
    PowerLawParams power_law;

    std::string plan = "desk";   // "desk", "full" or "custom"
    SplitPlan custom_plan;

    int points_per_tape = 21;
    int snapshots = 11;

    std::vector<NetworkArch> archs;
    std::vector<std::uint64_t> seeds{1};
    TrainHyper hyper;
    double target_train_loss = 1e-4;

    double error_threshold = 0.4;
    int bench_repetitions = 3;
    SplitConfig bench_config{12, 2};
    int bench_points_per_tape = 0;   // 0 means reuse points_per_tape
    std::vector<SplitConfig> eval_configs;

    std::string out_dir = "out";

    SplitPlan split_plan() const {
        if (plan == "desk") return SplitPlan::desk_default();
        if (plan == "full") return SplitPlan::full_default();
        if (plan == "custom") return custom_plan;
        throw ConfigError("unknown split plan '" + plan + "'");
    }

    std::vector<double> snapshot_times() const {
        if (snapshots < 2) throw ConfigError("need at least 2 snapshots");
        std::vector<double> t(static_cast<std::size_t>(snapshots));
        const double T = geometry.ramp_duration();
        for (int i = 0; i < snapshots; ++i)
            t[static_cast<std::size_t>(i)] = T * i / (snapshots - 1);
        return t;
    }

    double mesh_resolution() const {
        if (points_per_tape < 2) throw ConfigError("points_per_tape must be >= 2");
        return geometry.tape_width / (points_per_tape - 1);
    }

    double bench_resolution() const {
        const int pts = bench_points_per_tape > 0 ? bench_points_per_tape : points_per_tape;
        if (pts < 2) throw ConfigError("bench_points_per_tape must be >= 2");
        return geometry.tape_width / (pts - 1);
    }

    void validate() const {
        try {
            geometry.validate();
            power_law.validate();
            hyper.validate();
            for (const auto& a : archs) a.validate();
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        if (archs.empty()) throw ConfigError("at least one architecture required");
        if (seeds.empty()) throw ConfigError("at least one seed required");
        if (bench_repetitions < 3) throw ConfigError("bench_repetitions must be >= 3");
        if (error_threshold < 0.0 || error_threshold >= 1.0)
            throw ConfigError("error_threshold must lie in [0, 1)");
        split_plan();
        snapshot_times();
        mesh_resolution();
        bench_resolution();
    }
};

inline void to_json(nlohmann::json& j, const PowerLawParams& p) {
    j = nlohmann::json{{"E_c", p.E_c}, {"J_c", p.J_c}, {"n_index", p.n_index}};
}

inline void from_json(const nlohmann::json& j, PowerLawParams& p) {
    j.at("E_c").get_to(p.E_c);
    j.at("J_c").get_to(p.J_c);
    j.at("n_index").get_to(p.n_index);
}

inline void to_json(nlohmann::json& j, const TrainHyper& h) {
    j = nlohmann::json{{"batch_size", h.batch_size},
                       {"eval_batch_size", h.eval_batch_size},
                       {"max_epochs", h.max_epochs},
                       {"seed", h.seed},
                       {"lr_initial", h.schedule.initial},
                       {"lr_factor", h.schedule.factor},
                       {"lr_interval", h.schedule.interval},
                       {"divergence_factor", h.divergence_factor}};
}

inline void from_json(const nlohmann::json& j, TrainHyper& h) {
    j.at("batch_size").get_to(h.batch_size);
    j.at("eval_batch_size").get_to(h.eval_batch_size);
    j.at("max_epochs").get_to(h.max_epochs);
    if (j.contains("seed")) j.at("seed").get_to(h.seed);
    if (j.contains("lr_initial")) j.at("lr_initial").get_to(h.schedule.initial);
    if (j.contains("lr_factor")) j.at("lr_factor").get_to(h.schedule.factor);
    if (j.contains("lr_interval")) j.at("lr_interval").get_to(h.schedule.interval);
    if (j.contains("divergence_factor")) j.at("divergence_factor").get_to(h.divergence_factor);
}

inline void to_json(nlohmann::json& j, const SplitPlan& p) {
    j = nlohmann::json{{"train", p.train},
                       {"interp_val", p.interp_val},
                       {"extrap_n", p.extrap_n},
                       {"extrap_np", p.extrap_np},
                       {"extrap_both", p.extrap_both}};
}

inline void from_json(const nlohmann::json& j, SplitPlan& p) {
    j.at("train").get_to(p.train);
    j.at("interp_val").get_to(p.interp_val);
    j.at("extrap_n").get_to(p.extrap_n);
    j.at("extrap_np").get_to(p.extrap_np);
    j.at("extrap_both").get_to(p.extrap_both);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = nlohmann::json{{"geometry", c.geometry},
                       {"power_law", c.power_law},
                       {"plan", c.plan},
                       {"points_per_tape", c.points_per_tape},
                       {"snapshots", c.snapshots},
                       {"archs", c.archs},
                       {"seeds", c.seeds},
                       {"hyper", c.hyper},
                       {"target_train_loss", c.target_train_loss},
                       {"error_threshold", c.error_threshold},
                       {"bench_repetitions", c.bench_repetitions},
                       {"bench_config", c.bench_config},
                       {"bench_points_per_tape", c.bench_points_per_tape},
                       {"eval_configs", c.eval_configs},
                       {"out_dir", c.out_dir}};
    if (c.plan == "custom") j["custom_plan"] = c.custom_plan;
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
    j.at("geometry").get_to(c.geometry);
    j.at("power_law").get_to(c.power_law);
    j.at("plan").get_to(c.plan);
    if (j.contains("custom_plan")) j.at("custom_plan").get_to(c.custom_plan);
    j.at("points_per_tape").get_to(c.points_per_tape);
    j.at("snapshots").get_to(c.snapshots);
    j.at("archs").get_to(c.archs);
    j.at("seeds").get_to(c.seeds);
    j.at("hyper").get_to(c.hyper);
    if (j.contains("target_train_loss")) j.at("target_train_loss").get_to(c.target_train_loss);
    if (j.contains("error_threshold")) j.at("error_threshold").get_to(c.error_threshold);
    if (j.contains("bench_repetitions")) j.at("bench_repetitions").get_to(c.bench_repetitions);
    if (j.contains("bench_config")) j.at("bench_config").get_to(c.bench_config);
    if (j.contains("bench_points_per_tape"))
        j.at("bench_points_per_tape").get_to(c.bench_points_per_tape);
    if (j.contains("eval_configs")) j.at("eval_configs").get_to(c.eval_configs);
    if (j.contains("out_dir")) j.at("out_dir").get_to(c.out_dir);
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    PipelineConfig config;
    try {
        config = nlohmann::json::parse(in).get<PipelineConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid config " + path + ": " + e.what());
    }
    config.validate();
    return config;
}

} // namespace scsurro
