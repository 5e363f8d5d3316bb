#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emsolver.hpp"
#include "geometry.hpp"

namespace scsurro {

static_assert(std::endian::native == std::endian::little,
              "dataset format assumes a little-endian host");

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Normalization maps applied to the raw (r, z, t, N, Np, p) inputs and the
/// Jphi target before training. All maps are affine and invertible.
struct Normalization {
    double r_ref = 10e-3;    // m, inner radius
    double r_scale = 100.0;
    double z_ref = 5e-4;     // m, lower edge of pancake 1
    double z_scale = 250.0;
    double n_ref = 100.0;
    double np_ref = 10.0;
    double p_ref = 10.0;
};

struct RawSample {
    double r;    // m
    double z;    // m
    double t;    // s
    double n_turns;
    double n_pancakes;
    double pancake;
};

inline std::array<double, 6> normalize_inputs(const RawSample& raw, const Normalization& nz) {
    return {(raw.r - nz.r_ref) * nz.r_scale,
            (raw.z - nz.z_ref) * nz.z_scale,
            raw.t,
            raw.n_turns / nz.n_ref,
            raw.n_pancakes / nz.np_ref,
            raw.pancake / nz.p_ref};
}

inline RawSample denormalize_inputs(const std::array<double, 6>& x, const Normalization& nz) {
    return {x[0] / nz.r_scale + nz.r_ref,
            x[1] / nz.z_scale + nz.z_ref,
            x[2],
            x[3] * nz.n_ref,
            x[4] * nz.np_ref,
            x[5] * nz.p_ref};
}

/// Target map ((Jphi/Jc) + 1) / 4: the physical range Jphi/Jc in [-1, 1]
/// lands in [0, 0.5].
inline double normalize_output(double J_phi, double J_c) { return (J_phi / J_c + 1.0) / 4.0; }
inline double denormalize_output(double y, double J_c) { return (4.0 * y - 1.0) * J_c; }

/// One normalized training row; stored as 32-bit floats, matching the disk
/// format exactly.
struct SampleRecord {
    std::array<float, 6> inputs;
    float target;

    bool operator==(const SampleRecord&) const = default;
};

/// (N, Np) pair identifying one magnet configuration of a split.
struct SplitConfig {
    int n_turns;
    int n_pancakes;

    bool operator==(const SplitConfig&) const = default;
    auto operator<=>(const SplitConfig&) const = default;
};

struct SplitPlan {
    std::vector<SplitConfig> train;
    std::vector<SplitConfig> interp_val;
    std::vector<SplitConfig> extrap_n;
    std::vector<SplitConfig> extrap_np;
    std::vector<SplitConfig> extrap_both;

    /// The full-scale composition: a 5x5 training grid over N = 10-100,
    /// Np = 1-10, a 3x3 interpolation grid inside it, and 16 extrapolation
    /// configurations split into three groups by which parameter leaves the
    /// training range.
    static SplitPlan full_default() {
        SplitPlan plan;
        for (int n : {10, 30, 50, 70, 100})
            for (int np : {1, 3, 5, 7, 10}) plan.train.push_back({n, np});
        for (int n : {20, 60, 90})
            for (int np : {2, 6, 9}) plan.interp_val.push_back({n, np});
        for (int n : {125, 150, 200, 250}) plan.extrap_n.push_back({n, 10});
        for (int np : {12, 15, 20, 25}) plan.extrap_np.push_back({100, np});
        plan.extrap_both = {{125, 12}, {150, 15}, {175, 18}, {200, 20},
                            {225, 22}, {250, 25}, {110, 11}, {140, 14}};
        return plan;
    }

    /// Laptop-scale composition used by the bundled desk config: same split
    /// structure, much smaller magnets.
    static SplitPlan desk_default() {
        SplitPlan plan;
        for (int n : {4, 8, 12})
            for (int np : {1, 2}) plan.train.push_back({n, np});
        for (int n : {6, 10})
            for (int np : {1, 2}) plan.interp_val.push_back({n, np});
        plan.extrap_n = {{18, 2}};
        plan.extrap_np = {{12, 3}};
        plan.extrap_both = {{18, 3}};
        return plan;
    }
};

struct DatasetManifest {
    std::string split;                   // train | interp_val | extrap_N | extrap_Np | extrap_both
    std::vector<SplitConfig> configs;
    std::vector<double> snapshot_times;  // s
    int points_per_tape = 0;
    Normalization normalization;
    SolenoidConfig base_config;          // geometry constants shared by all configs
    std::uint64_t row_count = 0;
    std::uint64_t checksum = 0;          // FNV-1a over the row payload
};

inline void to_json(nlohmann::json& j, const SplitConfig& c) {
    j = nlohmann::json{{"N", c.n_turns}, {"Np", c.n_pancakes}};
}
inline void from_json(const nlohmann::json& j, SplitConfig& c) {
    j.at("N").get_to(c.n_turns);
    j.at("Np").get_to(c.n_pancakes);
}

inline void to_json(nlohmann::json& j, const Normalization& n) {
    j = nlohmann::json{{"r_ref", n.r_ref},   {"r_scale", n.r_scale}, {"z_ref", n.z_ref},
                       {"z_scale", n.z_scale}, {"n_ref", n.n_ref},   {"np_ref", n.np_ref},
                       {"p_ref", n.p_ref}};
}
inline void from_json(const nlohmann::json& j, Normalization& n) {
    j.at("r_ref").get_to(n.r_ref);
    j.at("r_scale").get_to(n.r_scale);
    j.at("z_ref").get_to(n.z_ref);
    j.at("z_scale").get_to(n.z_scale);
    j.at("n_ref").get_to(n.n_ref);
    j.at("np_ref").get_to(n.np_ref);
    j.at("p_ref").get_to(n.p_ref);
}

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = nlohmann::json{{"split", m.split},
                       {"configs", m.configs},
                       {"snapshot_times", m.snapshot_times},
                       {"points_per_tape", m.points_per_tape},
                       {"normalization", m.normalization},
                       {"base_config", m.base_config},
                       {"row_count", m.row_count},
                       {"checksum", m.checksum}};
}
inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    j.at("split").get_to(m.split);
    j.at("configs").get_to(m.configs);
    j.at("snapshot_times").get_to(m.snapshot_times);
    j.at("points_per_tape").get_to(m.points_per_tape);
    j.at("normalization").get_to(m.normalization);
    j.at("base_config").get_to(m.base_config);
    j.at("row_count").get_to(m.row_count);
    j.at("checksum").get_to(m.checksum);
}

/// Default normalization for a geometry: radial offset at the inner radius,
/// axial offset at the lower edge of pancake 1.
inline Normalization make_normalization(const SolenoidConfig& config) {
    Normalization nz;
    nz.r_ref = config.inner_radius;
    nz.z_ref = 0.5 * config.pancake_gap;
    return nz;
}

/// One record per (mesh element, snapshot): normalized coordinates plus the
/// normalized current density target.
inline std::vector<SampleRecord> sample_history(const CurrentDensityHistory& history,
                                                const PowerLawParams& params,
                                                const Normalization& nz) {
    std::vector<SampleRecord> records;
    records.reserve(history.times.size() * history.mesh.elements.size());
    const auto& cfg = history.mesh.config;
    for (std::size_t s = 0; s < history.times.size(); ++s) {
        for (std::size_t i = 0; i < history.mesh.elements.size(); ++i) {
            const auto& e = history.mesh.elements[i];
            const RawSample raw{e.loop_radius,
                                e.loop_z,
                                history.times[s],
                                static_cast<double>(cfg.n_turns),
                                static_cast<double>(cfg.n_pancakes_half),
                                static_cast<double>(e.pancake)};
            const auto x = normalize_inputs(raw, nz);
            SampleRecord rec;
            for (int d = 0; d < 6; ++d) rec.inputs[static_cast<std::size_t>(d)] = static_cast<float>(x[static_cast<std::size_t>(d)]);
            rec.target = static_cast<float>(normalize_output(
                history.current_density[s][static_cast<Eigen::Index>(i)], params.J_c));
            records.push_back(rec);
        }
    }
    return records;
}

namespace detail {

inline void validate_split_geometry(const SplitPlan& plan) {
    auto sorted_unique = [](std::vector<SplitConfig> v, const char* name) {
        std::sort(v.begin(), v.end());
        if (std::adjacent_find(v.begin(), v.end()) != v.end())
            throw DatasetError(std::string("build_splits: duplicate configuration in ") + name);
        return v;
    };
    auto train = sorted_unique(plan.train, "train");
    if (train.empty()) throw DatasetError("build_splits: empty training split");
    sorted_unique(plan.interp_val, "interp_val");

    int n_min = train.front().n_turns, n_max = n_min;
    int np_min = train.front().n_pancakes, np_max = np_min;
    for (const auto& c : train) {
        n_min = std::min(n_min, c.n_turns);
        n_max = std::max(n_max, c.n_turns);
        np_min = std::min(np_min, c.n_pancakes);
        np_max = std::max(np_max, c.n_pancakes);
    }

    for (const auto& c : plan.interp_val) {
        if (std::binary_search(train.begin(), train.end(), c))
            throw DatasetError("build_splits: interp_val overlaps the training split");
        const bool inside = c.n_turns >= n_min && c.n_turns <= n_max &&
                            c.n_pancakes >= np_min && c.n_pancakes <= np_max;
        const bool strict = (c.n_turns > n_min && c.n_turns < n_max) ||
                            (c.n_pancakes > np_min && c.n_pancakes < np_max);
        if (!inside || !strict)
            throw DatasetError("build_splits: interp_val configuration outside the training hull");
    }
    for (const auto& c : plan.extrap_n)
        if (c.n_turns <= n_max)
            throw DatasetError("build_splits: extrap_N configuration inside the training range");
    for (const auto& c : plan.extrap_np)
        if (c.n_pancakes <= np_max)
            throw DatasetError("build_splits: extrap_Np configuration inside the training range");
    for (const auto& c : plan.extrap_both)
        if (c.n_turns <= n_max || c.n_pancakes <= np_max)
            throw DatasetError("build_splits: extrap_both configuration inside the training range");
}

} // namespace detail

/// Expands a split plan into per-split manifests (row counts and checksums
/// are filled in when the datasets are generated).
inline std::vector<DatasetManifest> build_splits(const SplitPlan& plan,
                                                 const SolenoidConfig& base_config,
                                                 const std::vector<double>& snapshot_times,
                                                 int points_per_tape) {
    detail::validate_split_geometry(plan);
    const Normalization nz = make_normalization(base_config);
    auto make = [&](const std::string& name, const std::vector<SplitConfig>& configs) {
        DatasetManifest m;
        m.split = name;
        m.configs = configs;
        m.snapshot_times = snapshot_times;
        m.points_per_tape = points_per_tape;
        m.normalization = nz;
        m.base_config = base_config;
        return m;
    };
    std::vector<DatasetManifest> out;
    out.push_back(make("train", plan.train));
    out.push_back(make("interp_val", plan.interp_val));
    out.push_back(make("extrap_N", plan.extrap_n));
    out.push_back(make("extrap_Np", plan.extrap_np));
    out.push_back(make("extrap_both", plan.extrap_both));
    return out;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t hash = 14695981039346656037ull;
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= bytes[i];
        hash *= 1099511628211ull;
    }
    return hash;
}

inline constexpr char dataset_magic[4] = {'S', 'F', 'D', 'S'};
inline constexpr std::uint8_t dataset_version = 1;

/// File layout: magic "SFDS", version byte, u32 manifest length, manifest
/// JSON (UTF-8), then row_count * 7 little-endian f32 values. The manifest
/// stores the FNV-1a checksum of the row payload.
inline void write_dataset(const std::vector<SampleRecord>& records, DatasetManifest manifest,
                          const std::string& path) {
    static_assert(sizeof(SampleRecord) == 7 * sizeof(float));
    manifest.row_count = records.size();
    manifest.checksum = fnv1a64(records.data(), records.size() * sizeof(SampleRecord));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("write_dataset: cannot open " + path);
    out.write(dataset_magic, 4);
    out.put(static_cast<char>(dataset_version));
    const std::string json = nlohmann::json(manifest).dump();
    const auto len = static_cast<std::uint32_t>(json.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(json.data(), static_cast<std::streamsize>(json.size()));
    out.write(reinterpret_cast<const char*>(records.data()),
              static_cast<std::streamsize>(records.size() * sizeof(SampleRecord)));
    if (!out) throw DatasetError("write_dataset: write failed for " + path);
}

struct DatasetFile {
    std::vector<SampleRecord> records;
    DatasetManifest manifest;
};

inline DatasetFile read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("read_dataset: cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, dataset_magic, 4) != 0)
        throw DatasetError("read_dataset: bad magic in " + path);
    const int version = in.get();
    if (version != dataset_version)
        throw DatasetError("read_dataset: unsupported version in " + path);

    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string json(len, '\0');
    in.read(json.data(), static_cast<std::streamsize>(len));
    if (!in) throw DatasetError("read_dataset: truncated manifest in " + path);

    DatasetFile file;
    try {
        file.manifest = nlohmann::json::parse(json).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError("read_dataset: invalid manifest in " + path + ": " + e.what());
    }

    file.records.resize(file.manifest.row_count);
    in.read(reinterpret_cast<char*>(file.records.data()),
            static_cast<std::streamsize>(file.records.size() * sizeof(SampleRecord)));
    if (!in || in.gcount() !=
                   static_cast<std::streamsize>(file.records.size() * sizeof(SampleRecord)))
        throw DatasetError("read_dataset: truncated row payload in " + path);
    if (in.peek() != std::ifstream::traits_type::eof())
        throw DatasetError("read_dataset: trailing bytes in " + path);

    const std::uint64_t sum =
        fnv1a64(file.records.data(), file.records.size() * sizeof(SampleRecord));
    if (sum != file.manifest.checksum)
        throw DatasetError("read_dataset: checksum mismatch in " + path);
    return file;
}

} // namespace scsurro
