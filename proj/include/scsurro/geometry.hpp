#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace scsurro {

/// Axisymmetric REBCO solenoid description. The model covers one quarter of
/// the magnet cross-section: pancakes are stacked upward from the midplane
/// mirror at z = 0 and the axis of rotation is r = 0, so `n_pancakes_half`
/// counts pancakes above the midplane.
struct SolenoidConfig {
    double inner_radius = 10e-3;        // m
    double tape_width = 4e-3;           // m
    double tape_thickness = 0.1e-3;     // m (radial build per turn)
    int n_turns = 10;                   // N
    int n_pancakes_half = 1;            // Np, pancakes in the quarter model
    double pancake_gap = 1e-3;          // m, axial gap between pancakes
    double op_current = 50.0;           // A
    double ramp_rate = 50.0;            // A/s
    double sc_layer_thickness = 1e-6;   // m, REBCO layer carrying the current

    double ramp_duration() const { return op_current / ramp_rate; }

    void validate() const {
        if (!(inner_radius > 0.0)) throw std::invalid_argument("SolenoidConfig: inner_radius must be > 0");
        if (!(tape_width > 0.0)) throw std::invalid_argument("SolenoidConfig: tape_width must be > 0");
        if (!(tape_thickness > 0.0)) throw std::invalid_argument("SolenoidConfig: tape_thickness must be > 0");
        if (n_turns < 1) throw std::invalid_argument("SolenoidConfig: n_turns must be >= 1");
        if (n_pancakes_half < 1) throw std::invalid_argument("SolenoidConfig: n_pancakes_half must be >= 1");
        if (!(pancake_gap >= 0.0)) throw std::invalid_argument("SolenoidConfig: pancake_gap must be >= 0");
        if (!(sc_layer_thickness > 0.0)) throw std::invalid_argument("SolenoidConfig: sc_layer_thickness must be > 0");
        if (!(op_current > 0.0) || !(ramp_rate > 0.0))
            throw std::invalid_argument("SolenoidConfig: ramp duration must be positive");
    }
};

/// One tape cross-section: turn k of pancake p, placed in the (r, z) plane.
struct TapePlacement {
    int turn;               // 1-based turn index k
    int pancake;            // 1-based pancake index p
    double radius;          // loop radius of the turn center, m
    double z_lower;         // m
    double z_upper;         // m
};

struct SolenoidGeometry {
    SolenoidConfig config;
    std::vector<TapePlacement> tapes;
    // quarter symmetry: mirror plane z = 0, rotation axis r = 0
};

/// Places every tape of the quarter model. Pancake p spans
/// z in [gap/2 + (p-1)(w+gap), gap/2 + (p-1)(w+gap) + w]; turn k sits at
/// radius inner_radius + (k - 1/2) * tape_thickness.
inline SolenoidGeometry build_solenoid(const SolenoidConfig& config) {
    config.validate();
    SolenoidGeometry geom;
    geom.config = config;
    geom.tapes.reserve(static_cast<std::size_t>(config.n_turns) * config.n_pancakes_half);
    for (int p = 1; p <= config.n_pancakes_half; ++p) {
        const double z0 = 0.5 * config.pancake_gap +
                          (p - 1) * (config.tape_width + config.pancake_gap);
        for (int k = 1; k <= config.n_turns; ++k) {
            const double r = config.inner_radius + (k - 0.5) * config.tape_thickness;
            geom.tapes.push_back({k, p, r, z0, z0 + config.tape_width});
        }
    }
    return geom;
}

/// One collocation loop of the discretized tape stack. The loop sits at
/// (loop_radius, loop_z) and represents the axial interval
/// [support_lo, support_hi] of the tape, with support_hi - support_lo = width.
struct MeshElement {
    int turn;
    int pancake;
    double loop_radius;     // m
    double loop_z;          // m
    double width;           // m, axial extent represented by this loop
    double support_lo;      // m
    double support_hi;      // m
};

struct ElementMesh {
    SolenoidConfig config;
    std::vector<MeshElement> elements;
    int points_per_tape = 0;
};

/// Splits each tape into edge-inclusive collocation loops spaced `resolution`
/// apart along z. End loops represent half-width elements so the widths of a
/// tape sum to exactly tape_width.
inline ElementMesh discretize(const SolenoidGeometry& geom, double resolution) {
    if (!(resolution > 0.0))
        throw std::invalid_argument("discretize: resolution must be > 0");
    const double ratio = geom.config.tape_width / resolution;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio)
        throw std::invalid_argument("discretize: resolution must divide tape_width");

    const int intervals = static_cast<int>(rounded);
    const int points = intervals + 1;
    const double dz = geom.config.tape_width / intervals;

    ElementMesh mesh;
    mesh.config = geom.config;
    mesh.points_per_tape = points;
    mesh.elements.reserve(geom.tapes.size() * points);
    for (const TapePlacement& tape : geom.tapes) {
        for (int j = 0; j < points; ++j) {
            const double z = tape.z_lower + j * dz;
            const double lo = std::max(tape.z_lower, z - 0.5 * dz);
            const double hi = std::min(tape.z_upper, z + 0.5 * dz);
            mesh.elements.push_back({tape.turn, tape.pancake, tape.radius, z, hi - lo, lo, hi});
        }
    }
    return mesh;
}

inline void to_json(nlohmann::json& j, const SolenoidConfig& c) {
    j = nlohmann::json{{"inner_radius", c.inner_radius},
                       {"tape_width", c.tape_width},
                       {"tape_thickness", c.tape_thickness},
                       {"n_turns", c.n_turns},
                       {"n_pancakes_half", c.n_pancakes_half},
                       {"pancake_gap", c.pancake_gap},
                       {"op_current", c.op_current},
                       {"ramp_rate", c.ramp_rate},
                       {"sc_layer_thickness", c.sc_layer_thickness}};
}

inline void from_json(const nlohmann::json& j, SolenoidConfig& c) {
    j.at("inner_radius").get_to(c.inner_radius);
    j.at("tape_width").get_to(c.tape_width);
    j.at("tape_thickness").get_to(c.tape_thickness);
    j.at("n_turns").get_to(c.n_turns);
    j.at("n_pancakes_half").get_to(c.n_pancakes_half);
    j.at("pancake_gap").get_to(c.pancake_gap);
    j.at("op_current").get_to(c.op_current);
    j.at("ramp_rate").get_to(c.ramp_rate);
    j.at("sc_layer_thickness").get_to(c.sc_layer_thickness);
}

} // namespace scsurro
