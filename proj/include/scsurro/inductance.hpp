#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "elliptic.hpp"
#include "geometry.hpp"

namespace scsurro {

inline constexpr double mu0 = 4e-7 * M_PI;

struct Loop {
    double r;
    double z;
};

/// Mutual inductance of two coaxial circular loops,
///   M = mu0 sqrt(ra rb) [(2/k - k) K(k) - (2/k) E(k)],
/// with k^2 = 4 ra rb / ((ra + rb)^2 + (za - zb)^2). Symmetric in its
/// arguments; coincident loops (k = 1) are rejected, use self_inductance.
inline double mutual_inductance(const Loop& a, const Loop& b) {
    if (!(a.r > 0.0) || !(b.r > 0.0))
        throw std::invalid_argument("mutual_inductance: loop radii must be > 0");
    const double dz = a.z - b.z;
    const double denom = (a.r + b.r) * (a.r + b.r) + dz * dz;
    const double k2 = 4.0 * a.r * b.r / denom;
    if (!(k2 < 1.0))
        throw std::invalid_argument("mutual_inductance: coincident loops, use self_inductance");
    const double k = std::sqrt(k2);
    const auto [K, E] = elliptic_ke(k);
    return mu0 * std::sqrt(a.r * b.r) * ((2.0 / k - k) * K - (2.0 / k) * E);
}

/// Self-inductance of a thin strip loop of axial width `width` at radius r.
/// The logarithmic singularity of the loop kernel is regularized by the
/// geometric-mean distance of a line segment from itself, g = width e^{-3/2}:
/// the self term equals the mutual inductance of two coaxial loops separated
/// by g, accurate to O((width/r)^2).
inline double self_inductance(const Loop& loop, double width) {
    if (!(width > 0.0))
        throw std::invalid_argument("self_inductance: width must be > 0");
    if (!(width < loop.r))
        throw std::invalid_argument("self_inductance: width must be small against the radius");
    const double gmd = width * std::exp(-1.5);
    return mutual_inductance(loop, {loop.r, loop.z + gmd});
}

enum class MirrorImages { on, off };

struct InductanceMatrix {
    Eigen::MatrixXd L;   // H, symmetric positive definite
};

namespace detail {

// 8-point Gauss-Legendre rule on [-1, 1].
inline constexpr double gauss8_x[8] = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr double gauss8_w[8] = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

struct AxialInterval {
    double r;
    double lo;
    double hi;
};

// Mutual inductance averaged over both elements' axial supports. Used for
// nearby pairs where the point-loop kernel varies across the element width;
// keeps the assembled matrix an energy (Gram) matrix and hence positive
// definite.
inline double averaged_mutual(const AxialInterval& a, const AxialInterval& b) {
    const double ca = 0.5 * (a.hi + a.lo), ha = 0.5 * (a.hi - a.lo);
    const double cb = 0.5 * (b.hi + b.lo), hb = 0.5 * (b.hi - b.lo);
    double sum = 0.0;
    for (int g = 0; g < 8; ++g)
        for (int h = 0; h < 8; ++h)
            sum += gauss8_w[g] * gauss8_w[h] *
                   mutual_inductance({a.r, ca + ha * gauss8_x[g]}, {b.r, cb + hb * gauss8_x[h]});
    return 0.25 * sum;   // rule weights sum to 2 per axis
}

} // namespace detail

/// Dense loop-to-loop inductance matrix for a mesh. With images on, each
/// entry carries the mirror image of the source loop across z = 0, which
/// enforces the midplane symmetry of the quarter model:
///   L[i][j] = M(i, j) + M(i, mirror(j)),  L[i][i] = self(i) + M(i, mirror(i)).
/// Pairs closer than a few element widths use the support-averaged kernel
/// instead of the point-loop value (see detail::averaged_mutual).
inline InductanceMatrix assemble_inductance_matrix(const ElementMesh& mesh,
                                                   MirrorImages images = MirrorImages::on) {
    const auto n = static_cast<Eigen::Index>(mesh.elements.size());
    if (n == 0)
        throw std::invalid_argument("assemble_inductance_matrix: empty mesh");

    auto pair_entry = [](const MeshElement& a, const MeshElement& b, bool mirror_b) {
        const double sign = mirror_b ? -1.0 : 1.0;
        const double dz = a.loop_z - sign * b.loop_z;
        const double dr = a.loop_radius - b.loop_radius;
        const double d2 = dr * dr + dz * dz;
        const double near = 4.0 * std::max(a.width, b.width);
        if (d2 > near * near)
            return mutual_inductance({a.loop_radius, a.loop_z},
                                     {b.loop_radius, sign * b.loop_z});
        const detail::AxialInterval ia{a.loop_radius, a.support_lo, a.support_hi};
        const detail::AxialInterval ib{b.loop_radius, sign * b.support_hi, sign * b.support_lo};
        return detail::averaged_mutual(ia, mirror_b ? ib : detail::AxialInterval{
                                               b.loop_radius, b.support_lo, b.support_hi});
    };

    InductanceMatrix out;
    out.L.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ei = mesh.elements[static_cast<std::size_t>(i)];
        for (Eigen::Index j = i; j < n; ++j) {
            const auto& ej = mesh.elements[static_cast<std::size_t>(j)];
            double v = (i == j) ? self_inductance({ei.loop_radius, ei.loop_z}, ei.width)
                                : pair_entry(ei, ej, false);
            if (images == MirrorImages::on)
                v += pair_entry(ei, ej, true);
            out.L(i, j) = v;
            out.L(j, i) = v;
        }
    }
    return out;
}

} // namespace scsurro
