#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "softarm/errors.hpp"
#include "softarm/so3.hpp"

namespace softarm {

inline constexpr double kPsiToPa = 6894.757;
inline constexpr double kShearCorrection = 27.0 / 28.0;

struct MaterialSpec {
    double density = 1000.0;          // kg/m^3
    double youngs_modulus = 1.5e6;    // Pa
    double poisson_ratio = 0.5;
    double damping = 0.1;             // 1/s, mass-proportional

    double shear_modulus() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }

    void validate() const
    {
        if (!(density > 0.0)) throw ConfigurationError("material.density must be > 0");
        if (!(youngs_modulus > 0.0)) throw ConfigurationError("material.youngs_modulus must be > 0");
        if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5 + 1e-9))
            throw ConfigurationError("material.poisson_ratio must lie in [0, 0.5]");
        if (!(damping >= 0.0)) throw ConfigurationError("material.damping must be >= 0");
    }
};

/// Hollow circular tube. Second moments are taken about the tube's own axis.
struct RodGeometry {
    double rest_length = 0.18;
    double outer_radius = 8.52e-3;
    double inner_radius = 4.76e-3;

    double area() const
    {
        return std::numbers::pi * (outer_radius * outer_radius - inner_radius * inner_radius);
    }
    /// (I1, I2, I3) with I3 = I1 + I2 the polar moment.
    Vec3 second_moment() const
    {
        const double i1 = std::numbers::pi *
            (std::pow(outer_radius, 4) - std::pow(inner_radius, 4)) / 4.0;
        return {i1, i1, 2.0 * i1};
    }

    void validate() const
    {
        if (!(rest_length > 0.0)) throw ConfigurationError("geometry.rest_length must be > 0");
        if (!(inner_radius >= 0.0 && inner_radius < outer_radius))
            throw ConfigurationError("geometry radii must satisfy 0 <= inner < outer");
    }
};

/// Position plus director frame. Rows of `orientation` are d1, d2, d3 in the
/// lab frame, so local = orientation * lab.
struct Pose {
    Vec3 position = Vec3::Zero();
    Mat3 orientation = Mat3::Identity();
};

/// Discretized Cosserat rod: n elements between n + 1 nodes.
struct RodState {
    RodGeometry geometry;
    MaterialSpec material;

    std::vector<Vec3> position;    // n + 1, lab
    std::vector<Vec3> velocity;    // n + 1, lab
    std::vector<Mat3> director;    // n
    std::vector<Vec3> omega;       // n, local

    std::vector<Vec3> shear;       // n, local (nu)
    std::vector<Vec3> curvature;   // n - 1, local (kappa)
    std::vector<Vec3> rest_shear;
    std::vector<Vec3> rest_curvature;

    std::vector<double> rest_length;     // n
    std::vector<double> voronoi_length;  // n - 1
    std::vector<double> length;          // n, current

    std::vector<double> mass;      // n + 1 lumped node masses
    std::vector<Vec3> inertia;     // n, local diagonal of rho * I * l_hat

    Vec3 shear_stiffness = Vec3::Zero();  // diag S
    Vec3 bend_stiffness = Vec3::Zero();   // diag B

    bool clamped_base = false;
    Pose base;

    // Per-junction half rotation (axis, cos(theta/2), sin(theta/2)) from the
    // last compute_strains call; used to transport junction couples.
    struct HalfTurn {
        Vec3 axis = Vec3::UnitZ();
        double c = 1.0;
        double s = 0.0;
    };
    std::vector<HalfTurn> junction_half;

    std::size_t n_elements() const { return director.size(); }
    std::size_t n_nodes() const { return position.size(); }

    Vec3 tangent(std::size_t k) const { return director[k].row(2).transpose(); }
    Vec3 element_center(std::size_t k) const { return 0.5 * (position[k] + position[k + 1]); }

    /// Current outer radius of element k, from the axial stretch and the
    /// Poisson ratio (volume preserving at 0.5). Needs current lengths.
    double section_radius(std::size_t k) const
    {
        const double stretch = length[k] / rest_length[k];
        return geometry.outer_radius * std::pow(stretch, -material.poisson_ratio);
    }

    double total_mass() const
    {
        double m = 0.0;
        for (double mi : mass) m += mi;
        return m;
    }
};

struct InternalLoads {
    std::vector<Vec3> force;   // n, local
    std::vector<Vec3> couple;  // n - 1, local
};

/// Per-step accumulators in the lab frame: forces on nodes, couples on elements.
struct ExternalLoads {
    std::vector<Vec3> force;
    std::vector<Vec3> couple;

    void resize(const RodState& rod)
    {
        force.assign(rod.n_nodes(), Vec3::Zero());
        couple.assign(rod.n_elements(), Vec3::Zero());
    }
    void reset()
    {
        for (auto& f : force) f.setZero();
        for (auto& c : couple) c.setZero();
    }
};

struct Accelerations {
    std::vector<Vec3> linear;   // n + 1, lab
    std::vector<Vec3> angular;  // n, local
};

/// Straight rod along the base tangent (third row of base_pose.orientation).
inline RodState discretize(const RodGeometry& geometry, const MaterialSpec& material,
                           int n_elements, const Pose& base_pose)
{
    if (n_elements < 2) throw ConfigurationError("discretize: n_elements must be >= 2");
    geometry.validate();
    material.validate();
    so3::require_rotation(base_pose.orientation, 1e-9);

    const std::size_t n = static_cast<std::size_t>(n_elements);
    RodState rod;
    rod.geometry = geometry;
    rod.material = material;
    rod.base = base_pose;

    const double h = geometry.rest_length / static_cast<double>(n);
    const Vec3 t = base_pose.orientation.row(2).transpose();

    rod.position.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        rod.position[i] = base_pose.position + t * (geometry.rest_length * static_cast<double>(i) / static_cast<double>(n));
    rod.velocity.assign(n + 1, Vec3::Zero());
    rod.director.assign(n, base_pose.orientation);
    rod.omega.assign(n, Vec3::Zero());
    rod.shear.assign(n, Vec3::Zero());
    rod.rest_shear.assign(n, Vec3::Zero());
    rod.curvature.assign(n - 1, Vec3::Zero());
    rod.rest_curvature.assign(n - 1, Vec3::Zero());
    rod.rest_length.assign(n, h);
    rod.length.assign(n, h);
    rod.voronoi_length.assign(n - 1, h);
    rod.junction_half.assign(n - 1, {});

    const double area = geometry.area();
    const Vec3 moment = geometry.second_moment();
    const double e = material.youngs_modulus;
    const double g = material.shear_modulus();

    rod.mass.assign(n + 1, 0.0);
    rod.inertia.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double m = material.density * area * rod.rest_length[k];
        rod.mass[k] += 0.5 * m;
        rod.mass[k + 1] += 0.5 * m;
        rod.inertia[k] = material.density * moment * rod.rest_length[k];
    }
    rod.shear_stiffness = Vec3(kShearCorrection * g * area, kShearCorrection * g * area, e * area);
    rod.bend_stiffness = Vec3(e * moment.x(), e * moment.y(), g * moment.z());
    return rod;
}

/// Element stretch treated as numerical blow-up rather than deformation.
inline constexpr double kMaxStretch = 50.0;

/// Fills rod.shear, rod.curvature, rod.length and the junction half-turn cache.
inline void compute_strains(RodState& rod)
{
    const std::size_t n = rod.n_elements();
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 edge = rod.position[k + 1] - rod.position[k];
        const double len = edge.norm();
        if (!std::isfinite(len)) {
            const std::size_t bad = rod.position[k].allFinite() ? k + 1 : k;
            throw DivergenceError("rod.position[" + std::to_string(bad) + "]",
                                  "non-finite value in rod.position[" + std::to_string(bad) + "]");
        }
        if (!(len > 1e-14 * rod.rest_length[k]))
            throw DegenerateError("compute_strains: element " + std::to_string(k) + " has zero length");
        if (len > kMaxStretch * rod.rest_length[k])
            throw DivergenceError("rod.length[" + std::to_string(k) + "]",
                                  "element " + std::to_string(k) + " stretched beyond " +
                                      std::to_string(static_cast<int>(kMaxStretch)) + "x its rest length");
        rod.length[k] = len;
        rod.shear[k] = rod.director[k] * (edge / rod.rest_length[k]) - Vec3::UnitZ();
    }
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const Mat3 rel = rod.director[j] * rod.director[j + 1].transpose();
        const Vec3 w(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
        const double cos_t = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
        const double sin_t = 0.5 * w.norm();
        Vec3 phi;
        auto& half = rod.junction_half[j];
        if (cos_t > -0.99) {
            const double theta = std::atan2(sin_t, cos_t);
            if (theta < so3::kSmallAngle) {
                phi = 0.5 * w * (1.0 + theta * theta / 6.0);
                half.axis = Vec3::UnitZ();
                half.c = 1.0;
                half.s = 0.0;
                // second order is enough below 1e-8 rad; keep the small rotation
                if (theta > 0.0) {
                    half.axis = phi / phi.norm();
                    half.s = 0.5 * theta;
                    half.c = 1.0 - 0.125 * theta * theta;
                }
            } else {
                phi = w * (theta / (2.0 * sin_t));
                half.axis = w / (2.0 * sin_t);
                half.c = std::sqrt(0.5 * (1.0 + cos_t));
                half.s = sin_t / (2.0 * half.c);
            }
        } else {
            phi = so3::detail::log_unchecked(rel);
            const double theta = phi.norm();
            half.axis = phi / theta;
            half.c = std::cos(0.5 * theta);
            half.s = std::sin(0.5 * theta);
        }
        rod.curvature[j] = phi / rod.voronoi_length[j];
    }
}

/// Linear elastic law n = S (nu - nu_hat), m = B (kappa - kappa_hat).
inline void constitutive_loads(const RodState& rod, InternalLoads& out)
{
    const std::size_t n = rod.n_elements();
    out.force.resize(n);
    out.couple.resize(n - 1);
    for (std::size_t k = 0; k < n; ++k)
        out.force[k] = rod.shear_stiffness.cwiseProduct(rod.shear[k] - rod.rest_shear[k]);
    for (std::size_t j = 0; j + 1 < n; ++j)
        out.couple[j] = rod.bend_stiffness.cwiseProduct(rod.curvature[j] - rod.rest_curvature[j]);
}

inline InternalLoads constitutive_loads(const RodState& rod)
{
    InternalLoads out;
    constitutive_loads(rod, out);
    return out;
}

namespace detail {

inline Vec3 half_rotate(const RodState::HalfTurn& h, const Vec3& x, double sign)
{
    // rotation by +/- theta/2 about h.axis; 1 - c written as s^2 / (1 + c)
    const Vec3 ax = h.axis.cross(x);
    return x + (sign * h.s) * ax + (h.s * h.s / (1.0 + h.c)) * h.axis.cross(ax);
}

}  // namespace detail

enum class Gyroscopic { Include, Exclude };

/// Discrete linear and angular momentum balance. Junction couples are
/// transported through the geodesic midpoint frame of each junction, which
/// produces the kappa x m term and balances torque exactly. The integrator
/// passes Gyroscopic::Exclude because its rotation drift solves the
/// torque-free spin exactly.
inline void accelerations(const RodState& rod, const InternalLoads& internal,
                          const ExternalLoads& external, Accelerations& out,
                          Gyroscopic gyroscopic = Gyroscopic::Include)
{
    const std::size_t n = rod.n_elements();
    out.linear.resize(n + 1);
    out.angular.resize(n);
    const double damping = rod.material.damping;

    for (std::size_t i = 0; i <= n; ++i) out.linear[i] = external.force[i];
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 lab = rod.director[k].transpose() * internal.force[k];
        out.linear[k] += lab;
        out.linear[k + 1] -= lab;
    }
    for (std::size_t i = 0; i <= n; ++i)
        out.linear[i] = out.linear[i] / rod.mass[i] - damping * rod.velocity[i];

    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 edge_local = rod.director[k] * (rod.position[k + 1] - rod.position[k]);
        out.angular[k] = edge_local.cross(internal.force[k]) + rod.director[k] * external.couple[k];
        if (gyroscopic == Gyroscopic::Include)
            out.angular[k] += rod.inertia[k].cwiseProduct(rod.omega[k]).cross(rod.omega[k]);
    }
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const Vec3& m = internal.couple[j];
        out.angular[j] += detail::half_rotate(rod.junction_half[j], m, 1.0);
        out.angular[j + 1] -= detail::half_rotate(rod.junction_half[j], m, -1.0);
    }
    for (std::size_t k = 0; k < n; ++k)
        out.angular[k] = out.angular[k].cwiseQuotient(rod.inertia[k]) - damping * rod.omega[k];
}

inline Accelerations accelerations(const RodState& rod, const InternalLoads& internal,
                                   const ExternalLoads& external)
{
    Accelerations out;
    accelerations(rod, internal, external, out);
    return out;
}

/// Drift: x += dt v and the exact torque-free rotation of every element.
/// Sections are axisymmetric (J1 = J2 = a, J3 = b), so the body-frame rate
/// splits into S/a plus a spin lambda e3 with lambda = (a - b) w3 / a. The
/// two flows commute, giving Q' = exp(-dt lambda e3) exp(-dt S/a) Q with the
/// lab angular momentum Q^T S held fixed.
inline void kinematic_update(RodState& rod, double dt)
{
    for (std::size_t i = 0; i < rod.n_nodes(); ++i) rod.position[i] += dt * rod.velocity[i];
    for (std::size_t k = 0; k < rod.n_elements(); ++k) {
        Vec3& w = rod.omega[k];
        if (w.squaredNorm() == 0.0) continue;
        const Vec3& j = rod.inertia[k];
        Mat3& q = rod.director[k];
        const Vec3 spin_local = j.cwiseProduct(w);
        const Vec3 spin_lab = q.transpose() * spin_local;
        const double a = j.x();
        const double lambda = (a - j.z()) * w.z() / a;
        q = so3::exp_map(-dt * spin_local / a) * q;
        if (lambda != 0.0) {
            const double angle = dt * lambda;
            double sinc = 0.0;
            double versine = 0.0;
            so3::detail::rodrigues_coefficients(angle * angle, sinc, versine);
            const double c = 1.0 - versine * angle * angle;
            const double s = sinc * angle;
            Mat3 rz;
            rz << c, s, 0.0,
                 -s, c, 0.0,
                 0.0, 0.0, 1.0;
            q = rz * q;
        }
        w = (q * spin_lab).cwiseQuotient(j);
    }
}

inline void dynamic_update(RodState& rod, const Accelerations& acc, double dt)
{
    for (std::size_t i = 0; i < rod.n_nodes(); ++i) rod.velocity[i] += dt * acc.linear[i];
    for (std::size_t k = 0; k < rod.n_elements(); ++k) rod.omega[k] += dt * acc.angular[k];
}

/// Holds node 0 and element 0 at the clamp pose.
inline void enforce_clamp(RodState& rod)
{
    if (!rod.clamped_base) return;
    rod.position[0] = rod.base.position;
    rod.velocity[0].setZero();
    rod.director[0] = rod.base.orientation;
    rod.omega[0].setZero();
}

/// Throws DivergenceError naming the first non-finite field.
inline void check_finite(const RodState& rod, const std::string& label = "rod")
{
    auto scan = [&](const std::vector<Vec3>& v, const char* name) {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!v[i].allFinite())
                throw DivergenceError(label + "." + name + "[" + std::to_string(i) + "]",
                                      "non-finite value in " + label + "." + name + "[" + std::to_string(i) + "]");
    };
    double sum = 0.0;
    for (const auto& x : rod.position) sum += x.sum();
    for (const auto& x : rod.velocity) sum += x.sum();
    for (const auto& x : rod.omega) sum += x.sum();
    for (const auto& x : rod.director) sum += x.sum();
    if (std::isfinite(sum)) return;
    scan(rod.position, "position");
    scan(rod.velocity, "velocity");
    scan(rod.omega, "omega");
    for (std::size_t k = 0; k < rod.director.size(); ++k)
        if (!rod.director[k].allFinite())
            throw DivergenceError(label + ".director[" + std::to_string(k) + "]",
                                  "non-finite value in " + label + ".director[" + std::to_string(k) + "]");
}

inline constexpr double kDefaultDtSafety = 0.1;

/// safety * h_min / sqrt(E / rho).
inline double stable_dt(const RodState& rod, double safety = kDefaultDtSafety)
{
    if (!(safety > 0.0)) throw ConfigurationError("stable_dt: safety factor must be > 0");
    double h = rod.rest_length.front();
    for (double l : rod.rest_length) h = std::min(h, l);
    const double wave_speed = std::sqrt(rod.material.youngs_modulus / rod.material.density);
    return safety * h / wave_speed;
}

using ExternalLoadFn = std::function<void(const RodState&, ExternalLoads&)>;

/// One position-Verlet step for an isolated rod: half kinematic update,
/// loads and accelerations at the midpoint, full velocity update, half
/// kinematic update.
inline void step_position_verlet(RodState& rod, double dt, const ExternalLoadFn& external_loads = {})
{
    const double half = 0.5 * dt;
    kinematic_update(rod, half);
    enforce_clamp(rod);

    compute_strains(rod);
    InternalLoads internal;
    constitutive_loads(rod, internal);
    ExternalLoads external;
    external.resize(rod);
    if (external_loads) external_loads(rod, external);
    Accelerations acc;
    accelerations(rod, internal, external, acc, Gyroscopic::Exclude);
    dynamic_update(rod, acc, dt);

    kinematic_update(rod, half);
    enforce_clamp(rod);
    check_finite(rod);
}

// Diagnostics

inline Vec3 linear_momentum(const RodState& rod)
{
    Vec3 p = Vec3::Zero();
    for (std::size_t i = 0; i < rod.n_nodes(); ++i) p += rod.mass[i] * rod.velocity[i];
    return p;
}

/// About the origin, including element spin.
inline Vec3 angular_momentum(const RodState& rod)
{
    Vec3 l = Vec3::Zero();
    for (std::size_t i = 0; i < rod.n_nodes(); ++i)
        l += rod.mass[i] * rod.position[i].cross(rod.velocity[i]);
    for (std::size_t k = 0; k < rod.n_elements(); ++k)
        l += rod.director[k].transpose() * rod.inertia[k].cwiseProduct(rod.omega[k]);
    return l;
}

inline double kinetic_energy(const RodState& rod)
{
    double e = 0.0;
    for (std::size_t i = 0; i < rod.n_nodes(); ++i) e += 0.5 * rod.mass[i] * rod.velocity[i].squaredNorm();
    for (std::size_t k = 0; k < rod.n_elements(); ++k)
        e += 0.5 * rod.omega[k].dot(rod.inertia[k].cwiseProduct(rod.omega[k]));
    return e;
}

/// Requires strains to be current.
inline double elastic_energy(const RodState& rod)
{
    double e = 0.0;
    for (std::size_t k = 0; k < rod.n_elements(); ++k) {
        const Vec3 d = rod.shear[k] - rod.rest_shear[k];
        e += 0.5 * d.dot(rod.shear_stiffness.cwiseProduct(d)) * rod.rest_length[k];
    }
    for (std::size_t j = 0; j < rod.curvature.size(); ++j) {
        const Vec3 d = rod.curvature[j] - rod.rest_curvature[j];
        e += 0.5 * d.dot(rod.bend_stiffness.cwiseProduct(d)) * rod.voronoi_length[j];
    }
    return e;
}

}  // namespace softarm
