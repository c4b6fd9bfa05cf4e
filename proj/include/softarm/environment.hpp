#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "softarm/assembly.hpp"
#include "softarm/errors.hpp"
#include "softarm/rod.hpp"

namespace softarm {

enum class ObstacleKind { PlaneWithHole, Cylinder, HalfSpace };

/// Rigid obstacle. The pose rows give the obstacle's local axes; local z is
/// the wall normal, the cylinder axis or the half-space normal.
///   PlaneWithHole: slab |z| <= thickness/2 minus the hole rho < hole_radius
///   Cylinder:      rho <= radius, |z| <= length/2
///   HalfSpace:     z <= 0
struct Obstacle {
    std::string id;
    ObstacleKind kind = ObstacleKind::HalfSpace;
    Pose pose;
    double hole_radius = 0.035;
    double thickness = 0.005;
    double radius = 0.007;
    double length = 0.05;
    double stiffness = 1e5;  // N / m^1.5
    double damping = 5.0;    // N s / m

    void validate() const
    {
        so3::require_rotation(pose.orientation, 1e-9);
        if (!(stiffness > 0.0 && damping >= 0.0))
            throw ConfigurationError("obstacle '" + id + "': stiffness must be > 0 and damping >= 0");
        switch (kind) {
        case ObstacleKind::PlaneWithHole:
            if (!(hole_radius > 0.0 && thickness >= 0.0))
                throw ConfigurationError("obstacle '" + id + "': hole_radius > 0 and thickness >= 0 required");
            break;
        case ObstacleKind::Cylinder:
            if (!(radius > 0.0 && length > 0.0))
                throw ConfigurationError("obstacle '" + id + "': radius and length must be > 0");
            break;
        case ObstacleKind::HalfSpace:
            break;
        }
    }
};

struct SignedDistance {
    double distance = 0.0;  // negative inside the solid
    Vec3 normal = Vec3::UnitZ();  // outward, lab frame
};

namespace detail {

/// Signed distance in the meridian half-plane to the rectangle
/// [rho0, rho1] x [-half, half]; rho1 may be infinite. Returns the distance
/// and its gradient (d/drho, d/dz).
inline SignedDistance meridian_box(double rho, double z, double rho0, double rho1, double half)
{
    // per-axis outside distances (positive outside that slab)
    const double dr_lo = rho0 - rho;
    const double dr_hi = rho - rho1;
    const double dr = std::max(dr_lo, dr_hi);
    const double dz = std::abs(z) - half;
    const double sz = z >= 0.0 ? 1.0 : -1.0;
    const double sr = dr_lo >= dr_hi ? -1.0 : 1.0;
    SignedDistance out;
    if (dr <= 0.0 && dz <= 0.0) {
        if (dr > dz) {
            out.distance = dr;
            out.normal = Vec3(sr, 0.0, 0.0);
        } else {
            out.distance = dz;
            out.normal = Vec3(0.0, 0.0, sz);
        }
        return out;
    }
    const double ox = std::max(dr, 0.0);
    const double oz = std::max(dz, 0.0);
    out.distance = std::hypot(ox, oz);
    out.normal = Vec3(sr * ox / out.distance, 0.0, sz * oz / out.distance);
    return out;
}

}  // namespace detail

inline SignedDistance signed_distance(const Obstacle& o, const Vec3& point)
{
    const Mat3& q = o.pose.orientation;
    const Vec3 p = q * (point - o.pose.position);
    if (o.kind == ObstacleKind::HalfSpace) return {p.z(), q.row(2).transpose()};

    const double rho = std::hypot(p.x(), p.y());
    const Vec3 radial = rho > 0.0 ? Vec3(p.x() / rho, p.y() / rho, 0.0) : Vec3::UnitX();
    const SignedDistance m =
        o.kind == ObstacleKind::PlaneWithHole
            ? detail::meridian_box(rho, p.z(), o.hole_radius, std::numeric_limits<double>::infinity(), 0.5 * o.thickness)
            : detail::meridian_box(rho, p.z(), -std::numeric_limits<double>::infinity(), o.radius, 0.5 * o.length);
    const Vec3 local = m.normal.x() * radial + Vec3(0.0, 0.0, m.normal.z());
    return {m.distance, q.transpose() * local};
}

struct ContactResult {
    Vec3 force = Vec3::Zero();
    double penetration = 0.0;
    bool capped = false;
};

/// Hertz force k p^1.5 with p = sphere radius - distance, plus a normal
/// damping term that ramps in over the first `damping_ramp` of penetration
/// so the force stays continuous at first touch. Never adhesive.
inline ContactResult hertz_contact(const Obstacle& o, const Vec3& center, const Vec3& velocity, double radius,
                                   double damping_ramp)
{
    ContactResult out;
    const SignedDistance sd = signed_distance(o, center);
    double p = radius - sd.distance;
    if (!(p > 0.0)) return out;
    if (p > radius) {
        out.capped = true;
        p = radius;
    }
    out.penetration = p;
    const double ramp = damping_ramp > 0.0 ? std::min(1.0, p / damping_ramp) : 1.0;
    const double vn = velocity.dot(sd.normal);
    const double magnitude = std::max(0.0, o.stiffness * p * std::sqrt(p) - o.damping * ramp * vn);
    out.force = magnitude * sd.normal;
    return out;
}

struct Payload {
    std::string id = "battery";
    double mass = 0.024;     // kg
    double radius = 0.007;   // m
    double length = 0.05;    // m
    std::string rod;         // attachment rod id; node is its tip
    int contact_spheres = 3;

    void validate() const
    {
        if (!(mass >= 0.0)) throw ConfigurationError("payload '" + id + "': mass must be >= 0");
        if (!(radius > 0.0 && length > 0.0))
            throw ConfigurationError("payload '" + id + "': radius and length must be > 0");
        if (contact_spheres < 1) throw ConfigurationError("payload '" + id + "': contact_spheres must be >= 1");
    }
};

struct AttachedPayload {
    Payload payload;
    std::size_t rod = 0;
    std::size_t node = 0;
};

struct Environment {
    Vec3 gravity = Vec3(0.0, 0.0, -9.81);
    std::vector<Obstacle> obstacles;
    std::optional<AttachedPayload> attached;
    double damping_ramp = 1e-4;  // m

    // per rod, per node: in contact with any obstacle during the last step
    std::vector<std::vector<unsigned char>> contact_flags;
    double max_penetration = 0.0;  // over the whole run, m
};

/// f += m_i g for every node.
inline void gravity_loads(const RodState& rod, const Vec3& g, ExternalLoads& loads)
{
    if (g.isZero(0.0)) return;
    for (std::size_t i = 0; i < rod.n_nodes(); ++i) loads.force[i] += rod.mass[i] * g;
}

/// Node-sphere contact of every rod node against every obstacle, plus the
/// payload spheres when attached. Capped contacts are reported once per
/// step through `warnings`.
inline void hertzian_contact(Assembly& a, Environment& env, WarningLog* warnings = nullptr)
{
    if (env.contact_flags.size() != a.rods.size()) {
        env.contact_flags.resize(a.rods.size());
        for (std::size_t r = 0; r < a.rods.size(); ++r) env.contact_flags[r].assign(a.rods[r].state.n_nodes(), 0);
    }
    for (auto& f : env.contact_flags) std::fill(f.begin(), f.end(), 0);
    if (env.obstacles.empty()) return;

    bool capped = false;
    for (std::size_t r = 0; r < a.rods.size(); ++r) {
        const RodState& rod = a.rods[r].state;
        ExternalLoads& loads = a.loads[r];
        const double radius = rod.geometry.outer_radius;
        for (std::size_t i = 0; i < rod.n_nodes(); ++i) {
            for (const auto& o : env.obstacles) {
                const ContactResult c = hertz_contact(o, rod.position[i], rod.velocity[i], radius, env.damping_ramp);
                if (c.penetration <= 0.0) continue;
                loads.force[i] += c.force;
                env.contact_flags[r][i] = 1;
                env.max_penetration = std::max(env.max_penetration, c.penetration);
                capped = capped || c.capped;
            }
        }
    }
    if (env.attached) {
        const AttachedPayload& ap = *env.attached;
        const RodState& rod = a.rods[ap.rod].state;
        const Vec3 tip = rod.position[ap.node];
        const Vec3 t = rod.tangent(rod.n_elements() - 1);
        const int n = ap.payload.contact_spheres;
        for (int s = 0; s < n; ++s) {
            const Vec3 offset = t * (ap.payload.length * (static_cast<double>(s) + 0.5) / n);
            for (const auto& o : env.obstacles) {
                const ContactResult c =
                    hertz_contact(o, tip + offset, rod.velocity[ap.node], ap.payload.radius, env.damping_ramp);
                if (c.penetration <= 0.0) continue;
                a.loads[ap.rod].force[ap.node] += c.force;
                a.loads[ap.rod].couple.back() += offset.cross(c.force);
                env.contact_flags[ap.rod][ap.node] = 1;
                env.max_penetration = std::max(env.max_penetration, c.penetration);
                capped = capped || c.capped;
            }
        }
    }
    if (capped && warnings) warnings->add("contact: penetration exceeded the sphere radius; force capped");
}

/// Adds the payload mass to the tip node of `payload.rod` and registers its
/// contact geometry.
inline void attach_payload(Assembly& a, Environment& env, const Payload& payload)
{
    payload.validate();
    if (env.attached)
        throw ConfigurationError("payload '" + env.attached->payload.id + "' is already attached");
    const std::size_t r = a.index_of(payload.rod);
    RodState& rod = a.rods[r].state;
    const std::size_t node = rod.n_nodes() - 1;
    rod.mass[node] += payload.mass;
    env.attached = AttachedPayload{payload, r, node};
}

/// Centre of the attached payload, or nullopt.
inline std::optional<Vec3> payload_center(const Assembly& a, const Environment& env)
{
    if (!env.attached) return std::nullopt;
    const RodState& rod = a.rods[env.attached->rod].state;
    return rod.position[env.attached->node] + 0.5 * env.attached->payload.length * rod.tangent(rod.n_elements() - 1);
}

}  // namespace softarm
