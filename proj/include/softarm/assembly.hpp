#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "softarm/errors.hpp"
#include "softarm/free_actuation.hpp"
#include "softarm/rod.hpp"
#include "softarm/so3.hpp"

namespace softarm {

struct RodEntry {
    std::string id;
    RodState state;
    std::optional<FreeActuatorSpec> actuator;
};

/// One glued element pair. Contact directions are stored in each element's
/// local frame so they follow the element as it rotates.
struct ParallelPair {
    std::size_t element_i = 0;
    std::size_t element_j = 0;
    Vec3 sigma_i = Vec3::UnitX();
    Vec3 sigma_j = -Vec3::UnitX();
    Mat3 rest_relative = Mat3::Identity();  // Q_j Q_i^T at build time
};

struct ParallelConnection {
    std::size_t rod_i = 0;
    std::size_t rod_j = 0;
    std::vector<ParallelPair> pairs;
    double k_s = 0.0;  // N/m
    double k_t = 0.0;  // N m / rad
};

/// Tail node and last element of rod i joined to the head node and first
/// element of rod j.
struct SerialConnection {
    std::size_t rod_i = 0;
    std::size_t rod_j = 0;
    Mat3 rest_relative = Mat3::Identity();
    double k_s = 0.0;
    double k_t = 0.0;
};

struct Assembly {
    std::vector<RodEntry> rods;
    std::vector<ParallelConnection> parallel;
    std::vector<SerialConnection> serial;
    std::vector<ExternalLoads> loads;  // one accumulator per rod

    std::size_t index_of(const std::string& id) const
    {
        for (std::size_t i = 0; i < rods.size(); ++i)
            if (rods[i].id == id) return i;
        throw ConfigurationError("unknown rod id '" + id + "'");
    }

    void reset_loads()
    {
        if (loads.size() != rods.size()) {
            loads.resize(rods.size());
            for (std::size_t i = 0; i < rods.size(); ++i) loads[i].resize(rods[i].state);
        }
        for (auto& l : loads) l.reset();
    }
};

/// Element geometry as seen by a connection.
struct ElementView {
    Vec3 center;
    Mat3 q;
    double radius;
};

inline ElementView element_view(const RodState& rod, std::size_t k)
{
    return {rod.element_center(k), rod.director[k], rod.geometry.outer_radius};
}

struct ConnectionLoads {
    Vec3 force_i = Vec3::Zero();
    Vec3 force_j = Vec3::Zero();
    Vec3 couple_i = Vec3::Zero();
    Vec3 couple_j = Vec3::Zero();
};

inline Vec3 surface_point(const ElementView& e, const Vec3& sigma_local)
{
    return e.center + e.radius * (e.q.transpose() * sigma_local);
}

/// Spring between the glued surface points; each couple is the moment of
/// the element's force about its centre.
inline ConnectionLoads parallel_connection_loads(const ElementView& ei, const ElementView& ej,
                                                 const ParallelPair& pair, double k_s)
{
    const Vec3 arm_i = ei.radius * (ei.q.transpose() * pair.sigma_i);
    const Vec3 arm_j = ej.radius * (ej.q.transpose() * pair.sigma_j);
    ConnectionLoads out;
    out.force_i = k_s * ((ej.center + arm_j) - (ei.center + arm_i));
    out.force_j = -out.force_i;
    out.couple_i = arm_i.cross(out.force_i);
    out.couple_j = arm_j.cross(out.force_j);
    return out;
}

/// Lab-frame couples restoring the rest relative rotation R_hat = Q_j Q_i^T:
/// C_i = -k_t Q_i^T log(R_hat^T R), C_j = -C_i.
inline std::pair<Vec3, Vec3> alignment_couple(const Mat3& qi, const Mat3& qj, const Mat3& rest_relative,
                                              double k_t)
{
    const Mat3 relative = qj * qi.transpose();
    const Vec3 err = so3::detail::log_unchecked(rest_relative.transpose() * relative);
    const Vec3 ci = -k_t * (qi.transpose() * err);
    return {ci, -ci};
}

/// Relative rotation error at a joint, rad.
inline double alignment_error(const Mat3& qi, const Mat3& qj, const Mat3& rest_relative)
{
    return so3::detail::log_unchecked(rest_relative.transpose() * (qj * qi.transpose())).norm();
}

/// Accumulates every connection load. Parallel pair forces act at element
/// centres and are split evenly between the two nodes, which keeps torque
/// balance exact.
inline void apply_connection_loads(Assembly& a)
{
    for (const auto& c : a.parallel) {
        const RodState& ri = a.rods[c.rod_i].state;
        const RodState& rj = a.rods[c.rod_j].state;
        ExternalLoads& li = a.loads[c.rod_i];
        ExternalLoads& lj = a.loads[c.rod_j];
        for (const auto& p : c.pairs) {
            const ConnectionLoads f =
                parallel_connection_loads(element_view(ri, p.element_i), element_view(rj, p.element_j), p, c.k_s);
            const auto [ai, aj] =
                alignment_couple(ri.director[p.element_i], rj.director[p.element_j], p.rest_relative, c.k_t);
            li.force[p.element_i] += 0.5 * f.force_i;
            li.force[p.element_i + 1] += 0.5 * f.force_i;
            lj.force[p.element_j] += 0.5 * f.force_j;
            lj.force[p.element_j + 1] += 0.5 * f.force_j;
            li.couple[p.element_i] += f.couple_i + ai;
            lj.couple[p.element_j] += f.couple_j + aj;
        }
    }
    for (const auto& c : a.serial) {
        const RodState& ri = a.rods[c.rod_i].state;
        const RodState& rj = a.rods[c.rod_j].state;
        const std::size_t tail = ri.n_nodes() - 1;
        const Vec3 force = c.k_s * (rj.position.front() - ri.position[tail]);
        a.loads[c.rod_i].force[tail] += force;
        a.loads[c.rod_j].force.front() -= force;
        const auto [ci, cj] = alignment_couple(ri.director.back(), rj.director.front(), c.rest_relative, c.k_t);
        a.loads[c.rod_i].couple.back() += ci;
        a.loads[c.rod_j].couple.front() += cj;
    }
}

// Connection construction

inline constexpr double kSerialStiffnessFactor = 5.0;

/// Element-scale stiffnesses E A / h and E I1 / h.
inline std::pair<double, double> default_connection_stiffness(const RodState& a, const RodState& b)
{
    auto k = [](const RodState& r) {
        const double h = r.rest_length.front();
        return std::pair{r.material.youngs_modulus * r.geometry.area() / h,
                         r.material.youngs_modulus * r.geometry.second_moment().x() / h};
    };
    const auto [sa, ta] = k(a);
    const auto [sb, tb] = k(b);
    return {std::min(sa, sb), std::min(ta, tb)};
}

/// Pairs every element of rod i with the nearest element of rod j whose
/// surface touches it (centre distance within 2% of r_i + r_j).
inline ParallelConnection make_parallel_connection(const Assembly& a, std::size_t i, std::size_t j)
{
    const RodState& ri = a.rods[i].state;
    const RodState& rj = a.rods[j].state;
    ParallelConnection c;
    c.rod_i = i;
    c.rod_j = j;
    std::tie(c.k_s, c.k_t) = default_connection_stiffness(ri, rj);
    const double contact = ri.geometry.outer_radius + rj.geometry.outer_radius;
    for (std::size_t ki = 0; ki < ri.n_elements(); ++ki) {
        const Vec3 ci = ri.element_center(ki);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t kj = 0; kj < rj.n_elements(); ++kj) {
            const double d = (rj.element_center(kj) - ci).norm();
            if (d < best_d) {
                best_d = d;
                best = kj;
            }
        }
        if (std::abs(best_d - contact) > 0.02 * contact) continue;
        const Vec3 offset = (rj.element_center(best) - ci) / best_d;
        ParallelPair p;
        p.element_i = ki;
        p.element_j = best;
        p.sigma_i = ri.director[ki] * offset;
        p.sigma_j = rj.director[best] * (-offset);
        p.rest_relative = rj.director[best] * ri.director[ki].transpose();
        c.pairs.push_back(p);
    }
    if (c.pairs.empty())
        throw ConfigurationError("parallel connection '" + a.rods[i].id + "'-'" + a.rods[j].id +
                                 "': rods do not touch");
    return c;
}

inline SerialConnection make_serial_connection(const Assembly& a, std::size_t i, std::size_t j,
                                               double stiffness_factor = kSerialStiffnessFactor)
{
    const RodState& ri = a.rods[i].state;
    const RodState& rj = a.rods[j].state;
    const double gap = (rj.position.front() - ri.position.back()).norm();
    if (gap > 1e-6 * std::max(ri.geometry.rest_length, rj.geometry.rest_length))
        throw ConfigurationError("serial connection '" + a.rods[i].id + "'->'" + a.rods[j].id +
                                 "': tail and head nodes do not coincide");
    SerialConnection c;
    c.rod_i = i;
    c.rod_j = j;
    const auto [ks, kt] = default_connection_stiffness(ri, rj);
    c.k_s = stiffness_factor * ks;
    c.k_t = stiffness_factor * kt;
    c.rest_relative = rj.director.front() * ri.director.back().transpose();
    return c;
}

/// Rejects rods whose elements interpenetrate side by side at rest.
inline void check_no_overlap(const Assembly& a)
{
    for (std::size_t i = 0; i < a.rods.size(); ++i) {
        for (std::size_t j = i + 1; j < a.rods.size(); ++j) {
            const RodState& ri = a.rods[i].state;
            const RodState& rj = a.rods[j].state;
            const double contact = ri.geometry.outer_radius + rj.geometry.outer_radius;
            for (std::size_t ki = 0; ki < ri.n_elements(); ++ki) {
                const Vec3 t = ri.tangent(ki);
                for (std::size_t kj = 0; kj < rj.n_elements(); ++kj) {
                    const Vec3 d = rj.element_center(kj) - ri.element_center(ki);
                    const double axial = d.dot(t);
                    const double lateral = (d - axial * t).norm();
                    const double reach = 0.5 * (ri.rest_length[ki] + rj.rest_length[kj]);
                    if (lateral < contact * (1.0 - 1e-6) && std::abs(axial) < reach * (1.0 - 1e-6))
                        throw ConfigurationError("rods '" + a.rods[i].id + "' and '" + a.rods[j].id +
                                                 "' overlap at rest");
                }
            }
        }
    }
}

/// Structural checks: unique ids, connection references in range.
inline void validate_assembly(const Assembly& a)
{
    for (std::size_t i = 0; i < a.rods.size(); ++i)
        for (std::size_t j = i + 1; j < a.rods.size(); ++j)
            if (a.rods[i].id == a.rods[j].id) throw ConfigurationError("duplicate rod id '" + a.rods[i].id + "'");
    auto check_rod = [&](std::size_t r, const std::string& what) {
        if (r >= a.rods.size()) throw ConfigurationError(what + " references missing rod " + std::to_string(r));
    };
    for (std::size_t c = 0; c < a.parallel.size(); ++c) {
        const auto& p = a.parallel[c];
        const std::string what = "parallel connection " + std::to_string(c);
        check_rod(p.rod_i, what);
        check_rod(p.rod_j, what);
        for (const auto& e : p.pairs)
            if (e.element_i >= a.rods[p.rod_i].state.n_elements() ||
                e.element_j >= a.rods[p.rod_j].state.n_elements())
                throw ConfigurationError(what + " references a missing element");
    }
    for (std::size_t c = 0; c < a.serial.size(); ++c) {
        check_rod(a.serial[c].rod_i, "serial connection " + std::to_string(c));
        check_rod(a.serial[c].rod_j, "serial connection " + std::to_string(c));
    }
    check_no_overlap(a);
}

// Presets

struct ArmOptions {
    int n_elements = 12;
    double segment_length = 0.18;
    RodGeometry geometry;  // rest_length is replaced by segment_length
    MaterialSpec material;
    Pose base = hanging_base();
    double spine_offset_deg = 120.0;  // bend-bend: spine angle of the second rod
    bool clamp_base = true;

    /// Arm axis pointing down (-z); d1 = +x, d2 = -y.
    static Pose hanging_base()
    {
        Pose p;
        p.orientation << 1.0, 0.0, 0.0,
                         0.0, -1.0, 0.0,
                         0.0, 0.0, -1.0;
        return p;
    }
};

/// Local-frame unit vector at angle `deg` in the d1-d2 plane.
inline Vec3 in_plane_direction(double deg)
{
    const double a = deg_to_rad(deg);
    return {std::cos(a), std::sin(a), 0.0};
}

namespace detail {

inline RodEntry make_rod(const std::string& id, const ArmOptions& o, const Vec3& offset_local, double z_start,
                         std::optional<FreeActuatorSpec> actuator)
{
    RodGeometry g = o.geometry;
    g.rest_length = o.segment_length;
    Pose p = o.base;
    const Mat3& q = o.base.orientation;
    p.position = o.base.position + q.transpose() * (offset_local + Vec3(0.0, 0.0, z_start));
    RodEntry e{id, discretize(g, o.material, o.n_elements, p), std::move(actuator)};
    return e;
}

/// Three touching rods around the segment axis at 0, 120, 240 deg. Spines
/// of benders face the segment axis (the glue line).
inline void add_bundle(Assembly& a, const std::string& prefix, const ArmOptions& o, double z_start,
                       const std::vector<std::pair<std::string, FreeActuatorSpec>>& members)
{
    const double r = o.geometry.outer_radius;
    const double ring = 2.0 * r / std::sqrt(3.0);
    const std::size_t first = a.rods.size();
    for (std::size_t k = 0; k < members.size(); ++k) {
        const double deg = 120.0 * static_cast<double>(k);
        FreeActuatorSpec spec = members[k].second;
        if (spec.has_spine) spec.spine_direction = -in_plane_direction(deg);
        a.rods.push_back(make_rod(prefix + members[k].first, o, ring * in_plane_direction(deg), z_start, spec));
    }
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j)
            a.parallel.push_back(make_parallel_connection(a, first + i, first + j));
}

}  // namespace detail

inline const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names{"br2", "b3", "br2-b3", "twist-twist", "bend-bend"};
    return names;
}

/// Builds a named preset. Rod ids:
///   br2          bend, cw, ccw
///   b3           bend0, bend1, bend2
///   br2-b3       upper.bend0..2 (B3, at the base), lower.bend, lower.cw, lower.ccw
///   twist-twist  cw (base), ccw
///   bend-bend    bend0 (base), bend1 (spine turned by spine_offset_deg)
inline Assembly make_preset(const std::string& name, const ArmOptions& o = {})
{
    if (o.n_elements < 2) throw ConfigurationError("n_elements must be >= 2");
    Assembly a;
    const auto br2 = std::vector<std::pair<std::string, FreeActuatorSpec>>{
        {"bend", FreeActuatorSpec::bending()},
        {"cw", FreeActuatorSpec::clockwise()},
        {"ccw", FreeActuatorSpec::counterclockwise()}};
    const auto b3 = std::vector<std::pair<std::string, FreeActuatorSpec>>{
        {"bend0", FreeActuatorSpec::bending()},
        {"bend1", FreeActuatorSpec::bending()},
        {"bend2", FreeActuatorSpec::bending()}};
    if (name == "br2") {
        detail::add_bundle(a, "", o, 0.0, br2);
    } else if (name == "b3") {
        detail::add_bundle(a, "", o, 0.0, b3);
    } else if (name == "br2-b3") {
        detail::add_bundle(a, "upper.", o, 0.0, b3);
        detail::add_bundle(a, "lower.", o, o.segment_length, br2);
        for (std::size_t k = 0; k < 3; ++k) a.serial.push_back(make_serial_connection(a, k, k + 3));
    } else if (name == "twist-twist") {
        a.rods.push_back(detail::make_rod("cw", o, Vec3::Zero(), 0.0, FreeActuatorSpec::clockwise()));
        a.rods.push_back(
            detail::make_rod("ccw", o, Vec3::Zero(), o.segment_length, FreeActuatorSpec::counterclockwise()));
        a.serial.push_back(make_serial_connection(a, 0, 1));
    } else if (name == "bend-bend") {
        FreeActuatorSpec first = FreeActuatorSpec::bending();
        FreeActuatorSpec second = FreeActuatorSpec::bending();
        second.spine_direction = in_plane_direction(o.spine_offset_deg);
        a.rods.push_back(detail::make_rod("bend0", o, Vec3::Zero(), 0.0, first));
        a.rods.push_back(detail::make_rod("bend1", o, Vec3::Zero(), o.segment_length, second));
        a.serial.push_back(make_serial_connection(a, 0, 1));
    } else {
        throw ConfigurationError("unknown preset '" + name + "'");
    }
    // rods that start at the arm base are clamped
    for (auto& r : a.rods) {
        const Vec3 from_base = r.state.position.front() - o.base.position;
        const Vec3 axis = o.base.orientation.row(2).transpose();
        r.state.clamped_base = o.clamp_base && std::abs(from_base.dot(axis)) < 1e-12;
    }
    validate_assembly(a);
    a.reset_loads();
    return a;
}

// Diagnostics

/// Largest glued-surface gap over all parallel pairs, m.
inline double max_parallel_separation(const Assembly& a)
{
    double worst = 0.0;
    for (const auto& c : a.parallel) {
        const RodState& ri = a.rods[c.rod_i].state;
        const RodState& rj = a.rods[c.rod_j].state;
        for (const auto& p : c.pairs) {
            const Vec3 si = surface_point(element_view(ri, p.element_i), p.sigma_i);
            const Vec3 sj = surface_point(element_view(rj, p.element_j), p.sigma_j);
            worst = std::max(worst, (sj - si).norm());
        }
    }
    return worst;
}

/// Largest serial tail-head gap, m.
inline double max_serial_separation(const Assembly& a)
{
    double worst = 0.0;
    for (const auto& c : a.serial)
        worst = std::max(worst, (a.rods[c.rod_j].state.position.front() - a.rods[c.rod_i].state.position.back()).norm());
    return worst;
}

/// Largest serial relative rotation error, rad.
inline double max_serial_misalignment(const Assembly& a)
{
    double worst = 0.0;
    for (const auto& c : a.serial)
        worst = std::max(worst, alignment_error(a.rods[c.rod_i].state.director.back(),
                                                a.rods[c.rod_j].state.director.front(), c.rest_relative));
    return worst;
}

/// Largest parallel-pair relative rotation error, rad.
inline double max_parallel_misalignment(const Assembly& a)
{
    double worst = 0.0;
    for (const auto& c : a.parallel)
        for (const auto& p : c.pairs)
            worst = std::max(worst, alignment_error(a.rods[c.rod_i].state.director[p.element_i],
                                                    a.rods[c.rod_j].state.director[p.element_j], p.rest_relative));
    return worst;
}

inline Vec3 total_linear_momentum(const Assembly& a)
{
    Vec3 p = Vec3::Zero();
    for (const auto& r : a.rods) p += linear_momentum(r.state);
    return p;
}

inline Vec3 total_angular_momentum(const Assembly& a)
{
    Vec3 l = Vec3::Zero();
    for (const auto& r : a.rods) l += angular_momentum(r.state);
    return l;
}

}  // namespace softarm
