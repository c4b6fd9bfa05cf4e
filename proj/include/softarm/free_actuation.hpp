#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "softarm/errors.hpp"
#include "softarm/rod.hpp"

namespace softarm {

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Fiber program and calibration of one fiber-reinforced actuator.
struct FreeActuatorSpec {
    double alpha0 = deg_to_rad(85.0);  // rad
    double beta0 = deg_to_rad(-85.0);  // rad
    double gamma = 1.0;                // calibration factor
    double mu = 1.0;                   // spine couple scale
    bool has_spine = false;
    Vec3 spine_direction = Vec3::UnitX();  // local frame, normal-binormal plane
    int winding_number = 1;
    double min_pressure_psi = 0.0;
    double max_pressure_psi = 45.0;

    static FreeActuatorSpec bending()
    {
        FreeActuatorSpec s;
        s.has_spine = true;
        return s;
    }
    static FreeActuatorSpec extending()
    {
        return FreeActuatorSpec{};
    }
    static FreeActuatorSpec clockwise()
    {
        FreeActuatorSpec s;
        s.alpha0 = deg_to_rad(60.0);
        s.beta0 = 0.0;
        s.winding_number = 2;
        return s;
    }
    static FreeActuatorSpec counterclockwise()
    {
        FreeActuatorSpec s;
        s.alpha0 = 0.0;
        s.beta0 = deg_to_rad(-60.0);
        s.winding_number = 2;
        return s;
    }

    /// Hard violations throw; a calibration factor outside [0.85, 1.15] is
    /// only reported.
    void validate(WarningLog* warnings = nullptr) const
    {
        const double limit = 0.5 * std::numbers::pi;
        if (!(std::abs(alpha0) < limit && std::abs(beta0) < limit))
            throw ConfigurationError("free: fiber angles must lie strictly inside (-90, 90) deg");
        if (alpha0 == beta0) throw ConfigurationError("free: alpha0 == beta0 gives parallel fibers");
        if (!(gamma > 0.0)) throw ConfigurationError("free: gamma must be > 0");
        if (!(mu >= 0.0)) throw ConfigurationError("free: mu must be >= 0");
        if (winding_number != 1 && winding_number != 2)
            throw ConfigurationError("free: winding_number must be 1 or 2");
        if (!(min_pressure_psi >= 0.0 && max_pressure_psi >= min_pressure_psi))
            throw ConfigurationError("free: pressure limits must satisfy 0 <= min <= max");
        if (has_spine) {
            if (std::abs(spine_direction.norm() - 1.0) > 1e-9 || std::abs(spine_direction.z()) > 1e-9)
                throw ConfigurationError("free: spine_direction must be a unit vector normal to d3");
        }
        if (warnings && (gamma < 0.85 || gamma > 1.15))
            warnings->add("free: gamma " + std::to_string(gamma) + " outside the calibrated range [0.85, 1.15]");
    }
};

struct FiberAngles {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Fiber angles after an axial stretch l1, radial stretch l2 and twist
/// delta of a tube of radius r and length l.
inline FiberAngles update_fiber_angles(double l1, double l2, double delta, double r, double l,
                                       double alpha0, double beta0)
{
    if (!(l1 > 0.0 && l2 > 0.0)) throw DomainError("update_fiber_angles: stretches must be > 0");
    if (!(l > 0.0)) throw DomainError("update_fiber_angles: length must be > 0");
    const double limit = 0.5 * std::numbers::pi;
    if (!(std::abs(alpha0) < limit && std::abs(beta0) < limit))
        throw DomainError("update_fiber_angles: rest angle of +/-90 deg has no tangent");
    const double shift = r / l * delta;
    return {std::atan(l2 / l1 * std::tan(alpha0) + shift), std::atan(l2 / l1 * std::tan(beta0) + shift)};
}

struct FreeLoads {
    double force = 0.0;   // per gamma P pi r^2
    double couple = 0.0;  // per gamma P pi r^3
};

namespace detail {

/// Load laws in terms of sines and cosines of the fiber angles. The factor
/// (1 + 2 cot a cot b) is multiplied through by sin a sin b, which removes
/// the 0 * inf form of a fiber at 0 deg: the expressions are finite there
/// and equal the one-sided limits F -> 0, C -> 2 cot(other angle).
inline FreeLoads free_loads_normalized(double sa, double ca, double sb, double cb)
{
    const double sab = sa * cb - ca * sb;
    const double sa2 = sa * sa;
    const double sb2 = sb * sb;
    const double diff = sa2 - sb2;
    const double coupled = sa2 * sb2 * sab * sab;
    const double denominator = coupled + diff * diff;
    if (!(denominator > 0.0)) throw DegenerateError("free loads: parallel fibers (alpha == beta)");
    const double lead = sa * sb + 2.0 * ca * cb;
    return {lead * sa * sb * sab * sab / denominator, lead * sab * diff / denominator};
}

/// Same law from tan(alpha), tan(beta); used in the stepping loop.
inline FreeLoads free_loads_from_tangents(double ta, double tb)
{
    const double ia = 1.0 / std::sqrt(1.0 + ta * ta);
    const double ib = 1.0 / std::sqrt(1.0 + tb * tb);
    return free_loads_normalized(ta * ia, ia, tb * ib, ib);
}

}  // namespace detail

inline FreeLoads free_loads_normalized(double alpha, double beta)
{
    if (alpha == beta) throw DegenerateError("free loads: parallel fibers (alpha == beta)");
    return detail::free_loads_normalized(std::sin(alpha), std::cos(alpha), std::sin(beta), std::cos(beta));
}

/// Effective axial force, N.
inline double free_axial_force(double alpha, double beta, double pressure, double r, double gamma)
{
    if (!(pressure >= 0.0)) throw DomainError("free_axial_force: pressure must be >= 0");
    return gamma * pressure * std::numbers::pi * r * r * free_loads_normalized(alpha, beta).force;
}

/// Effective twist couple about the tube axis, N m.
inline double free_twist_couple(double alpha, double beta, double pressure, double r, double gamma)
{
    if (!(pressure >= 0.0)) throw DomainError("free_twist_couple: pressure must be >= 0");
    return gamma * pressure * std::numbers::pi * r * r * r * free_loads_normalized(alpha, beta).couple;
}

/// mu * (r d_f x F d3), all in the lab frame.
inline Vec3 spine_bending_couple(const FreeActuatorSpec& spec, double force, double r,
                                 const Vec3& spine_lab, const Vec3& tangent_lab)
{
    if (!spec.has_spine) throw ConfigurationError("spine_bending_couple: actuator has no spine");
    return spec.mu * (r * spine_lab).cross(force * tangent_lab);
}

struct ElementActuation {
    double axial_stretch = 1.0;
    double radial_stretch = 1.0;
    double twist = 0.0;  // rad over the element
    double alpha = 0.0;
    double beta = 0.0;
    double force = 0.0;   // N
    double couple = 0.0;  // N m
};

struct ActuationState {
    double pressure = 0.0;  // Pa
    std::vector<ElementActuation> elements;
};

inline void check_pressure(const FreeActuatorSpec& spec, double pressure_pa, const std::string& who)
{
    const double psi = pressure_pa / kPsiToPa;
    if (!(psi >= spec.min_pressure_psi - 1e-9 && psi <= spec.max_pressure_psi + 1e-9))
        throw ActuationLimitError(who + ": pressure " + std::to_string(psi) + " psi outside [" +
                                  std::to_string(spec.min_pressure_psi) + ", " +
                                  std::to_string(spec.max_pressure_psi) + "] psi");
}

/// Accumulates the pressure loads of one actuator into `loads`. Strains must
/// be current. Per element: the stretch fixes the radial stretch through
/// wall incompressibility, the local twist r * kappa3 shifts both fiber
/// tangents, and the resulting force acts as an equal and opposite node
/// pair balanced in torque by an element couple. Element couples are averaged onto the junctions and applied as
/// pairs, so a uniform couple loads only the two end elements and the rod
/// stays momentum neutral.
///
/// Pressure acts on the lumen, so F and C use the inner radius; fiber
/// kinematics and the spine lever arm use the outer radius. The spine holds
/// the distal cap back, so its couple enters the end load with the sign
/// opposite to spine_bending_couple and the tube bends towards its spine.
inline void apply_free_loads(const RodState& rod, const FreeActuatorSpec& spec, double pressure_pa,
                             ExternalLoads& loads, ActuationState* state = nullptr)
{
    check_pressure(spec, pressure_pa, "apply_free_loads");
    const std::size_t n = rod.n_elements();
    if (state) {
        state->pressure = pressure_pa;
        state->elements.assign(n, ElementActuation{});
    }
    if (pressure_pa == 0.0) return;

    const double tan_a0 = std::tan(spec.alpha0);
    const double tan_b0 = std::tan(spec.beta0);
    const double r_in = rod.geometry.inner_radius;
    const double r_out = rod.geometry.outer_radius;
    const double scale = spec.gamma * pressure_pa * std::numbers::pi;

    Vec3 previous = Vec3::Zero();
    for (std::size_t k = 0; k < n; ++k) {
        const double l1 = rod.length[k] / rod.rest_length[k];
        const double l2 = 1.0 / std::sqrt(l1);
        double kappa3 = 0.0;
        if (n > 1) {
            if (k == 0) kappa3 = rod.curvature[0].z();
            else if (k + 1 == n) kappa3 = rod.curvature[k - 1].z();
            else kappa3 = 0.5 * (rod.curvature[k - 1].z() + rod.curvature[k].z());
        }
        const double shift = r_out * l2 * kappa3;
        const double ta = l2 / l1 * tan_a0 + shift;
        const double tb = l2 / l1 * tan_b0 + shift;
        if (!std::isfinite(ta) || !std::isfinite(tb))
            throw DivergenceError("rod.curvature[" + std::to_string(k) + "]",
                                  "non-finite fiber state at element " + std::to_string(k));
        const FreeLoads unit = detail::free_loads_from_tangents(ta, tb);

        const double r_lumen = r_in * l2;
        const double force = scale * r_lumen * r_lumen * unit.force;
        const double couple = scale * r_lumen * r_lumen * r_lumen * unit.couple;

        const Vec3 d3 = rod.director[k].row(2).transpose();
        const Vec3 pair = force * d3;
        loads.force[k] -= pair;
        loads.force[k + 1] += pair;
        // moment of the pair when the element is sheared, as for internal force
        loads.couple[k] -= (rod.position[k + 1] - rod.position[k]).cross(pair);

        Vec3 active = couple * d3;
        if (spec.has_spine) {
            const Vec3 spine = rod.director[k].transpose() * spec.spine_direction;
            active -= spine_bending_couple(spec, force, r_out * l2, spine, d3);
        }
        if (k > 0) {
            const Vec3 junction = 0.5 * (previous + active);
            loads.couple[k - 1] -= junction;
            loads.couple[k] += junction;
        }
        previous = active;

        if (state) {
            auto& e = state->elements[k];
            e.axial_stretch = l1;
            e.radial_stretch = l2;
            e.twist = kappa3 * rod.length[k];
            e.alpha = std::atan(ta);
            e.beta = std::atan(tb);
            e.force = force;
            e.couple = couple;
        }
    }
}

}  // namespace softarm
