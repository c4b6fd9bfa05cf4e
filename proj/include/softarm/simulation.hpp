#pragma once

#include <cstdint>
#include <cstring>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "softarm/assembly.hpp"
#include "softarm/environment.hpp"
#include "softarm/errors.hpp"
#include "softarm/free_actuation.hpp"
#include "softarm/rod.hpp"

namespace softarm {

/// 64-bit FNV-1a.
class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t size)
    {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    void add(double v) { add_bytes(&v, sizeof v); }
    void add(const Vec3& v) { add_bytes(v.data(), 3 * sizeof(double)); }
    void add(const Mat3& m) { add_bytes(m.data(), 9 * sizeof(double)); }
    void add(const std::vector<double>& v) { add_bytes(v.data(), v.size() * sizeof(double)); }
    std::uint64_t value() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline void hash_state(Fnv1a& h, const Assembly& a)
{
    for (const auto& r : a.rods) {
        const RodState& s = r.state;
        for (const auto& x : s.position) h.add(x);
        for (const auto& v : s.velocity) h.add(v);
        for (const auto& q : s.director) h.add(q);
        for (const auto& w : s.omega) h.add(w);
    }
}

inline std::uint64_t state_hash(const Assembly& a)
{
    Fnv1a h;
    hash_state(h, a);
    return h.value();
}

/// An assembly in its environment, advanced with position Verlet at a
/// fixed step. Pressures are per rod, in Pa, and are held over a step.
class World {
public:
    World(Assembly assembly, Environment environment, double dt)
        : assembly_(std::move(assembly)), env_(std::move(environment)), dt_(dt)
    {
        if (!(dt_ > 0.0)) throw ConfigurationError("world: dt must be > 0");
        const std::size_t n = assembly_.rods.size();
        pressures_.assign(n, 0.0);
        actuation_.resize(n);
        internal_.resize(n);
        acc_.resize(n);
        assembly_.reset_loads();
        for (auto& o : env_.obstacles) o.validate();
        for (auto& r : assembly_.rods) {
            enforce_clamp(r.state);
            compute_strains(r.state);
        }
    }

    /// Smallest stable_dt over all rods.
    static double stable_step(const Assembly& a, double safety = kDefaultDtSafety)
    {
        double dt = std::numeric_limits<double>::infinity();
        for (const auto& r : a.rods) dt = std::min(dt, stable_dt(r.state, safety));
        return dt;
    }

    void set_pressure(std::size_t rod, double pascal)
    {
        const auto& entry = assembly_.rods.at(rod);
        if (pascal != 0.0) {
            if (!entry.actuator)
                throw ConfigurationError("rod '" + entry.id + "' is passive and cannot be pressurized");
            check_pressure(*entry.actuator, pascal, "rod '" + entry.id + "'");
        }
        pressures_[rod] = pascal;
    }
    void set_pressures(const std::vector<double>& pascal)
    {
        if (pascal.size() != pressures_.size()) throw ConfigurationError("world: pressure vector size mismatch");
        for (std::size_t i = 0; i < pascal.size(); ++i) set_pressure(i, pascal[i]);
    }

    void step()
    {
        const double half = 0.5 * dt_;
        auto& rods = assembly_.rods;
        for (auto& r : rods) {
            kinematic_update(r.state, half);
            enforce_clamp(r.state);
        }
        for (std::size_t i = 0; i < rods.size(); ++i) {
            try {
                compute_strains(rods[i].state);
            } catch (const DivergenceError& e) {
                // relabel "rod.<field>" with the rod id
                const std::string field = e.field();
                const std::string tail = field.rfind("rod.", 0) == 0 ? field.substr(4) : field;
                throw DivergenceError(rods[i].id + "." + tail, e.what());
            }
            constitutive_loads(rods[i].state, internal_[i]);
        }
        assembly_.reset_loads();
        apply_connection_loads(assembly_);
        for (std::size_t i = 0; i < rods.size(); ++i) {
            if (rods[i].actuator && pressures_[i] != 0.0)
                apply_free_loads(rods[i].state, *rods[i].actuator, pressures_[i], assembly_.loads[i],
                                 record_actuation_ ? &actuation_[i] : nullptr);
            gravity_loads(rods[i].state, env_.gravity, assembly_.loads[i]);
        }
        hertzian_contact(assembly_, env_, &step_warnings_);
        for (std::size_t i = 0; i < rods.size(); ++i) {
            accelerations(rods[i].state, internal_[i], assembly_.loads[i], acc_[i], Gyroscopic::Exclude);
            dynamic_update(rods[i].state, acc_[i], dt_);
        }
        for (auto& r : rods) {
            kinematic_update(r.state, half);
            enforce_clamp(r.state);
        }
        for (const auto& r : rods) check_finite(r.state, r.id);
        ++steps_;
        time_ = static_cast<double>(steps_) * dt_;
        if (!step_warnings_.empty()) {
            for (auto& m : step_warnings_.messages)
                if (warned_.insert(m).second) warnings_.add(std::move(m));
            step_warnings_.messages.clear();
        }
    }

    /// Recomputes strains (and actuation records) for the current state.
    void refresh()
    {
        for (auto& r : assembly_.rods) compute_strains(r.state);
        for (std::size_t i = 0; i < assembly_.rods.size(); ++i) {
            const auto& r = assembly_.rods[i];
            if (r.actuator) {
                ExternalLoads scratch;
                scratch.resize(r.state);
                apply_free_loads(r.state, *r.actuator, pressures_[i], scratch, &actuation_[i]);
            }
        }
    }

    void attach(const Payload& p) { attach_payload(assembly_, env_, p); }

    double time() const { return time_; }
    std::uint64_t steps() const { return steps_; }
    double dt() const { return dt_; }
    const Assembly& assembly() const { return assembly_; }
    Assembly& assembly() { return assembly_; }
    const Environment& environment() const { return env_; }
    Environment& environment() { return env_; }
    const std::vector<double>& pressures() const { return pressures_; }
    const std::vector<ActuationState>& actuation() const { return actuation_; }
    void record_actuation(bool on) { record_actuation_ = on; }
    const WarningLog& warnings() const { return warnings_; }

private:
    Assembly assembly_;
    Environment env_;
    double dt_;
    double time_ = 0.0;
    std::uint64_t steps_ = 0;
    std::vector<double> pressures_;
    std::vector<ActuationState> actuation_;
    std::vector<InternalLoads> internal_;
    std::vector<Accelerations> acc_;
    bool record_actuation_ = false;
    WarningLog warnings_;
    WarningLog step_warnings_;
    std::set<std::string> warned_;
};

/// Steps until the largest node speed stays below `speed_tol` for
/// `hold` seconds or `max_time` elapses. Returns true when settled.
inline bool settle(World& w, double max_time, double speed_tol = 1e-4, double hold = 0.05)
{
    double quiet = 0.0;
    const double end = w.time() + max_time;
    while (w.time() < end) {
        w.step();
        double vmax = 0.0;
        for (const auto& r : w.assembly().rods)
            for (const auto& v : r.state.velocity) vmax = std::max(vmax, v.squaredNorm());
        quiet = std::sqrt(vmax) < speed_tol ? quiet + w.dt() : 0.0;
        if (quiet >= hold) return true;
    }
    return false;
}


struct ConnectionTuning {
    double separation = 0.0;    // m, after the last probe
    double misalignment = 0.0;  // rad, after the last probe
    double stiffness_scale = 1.0;  // largest growth applied
    int probes = 0;
    bool met = false;
    bool capped = false;
};

struct TuningOptions {
    double separation_fraction = 0.01;  // of the outer radius
    double misalignment_limit = 0.02;   // rad
    double margin = 1.5;                // target below the limits
    double probe_damping = 20.0;        // 1/s, only during probes
    double probe_time = 3.0;            // s of simulated settling per probe
    int max_probes = 6;
    std::vector<double> pressures;      // Pa per rod; empty = every actuator at its maximum
};

/// Largest explicit-stable spring and torsion constants for a rod at step dt:
/// a quarter of m/dt^2 and J/dt^2 over its lightest node and element.
inline std::pair<double, double> connection_stiffness_cap(const RodState& rod, double dt)
{
    double m = std::numeric_limits<double>::infinity();
    double j = std::numeric_limits<double>::infinity();
    for (double x : rod.mass) m = std::min(m, x);
    for (const auto& x : rod.inertia) j = std::min(j, x.minCoeff());
    return {0.25 * m / (dt * dt), 0.25 * j / (dt * dt)};
}

/// Raises parallel and serial connection stiffness until a quasi-static probe
/// meets the separation and alignment limits or the stability cap is hit.
/// Each probe settles a copy of the world with heavy damping; the spring
/// deflection scales as 1/k, so the next scale follows from the ratio of
/// measured to target error.
inline ConnectionTuning tune_connection_stiffness(Assembly& a, const Environment& env, double dt,
                                                  const TuningOptions& opt = {})
{
    ConnectionTuning out;
    if (a.parallel.empty() && a.serial.empty()) {
        out.met = true;
        return out;
    }
    double r_out = std::numeric_limits<double>::infinity();
    for (const auto& r : a.rods) r_out = std::min(r_out, r.state.geometry.outer_radius);
    const double sep_target = opt.separation_fraction * r_out / opt.margin;
    const double align_target = opt.misalignment_limit / opt.margin;

    std::vector<double> pressures = opt.pressures;
    if (pressures.empty()) {
        pressures.assign(a.rods.size(), 0.0);
        for (std::size_t i = 0; i < a.rods.size(); ++i)
            if (a.rods[i].actuator) pressures[i] = a.rods[i].actuator->max_pressure_psi * kPsiToPa;
    }

    bool capped_s = false;
    bool capped_t = false;
    auto scale_all = [&](double fs, double ft) {
        auto bump = [&](auto& c) {
            const auto [si, ti] = connection_stiffness_cap(a.rods[c.rod_i].state, dt);
            const auto [sj, tj] = connection_stiffness_cap(a.rods[c.rod_j].state, dt);
            const double cap_s = std::min(si, sj);
            const double cap_t = std::min(ti, tj);
            if (c.k_s * fs > cap_s) capped_s = true;
            if (c.k_t * ft > cap_t) capped_t = true;
            c.k_s = std::min(c.k_s * fs, cap_s);
            c.k_t = std::min(c.k_t * ft, cap_t);
        };
        for (auto& c : a.parallel) bump(c);
        for (auto& c : a.serial) bump(c);
    };

    for (out.probes = 1; out.probes <= opt.max_probes; ++out.probes) {
        Assembly probe = a;
        for (auto& r : probe.rods) r.state.material.damping = opt.probe_damping;
        Environment probe_env = env;
        probe_env.obstacles.clear();
        probe_env.attached.reset();
        World w(std::move(probe), std::move(probe_env), dt);
        w.set_pressures(pressures);
        settle(w, opt.probe_time);
        out.separation = max_parallel_separation(w.assembly());
        out.misalignment = std::max(max_serial_misalignment(w.assembly()), max_parallel_misalignment(w.assembly()));
        const double fs = out.separation / sep_target;
        const double ft = out.misalignment / align_target;
        if (fs <= 1.0 && ft <= 1.0) {
            out.met = true;
            break;
        }
        if ((fs > 1.0 && capped_s) || (ft > 1.0 && capped_t)) {
            out.capped = true;
            break;
        }
        const double grow_s = std::max(1.0, fs * 1.2);
        const double grow_t = std::max(1.0, ft * 1.2);
        out.stiffness_scale *= std::max(grow_s, grow_t);
        scale_all(grow_s, grow_t);
    }
    out.probes = std::min(out.probes, opt.max_probes);
    return out;
}

}  // namespace softarm
