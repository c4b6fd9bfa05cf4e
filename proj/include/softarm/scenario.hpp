#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "softarm/assembly.hpp"
#include "softarm/control.hpp"
#include "softarm/environment.hpp"
#include "softarm/errors.hpp"
#include "softarm/simulation.hpp"

namespace softarm {

inline constexpr int kScenarioSchemaVersion = 1;

enum class EventKind { Pause, Resume, AttachPayload, Stop };

struct ScenarioEvent {
    double time = 0.0;
    EventKind kind = EventKind::Pause;
    std::string payload;  // AttachPayload only
};

inline const char* event_name(EventKind k)
{
    switch (k) {
    case EventKind::Pause: return "pause";
    case EventKind::Resume: return "resume";
    case EventKind::AttachPayload: return "attach_payload";
    case EventKind::Stop: return "stop";
    }
    return "?";
}

struct TaskPhase {
    std::string name;
    double start = 0.0;
    double end = 0.0;
};

/// Pick-and-retrieve task: the payload rod's tip must come within
/// `tolerance` of `pickup` at some time in [pickup_window_start, end], and
/// the payload must end up on the `near_side` of the wall.
struct TaskSpec {
    bool enabled = false;
    Vec3 pickup = Vec3::Zero();
    double tolerance = 0.01;
    double pickup_window_start = 0.0;
    double pickup_window_end = 0.0;
    std::string wall;
    std::string rod;
    std::vector<TaskPhase> phases;
};

struct Numerics {
    double dt = 0.0;  // 0: stable step
    double dt_safety = kDefaultDtSafety;
    double snapshot_hz = 30.0;
    double duration = 0.0;  // 0: until the trace or the last event ends
    bool tune_connections = true;
};

struct ControlConfig {
    ActionMapping mapping;
    double max_rate = 10.0;  // psi/s
    double cutoff = 2.0;     // Hz
    double sample_rate = kDefaultSampleRate;
};

struct ExplicitRod {
    std::string id;
    std::string actuator = "passive";  // bending, extending, clockwise, counterclockwise, passive
    double length = 0.18;
    int n_elements = 0;  // 0: arm default
    Pose base;
    double spine_deg = 0.0;
    bool clamped = false;
};

struct ActuatorOverride {
    std::string rod;  // "*" for every actuator
    std::optional<double> gamma, mu, alpha0_deg, beta0_deg, max_psi, min_psi;
};

struct Scenario {
    int schema_version = kScenarioSchemaVersion;
    std::string name = "unnamed";
    std::string preset = "br2-b3";  // empty when rods are explicit
    ArmOptions arm;
    std::vector<ExplicitRod> rods;
    std::vector<std::pair<std::string, std::string>> parallel;
    std::vector<std::pair<std::string, std::string>> serial;
    std::vector<ActuatorOverride> actuators;
    Environment environment;
    std::vector<Payload> payloads;
    ControlConfig control;
    std::vector<ScenarioEvent> events;
    Numerics numerics;
    TaskSpec task;

    const Payload* find_payload(const std::string& id) const
    {
        for (const auto& p : payloads)
            if (p.id == id) return &p;
        return nullptr;
    }
};

namespace detail {

using nlohmann::json;

/// Reads fields while collecting every problem with its path.
class ScenarioReader {
public:
    std::vector<std::string> issues;

    void fail(const std::string& path, const std::string& msg) { issues.push_back(path + ": " + msg); }

    template <class T>
    bool read(const json& obj, const char* key, const std::string& path, T& out)
    {
        if (!obj.is_object() || !obj.contains(key)) return false;
        const json& v = obj.at(key);
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            fail(path + "." + key, "wrong type");
            return false;
        }
        return true;
    }

    void positive(const json& obj, const char* key, const std::string& path, double& out)
    {
        if (read(obj, key, path, out) && !(out > 0.0 && std::isfinite(out))) fail(path + "." + key, "must be > 0");
    }
    void non_negative(const json& obj, const char* key, const std::string& path, double& out)
    {
        if (read(obj, key, path, out) && !(out >= 0.0 && std::isfinite(out))) fail(path + "." + key, "must be >= 0");
    }

    bool vec3(const json& obj, const char* key, const std::string& path, Vec3& out)
    {
        if (!obj.is_object() || !obj.contains(key)) return false;
        const json& v = obj.at(key);
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
            fail(path + "." + key, "expected [x, y, z]");
            return false;
        }
        out = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
        if (!out.allFinite()) {
            fail(path + "." + key, "non-finite component");
            return false;
        }
        return true;
    }

    /// {"position": [..], "rotvec": [..]} or {"position", "normal"}.
    void pose(const json& obj, const std::string& path, Pose& out)
    {
        vec3(obj, "position", path, out.position);
        Vec3 rv;
        if (vec3(obj, "rotvec", path, rv)) out.orientation = so3::exp_map(rv);
        Vec3 n;
        if (vec3(obj, "normal", path, n)) {
            if (n.norm() < 1e-12) {
                fail(path + ".normal", "must be nonzero");
            } else {
                n.normalize();
                // rows: a unit vector normal to n, n x it, n
                const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
                const Vec3 u = (helper - helper.dot(n) * n).normalized();
                out.orientation.row(0) = u.transpose();
                out.orientation.row(1) = n.cross(u).transpose();
                out.orientation.row(2) = n.transpose();
            }
        }
    }
};

inline FreeActuatorSpec actuator_by_name(const std::string& kind)
{
    if (kind == "bending") return FreeActuatorSpec::bending();
    if (kind == "extending") return FreeActuatorSpec::extending();
    if (kind == "clockwise") return FreeActuatorSpec::clockwise();
    if (kind == "counterclockwise") return FreeActuatorSpec::counterclockwise();
    throw ConfigurationError("unknown actuator type '" + kind + "'");
}

}  // namespace detail

/// Parses and validates a scenario document. Throws ValidationError listing
/// every problem found.
inline Scenario parse_scenario(const nlohmann::json& doc)
{
    using nlohmann::json;
    detail::ScenarioReader rd;
    Scenario s;
    if (!doc.is_object()) throw ValidationError({"(root): expected an object"});

    if (!rd.read(doc, "schema_version", "", s.schema_version)) rd.fail("schema_version", "required");
    else if (s.schema_version != kScenarioSchemaVersion)
        rd.fail("schema_version", "unsupported version " + std::to_string(s.schema_version) + " (expected " +
                                      std::to_string(kScenarioSchemaVersion) + ")");
    rd.read(doc, "name", "", s.name);

    const json arm = doc.value("arm", json::object());
    s.preset.clear();
    rd.read(arm, "preset", "arm", s.preset);
    rd.read(arm, "n_elements", "arm", s.arm.n_elements);
    if (s.arm.n_elements < 2) rd.fail("arm.n_elements", "must be >= 2");
    rd.positive(arm, "segment_length", "arm", s.arm.segment_length);
    rd.positive(arm, "outer_radius", "arm", s.arm.geometry.outer_radius);
    rd.positive(arm, "inner_radius", "arm", s.arm.geometry.inner_radius);
    if (s.arm.geometry.inner_radius >= s.arm.geometry.outer_radius)
        rd.fail("arm.inner_radius", "must be smaller than outer_radius");
    rd.read(arm, "spine_offset_deg", "arm", s.arm.spine_offset_deg);
    rd.read(arm, "clamp_base", "arm", s.arm.clamp_base);
    if (arm.contains("base")) rd.pose(arm.at("base"), "arm.base", s.arm.base);

    const json mat = doc.value("material", json::object());
    rd.positive(mat, "density", "material", s.arm.material.density);
    rd.positive(mat, "youngs_modulus", "material", s.arm.material.youngs_modulus);
    rd.non_negative(mat, "damping", "material", s.arm.material.damping);
    rd.read(mat, "poisson_ratio", "material", s.arm.material.poisson_ratio);
    if (!(s.arm.material.poisson_ratio >= 0.0 && s.arm.material.poisson_ratio <= 0.5))
        rd.fail("material.poisson_ratio", "must lie in [0, 0.5]");

    // explicit rods and connections
    if (doc.contains("rods")) {
        if (!s.preset.empty()) rd.fail("rods", "give either arm.preset or rods, not both");
        const json& rods = doc.at("rods");
        if (!rods.is_array()) rd.fail("rods", "expected a list");
        for (std::size_t i = 0; rods.is_array() && i < rods.size(); ++i) {
            const std::string path = "rods[" + std::to_string(i) + "]";
            ExplicitRod r;
            if (!rd.read(rods[i], "id", path, r.id) || r.id.empty()) rd.fail(path + ".id", "required");
            rd.read(rods[i], "actuator", path, r.actuator);
            if (r.actuator != "passive") {
                try {
                    (void)detail::actuator_by_name(r.actuator);
                } catch (const ConfigurationError& e) {
                    rd.fail(path + ".actuator", e.what());
                }
            }
            rd.positive(rods[i], "length", path, r.length);
            rd.read(rods[i], "n_elements", path, r.n_elements);
            if (r.n_elements != 0 && r.n_elements < 2) rd.fail(path + ".n_elements", "must be >= 2");
            rd.read(rods[i], "spine_deg", path, r.spine_deg);
            rd.read(rods[i], "clamped", path, r.clamped);
            if (rods[i].contains("base")) rd.pose(rods[i].at("base"), path + ".base", r.base);
            s.rods.push_back(r);
        }
    } else if (s.preset.empty()) {
        rd.fail("arm.preset", "required when no explicit rods are given");
    } else if (std::find(preset_names().begin(), preset_names().end(), s.preset) == preset_names().end()) {
        rd.fail("arm.preset", "unknown preset '" + s.preset + "'");
    }
    auto rod_known = [&](const std::string& id) {
        if (!s.preset.empty()) return true;  // checked after the assembly is built
        for (const auto& r : s.rods)
            if (r.id == id) return true;
        return false;
    };
    const json conns = doc.value("connections", json::object());
    for (const char* kind : {"parallel", "serial"}) {
        if (!conns.contains(kind)) continue;
        const json& list = conns.at(kind);
        for (std::size_t i = 0; list.is_array() && i < list.size(); ++i) {
            const std::string path = std::string("connections.") + kind + "[" + std::to_string(i) + "]";
            std::string a, b;
            rd.read(list[i], "from", path, a);
            rd.read(list[i], "to", path, b);
            if (!rod_known(a)) rd.fail(path + ".from", "unknown rod id '" + a + "'");
            if (!rod_known(b)) rd.fail(path + ".to", "unknown rod id '" + b + "'");
            (std::string(kind) == "parallel" ? s.parallel : s.serial).emplace_back(a, b);
        }
    }

    if (doc.contains("actuators")) {
        const json& acts = doc.at("actuators");
        if (!acts.is_object()) rd.fail("actuators", "expected an object keyed by rod id");
        for (auto it = acts.begin(); acts.is_object() && it != acts.end(); ++it) {
            const std::string path = "actuators." + it.key();
            ActuatorOverride o;
            o.rod = it.key();
            double v = 0.0;
            if (rd.read(it.value(), "gamma", path, v)) o.gamma = v;
            if (rd.read(it.value(), "mu", path, v)) o.mu = v;
            if (rd.read(it.value(), "alpha0_deg", path, v)) o.alpha0_deg = v;
            if (rd.read(it.value(), "beta0_deg", path, v)) o.beta0_deg = v;
            if (rd.read(it.value(), "max_psi", path, v)) o.max_psi = v;
            if (rd.read(it.value(), "min_psi", path, v)) o.min_psi = v;
            s.actuators.push_back(o);
        }
    }

    const json envj = doc.value("environment", json::object());
    rd.vec3(envj, "gravity", "environment", s.environment.gravity);
    rd.positive(envj, "contact_damping_ramp", "environment", s.environment.damping_ramp);
    if (envj.contains("obstacles")) {
        const json& obs = envj.at("obstacles");
        for (std::size_t i = 0; obs.is_array() && i < obs.size(); ++i) {
            const std::string path = "environment.obstacles[" + std::to_string(i) + "]";
            Obstacle o;
            rd.read(obs[i], "id", path, o.id);
            std::string type;
            if (!rd.read(obs[i], "type", path, type)) rd.fail(path + ".type", "required");
            else if (type == "plane_with_hole") o.kind = ObstacleKind::PlaneWithHole;
            else if (type == "cylinder") o.kind = ObstacleKind::Cylinder;
            else if (type == "half_space") o.kind = ObstacleKind::HalfSpace;
            else rd.fail(path + ".type", "unknown obstacle type '" + type + "'");
            rd.pose(obs[i], path, o.pose);
            rd.positive(obs[i], "hole_radius", path, o.hole_radius);
            rd.non_negative(obs[i], "thickness", path, o.thickness);
            rd.positive(obs[i], "radius", path, o.radius);
            rd.positive(obs[i], "length", path, o.length);
            rd.positive(obs[i], "stiffness", path, o.stiffness);
            rd.non_negative(obs[i], "damping", path, o.damping);
            s.environment.obstacles.push_back(o);
        }
    }
    if (envj.contains("payloads")) {
        const json& pl = envj.at("payloads");
        for (std::size_t i = 0; pl.is_array() && i < pl.size(); ++i) {
            const std::string path = "environment.payloads[" + std::to_string(i) + "]";
            Payload p;
            rd.read(pl[i], "id", path, p.id);
            rd.non_negative(pl[i], "mass", path, p.mass);
            rd.positive(pl[i], "radius", path, p.radius);
            rd.positive(pl[i], "length", path, p.length);
            if (!rd.read(pl[i], "rod", path, p.rod)) rd.fail(path + ".rod", "required");
            else if (!rod_known(p.rod)) rd.fail(path + ".rod", "unknown rod id '" + p.rod + "'");
            rd.read(pl[i], "contact_spheres", path, p.contact_spheres);
            if (s.find_payload(p.id)) rd.fail(path + ".id", "duplicate payload id '" + p.id + "'");
            s.payloads.push_back(p);
        }
    }

    const json ctl = doc.value("control", json::object());
    rd.positive(ctl, "max_rate", "control", s.control.max_rate);
    rd.read(ctl, "cutoff", "control", s.control.cutoff);
    rd.positive(ctl, "sample_rate", "control", s.control.sample_rate);
    if (ctl.contains("mapping") && ctl.at("mapping").is_array()) {
        const json& chs = ctl.at("mapping");
        s.control.mapping.id = s.name + ".mapping";
        for (std::size_t i = 0; i < chs.size(); ++i) {
            const std::string path = "control.mapping[" + std::to_string(i) + "]";
            ActionChannel ch;
            rd.read(chs[i], "label", path, ch.label);
            const json targets = chs[i].value("targets", json::array());
            for (std::size_t k = 0; k < targets.size(); ++k) {
                const std::string tp = path + ".targets[" + std::to_string(k) + "]";
                ChannelTarget t;
                if (targets[k].is_string()) {
                    t.rod = targets[k].get<std::string>();
                } else {
                    rd.read(targets[k], "rod", tp, t.rod);
                    rd.read(targets[k], "gain", tp, t.gain);
                }
                if (!rod_known(t.rod)) rd.fail(tp, "unknown rod id '" + t.rod + "'");
                ch.targets.push_back(t);
            }
            s.control.mapping.channels.push_back(ch);
        }
    } else if (!s.preset.empty()) {
        try {
            s.control.mapping = default_mapping(s.preset);
        } catch (const ConfigurationError& e) {
            rd.fail("control.mapping", e.what());
        }
    } else {
        rd.fail("control.mapping", "required when rods are explicit");
    }

    if (doc.contains("events")) {
        const json& ev = doc.at("events");
        for (std::size_t i = 0; ev.is_array() && i < ev.size(); ++i) {
            const std::string path = "events[" + std::to_string(i) + "]";
            ScenarioEvent e;
            rd.non_negative(ev[i], "time", path, e.time);
            std::string type;
            rd.read(ev[i], "type", path, type);
            if (type == "pause") e.kind = EventKind::Pause;
            else if (type == "resume") e.kind = EventKind::Resume;
            else if (type == "stop") e.kind = EventKind::Stop;
            else if (type == "attach_payload") {
                e.kind = EventKind::AttachPayload;
                rd.read(ev[i], "payload", path, e.payload);
                if (!s.find_payload(e.payload)) rd.fail(path + ".payload", "unknown payload id '" + e.payload + "'");
            } else rd.fail(path + ".type", "unknown event type '" + type + "'");
            if (i > 0 && e.time < s.events.back().time) rd.fail(path + ".time", "events must be in time order");
            s.events.push_back(e);
        }
    }

    const json num = doc.value("numerics", json::object());
    rd.non_negative(num, "dt", "numerics", s.numerics.dt);
    rd.positive(num, "dt_safety", "numerics", s.numerics.dt_safety);
    rd.positive(num, "snapshot_hz", "numerics", s.numerics.snapshot_hz);
    rd.non_negative(num, "duration", "numerics", s.numerics.duration);
    rd.read(num, "tune_connections", "numerics", s.numerics.tune_connections);

    if (doc.contains("task")) {
        const json& t = doc.at("task");
        s.task.enabled = true;
        if (!rd.vec3(t, "pickup", "task", s.task.pickup)) rd.fail("task.pickup", "required");
        rd.positive(t, "tolerance", "task", s.task.tolerance);
        rd.non_negative(t, "pickup_window_start", "task", s.task.pickup_window_start);
        rd.non_negative(t, "pickup_window_end", "task", s.task.pickup_window_end);
        rd.read(t, "wall", "task", s.task.wall);
        rd.read(t, "rod", "task", s.task.rod);
        if (!s.task.rod.empty() && !rod_known(s.task.rod)) rd.fail("task.rod", "unknown rod id '" + s.task.rod + "'");
        bool wall_found = s.task.wall.empty();
        for (const auto& o : s.environment.obstacles) wall_found = wall_found || o.id == s.task.wall;
        if (!wall_found) rd.fail("task.wall", "unknown obstacle id '" + s.task.wall + "'");
        const json phases = t.value("phases", json::array());
        for (std::size_t i = 0; i < phases.size(); ++i) {
            const std::string path = "task.phases[" + std::to_string(i) + "]";
            TaskPhase p;
            rd.read(phases[i], "name", path, p.name);
            rd.non_negative(phases[i], "start", path, p.start);
            rd.non_negative(phases[i], "end", path, p.end);
            if (!(p.end > p.start)) rd.fail(path, "end must be after start");
            if (i > 0 && p.start < s.task.phases.back().end - 1e-12) rd.fail(path + ".start", "phases overlap");
            s.task.phases.push_back(p);
        }
    }

    if (!rd.issues.empty()) throw ValidationError(rd.issues);
    return s;
}

inline Scenario parse_scenario_text(const std::string& text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError({std::string("(document): ") + e.what()});
    }
    return parse_scenario(doc);
}

inline std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigurationError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario_text(read_text_file(path)); }

/// Builds the assembly, applies actuator overrides and checks every
/// cross-reference against it.
inline Assembly build_assembly(const Scenario& s)
{
    Assembly a;
    std::vector<std::string> issues;
    if (!s.preset.empty()) {
        a = make_preset(s.preset, s.arm);
    } else {
        for (std::size_t i = 0; i < s.rods.size(); ++i) {
            const auto& r = s.rods[i];
            RodGeometry g = s.arm.geometry;
            g.rest_length = r.length;
            RodEntry e{r.id, discretize(g, s.arm.material, r.n_elements ? r.n_elements : s.arm.n_elements, r.base),
                       std::nullopt};
            e.state.clamped_base = r.clamped;
            if (r.actuator != "passive") {
                FreeActuatorSpec spec = detail::actuator_by_name(r.actuator);
                if (spec.has_spine) spec.spine_direction = in_plane_direction(r.spine_deg);
                e.actuator = spec;
            }
            a.rods.push_back(std::move(e));
        }
        for (std::size_t i = 0; i < s.parallel.size(); ++i) {
            try {
                a.parallel.push_back(
                    make_parallel_connection(a, a.index_of(s.parallel[i].first), a.index_of(s.parallel[i].second)));
            } catch (const ConfigurationError& e) {
                issues.push_back("connections.parallel[" + std::to_string(i) + "]: " + e.what());
            }
        }
        for (std::size_t i = 0; i < s.serial.size(); ++i) {
            try {
                a.serial.push_back(
                    make_serial_connection(a, a.index_of(s.serial[i].first), a.index_of(s.serial[i].second)));
            } catch (const ConfigurationError& e) {
                issues.push_back("connections.serial[" + std::to_string(i) + "]: " + e.what());
            }
        }
        if (issues.empty()) {
            try {
                validate_assembly(a);
            } catch (const ConfigurationError& e) {
                issues.push_back(std::string("rods: ") + e.what());
            }
        }
    }
    for (const auto& o : s.actuators) {
        bool matched = false;
        for (auto& r : a.rods) {
            if (!(o.rod == "*" || o.rod == r.id)) continue;
            if (!r.actuator) {
                if (o.rod != "*") issues.push_back("actuators." + o.rod + ": rod is passive");
                continue;
            }
            matched = true;
            auto& spec = *r.actuator;
            if (o.gamma) spec.gamma = *o.gamma;
            if (o.mu) spec.mu = *o.mu;
            if (o.alpha0_deg) spec.alpha0 = deg_to_rad(*o.alpha0_deg);
            if (o.beta0_deg) spec.beta0 = deg_to_rad(*o.beta0_deg);
            if (o.max_psi) spec.max_pressure_psi = *o.max_psi;
            if (o.min_psi) spec.min_pressure_psi = *o.min_psi;
            try {
                spec.validate();
            } catch (const ConfigurationError& e) {
                issues.push_back("actuators." + o.rod + ": " + e.what());
            }
        }
        if (!matched && o.rod != "*") {
            bool exists = false;
            for (const auto& r : a.rods) exists = exists || r.id == o.rod;
            if (!exists) issues.push_back("actuators." + o.rod + ": unknown rod id '" + o.rod + "'");
        }
    }
    auto check_rod = [&](const std::string& path, const std::string& id) {
        for (const auto& r : a.rods)
            if (r.id == id) return;
        issues.push_back(path + ": unknown rod id '" + id + "'");
    };
    for (std::size_t i = 0; i < s.payloads.size(); ++i)
        check_rod("environment.payloads[" + std::to_string(i) + "].rod", s.payloads[i].rod);
    if (!s.task.rod.empty()) check_rod("task.rod", s.task.rod);
    if (issues.empty()) {
        try {
            s.control.mapping.validate(a);
        } catch (const ConfigurationError& e) {
            issues.push_back(std::string("control.mapping: ") + e.what());
        }
    }
    for (const auto& o : s.environment.obstacles) {
        try {
            o.validate();
        } catch (const Error& e) {
            issues.push_back("environment.obstacles." + o.id + ": " + e.what());
        }
    }
    if (!issues.empty()) throw ValidationError(issues);
    a.reset_loads();
    return a;
}

/// Step used for a scenario: the override, or the stable step of its assembly.
inline double scenario_dt(const Scenario& s, const Assembly& a)
{
    const double stable = World::stable_step(a, s.numerics.dt_safety);
    if (s.numerics.dt > 0.0) {
        if (s.numerics.dt > stable)
            throw ValidationError({"numerics.dt: " + std::to_string(s.numerics.dt) + " exceeds the stable step " +
                                   std::to_string(stable)});
        return s.numerics.dt;
    }
    return stable;
}

/// Differences that make a trace unusable with a scenario; empty if it fits.
inline std::vector<std::string> trace_mismatch(const ControlTrace& trace, const Scenario& s)
{
    std::vector<std::string> diff;
    const std::string scen = trace.meta("scenario");
    if (!scen.empty() && scen != s.name) diff.push_back("scenario: trace '" + scen + "' vs loaded '" + s.name + "'");
    const std::string map = trace.meta("mapping");
    if (!map.empty() && map != s.control.mapping.id)
        diff.push_back("mapping: trace '" + map + "' vs loaded '" + s.control.mapping.id + "'");
    if (!trace.samples.empty() && trace.channels() != s.control.mapping.size())
        diff.push_back("channels: trace " + std::to_string(trace.channels()) + " vs loaded " +
                       std::to_string(s.control.mapping.size()));
    return diff;
}

}  // namespace softarm
