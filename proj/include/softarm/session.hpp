#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "softarm/control.hpp"
#include "softarm/metrics.hpp"
#include "softarm/scenario.hpp"
#include "softarm/simulation.hpp"

namespace softarm {

inline constexpr int kProtocolVersion = 1;

/// Immutable serialized state at one instant.
struct Snapshot {
    double time = 0.0;
    std::uint64_t step = 0;
    std::shared_ptr<const std::string> text;
};

struct Reply {
    bool ok = true;
    std::string reason;
    nlohmann::json data = nlohmann::json::object();

    nlohmann::json to_json(const std::string& command) const
    {
        nlohmann::json j{{"type", ok ? "ack" : "nack"}, {"command", command}};
        if (!ok) j["reason"] = reason;
        if (!data.empty()) j["data"] = data;
        return j;
    }
};

/// Outcome of the pick-and-retrieve task.
struct TaskReport {
    bool evaluated = false;
    double min_pickup_distance = std::numeric_limits<double>::infinity();
    double pickup_time = -1.0;
    bool pickup_reached = false;
    std::vector<std::pair<std::string, bool>> phases;  // completed without fault
    double max_penetration = 0.0;
    double penetration_bound = 0.0;
    bool penetration_ok = true;
    bool payload_attached = false;
    double payload_side = 0.0;  // signed distance of the payload from the wall, towards the base side
    bool payload_near_side = false;

    bool passed() const
    {
        bool phases_ok = !phases.empty();
        for (const auto& p : phases) phases_ok = phases_ok && p.second;
        return evaluated && pickup_reached && phases_ok && penetration_ok && payload_attached && payload_near_side;
    }
};

/// One simulated arm with its control pipeline: commands are latched at the
/// control ticks, ramped by the smoother every step and mapped to rod
/// pressures. Wall-clock time never enters; the same commands at the same
/// ticks give the same trajectory.
class Session {
public:
    explicit Session(Scenario scenario)
        : scenario_(std::move(scenario)), initial_(build_initial()), state_(fresh_state())
    {
        tick_ = 1.0 / scenario_.control.sample_rate;
        snapshot_period_ = 1.0 / scenario_.numerics.snapshot_hz;
        reset();
    }

    const Scenario& scenario() const { return scenario_; }
    const World& world() const { return state_.world; }
    double time() const { return state_.world.time(); }
    double dt() const { return dt_; }
    bool paused() const { return state_.paused; }
    bool stopped() const { return state_.stopped; }
    bool recording() const { return recording_.has_value(); }
    bool replaying() const { return replay_.has_value(); }
    const std::optional<std::string>& fault() const { return fault_; }
    const std::optional<ConnectionTuning>& tuning() const { return tuning_; }
    const std::vector<double>& actions() const { return state_.smoother.value(); }
    const std::vector<double>& target() const { return state_.target; }
    /// Hash of the state at every control tick so far plus the current one.
    std::uint64_t trajectory_hash() const
    {
        Fnv1a h = state_.hash;
        hash_state(h, state_.world.assembly());
        return h.value();
    }
    const TaskReport& task() const { return state_.task; }
    const WarningLog& warnings() const { return warnings_; }

    /// Back to the scenario's initial state; drops replay and recording.
    void reset()
    {
        state_ = fresh_state();
        pending_ = state_.target;
        replay_.reset();
        recording_.reset();
        checkpoint_.reset();
        fault_.reset();
        last_good_ = snapshot();
        next_snapshot_ = snapshot_period_;
    }

    /// Advances one step. Returns false when nothing moved (stopped, paused,
    /// faulted).
    bool advance()
    {
        if (fault_ || state_.stopped) return false;
        run_due_events();
        if (state_.paused || state_.stopped) return false;
        try {
            const double t = state_.world.time();
            if (t >= static_cast<double>(state_.tick) * tick_ - 1e-9 * tick_) latch();
            const auto& smooth = state_.smoother.advance(state_.target, dt_);
            const PressureCommand cmd = map_actions(smooth, scenario_.control.mapping, state_.world.assembly());
            for (std::size_t i = 0; i < cmd.psi.size(); ++i) state_.world.set_pressure(i, cmd.psi[i] * kPsiToPa);
            state_.world.step();
        } catch (const Error& e) {
            fault_ = e.what();
            state_.events_since_snapshot.push_back("fault");
            return false;
        }
        if (state_.world.time() + 1e-12 >= next_snapshot_) {
            next_snapshot_ += snapshot_period_;
            last_good_ = snapshot();
            state_.events_since_snapshot.clear();
            if (on_snapshot) on_snapshot(last_good_);
        }
        if (replay_ && state_.world.time() > replay_->duration() + tick_) finish_replay();
        return true;
    }

    /// Steps until sim time `t`, a stop, a fault or an unresolved pause.
    void run_until(double t)
    {
        while (state_.world.time() < t - 0.5 * dt_)
            if (!advance()) break;
        if (state_.task.evaluated) update_task(state_.world.time());
    }

    /// End time of a batch run: the duration setting, else the end of the
    /// replayed trace or the last event.
    double batch_end() const
    {
        if (scenario_.numerics.duration > 0.0) return scenario_.numerics.duration;
        double end = 0.0;
        if (replay_) end = std::max(end, replay_->duration());
        for (const auto& e : scenario_.events) end = std::max(end, e.time);
        if (!scenario_.task.phases.empty()) end = std::max(end, scenario_.task.phases.back().end);
        return end;
    }

    /// Consistent cut of the current state.
    Snapshot snapshot() const
    {
        nlohmann::json j;
        const World& w = state_.world;
        j["type"] = "snapshot";
        j["time"] = w.time();
        j["step"] = w.steps();
        nlohmann::json rods = nlohmann::json::array();
        const auto& env = w.environment();
        for (std::size_t r = 0; r < w.assembly().rods.size(); ++r) {
            const auto& entry = w.assembly().rods[r];
            const RodState& s = entry.state;
            std::vector<double> pos, quat, radii;
            for (const auto& x : s.position) pos.insert(pos.end(), {x.x(), x.y(), x.z()});
            for (const auto& q : s.director) {
                const Eigen::Quaterniond e(Mat3(q.transpose()));
                quat.insert(quat.end(), {e.w(), e.x(), e.y(), e.z()});
            }
            for (std::size_t i = 0; i < s.n_nodes(); ++i) {
                const std::size_t a = i == 0 ? 0 : i - 1;
                const std::size_t b = std::min(i, s.n_elements() - 1);
                const double stretch = 0.5 * (s.length[a] / s.rest_length[a] + s.length[b] / s.rest_length[b]);
                radii.push_back(s.geometry.outer_radius / std::sqrt(stretch));
            }
            std::vector<int> contact(s.n_nodes(), 0);
            if (r < env.contact_flags.size())
                for (std::size_t i = 0; i < s.n_nodes(); ++i) contact[i] = env.contact_flags[r][i];
            rods.push_back({{"id", entry.id},
                            {"positions", pos},
                            {"quaternions", quat},
                            {"radii", radii},
                            {"contact", contact}});
        }
        j["rods"] = rods;
        std::vector<double> psi;
        for (double p : w.pressures()) psi.push_back(p / kPsiToPa);
        j["pressures_psi"] = psi;
        j["actions"] = state_.smoother.value();
        j["target"] = state_.target;
        j["events"] = state_.events_since_snapshot;
        j["paused"] = state_.paused;
        j["recording"] = recording_.has_value();
        j["replaying"] = replay_.has_value();
        if (const auto c = payload_center(w.assembly(), env)) {
            j["payload"] = {{"id", env.attached->payload.id},
                            {"center", {c->x(), c->y(), c->z()}},
                            {"radius", env.attached->payload.radius},
                            {"length", env.attached->payload.length}};
        }
        if (fault_) j["fault"] = *fault_;
        return {w.time(), w.steps(), std::make_shared<const std::string>(j.dump())};
    }

    /// Last snapshot taken before any fault.
    const Snapshot& last_good_snapshot() const { return last_good_; }

    nlohmann::json hello() const
    {
        std::vector<std::string> labels, ids;
        for (const auto& c : scenario_.control.mapping.channels) labels.push_back(c.label);
        for (const auto& r : state_.world.assembly().rods) ids.push_back(r.id);
        std::vector<std::string> obstacles;
        for (const auto& o : scenario_.environment.obstacles) obstacles.push_back(o.id);
        return {{"type", "hello"},
                {"protocol_version", kProtocolVersion},
                {"scenario", scenario_.name},
                {"mapping", scenario_.control.mapping.id},
                {"channels", labels},
                {"rods", ids},
                {"obstacles", obstacles},
                {"dt", dt_},
                {"sample_rate", scenario_.control.sample_rate},
                {"snapshot_hz", 1.0 / snapshot_period_},
                {"action_range_psi", {kMinActionPsi, kMaxActionPsi}}};
    }

    /// Changes the snapshot rate (from a client hello).
    void set_snapshot_rate(double hz)
    {
        if (!(hz > 0.0 && hz <= 1000.0)) throw ConfigurationError("snapshot rate must lie in (0, 1000] Hz");
        snapshot_period_ = 1.0 / hz;
        next_snapshot_ = state_.world.time() + snapshot_period_;
    }

    /// Applies one client command.
    Reply command(const nlohmann::json& msg)
    {
        if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
            return nack("message must be an object with a string 'type'");
        const std::string type = msg["type"];
        if (fault_ && type != "hello") return nack("session faulted: " + *fault_);
        try {
            if (type == "hello") {
                if (msg.contains("protocol_version") && msg["protocol_version"] != kProtocolVersion)
                    return nack("protocol version mismatch: server speaks " + std::to_string(kProtocolVersion));
                if (msg.contains("snapshot_hz")) set_snapshot_rate(msg["snapshot_hz"].get<double>());
                return {true, "", hello()};
            }
            if (type == "set_actions") {
                if (!msg.contains("actions") || !msg["actions"].is_array())
                    return nack("set_actions needs an 'actions' array");
                std::vector<double> a;
                for (const auto& v : msg["actions"]) {
                    if (!v.is_number()) return nack("actions must be numbers");
                    a.push_back(v.get<double>());
                }
                if (a.size() != scenario_.control.mapping.size())
                    return nack("expected " + std::to_string(scenario_.control.mapping.size()) + " actions, got " +
                                std::to_string(a.size()));
                if (replay_) return nack("replay in progress");
                for (double& v : a) {
                    if (!std::isfinite(v)) return nack("actions must be finite");
                    v = std::clamp(v, kMinActionPsi, kMaxActionPsi);
                }
                pending_ = a;
                return {true, "", {{"actions", a}}};
            }
            if (type == "pause") {
                state_.paused = true;
                state_.events_since_snapshot.push_back("pause");
                return {};
            }
            if (type == "resume") {
                state_.paused = false;
                state_.events_since_snapshot.push_back("resume");
                return {};
            }
            if (type == "attach_payload") {
                if (!msg.contains("id") || !msg["id"].is_string()) return nack("attach_payload needs an 'id'");
                const std::string id = msg["id"];
                if (const std::string err = attach(id); !err.empty()) return nack(err);
                if (recording_) recording_->metadata.emplace_back("event", event_text(time(), id));
                return {};
            }
            if (type == "start_record") {
                if (replay_) return nack("replay in progress");
                start_record();
                return {};
            }
            if (type == "stop_record") {
                if (!recording_) return nack("not recording");
                ControlTrace t = std::move(*recording_);
                recording_.reset();
                last_recording_ = t;
                return {true, "", {{"trace", format_trace(t)}, {"hash", hash_text(trajectory_hash())}}};
            }
            if (type == "load_trace") {
                if (!msg.contains("trace") || !msg["trace"].is_string()) return nack("load_trace needs 'trace' text");
                const ControlTrace t = parse_trace(msg["trace"].get<std::string>());
                const auto diff = trace_mismatch(t, scenario_);
                if (!diff.empty()) {
                    std::string reason = "trace does not fit this scenario:";
                    for (const auto& d : diff) reason += "\n  " + d;
                    return nack(reason);
                }
                loaded_ = t;
                return {true, "", {{"samples", t.samples.size()}, {"duration", t.duration()}}};
            }
            if (type == "replay") {
                std::optional<ControlTrace> t = loaded_ ? loaded_ : last_recording_;
                if (!t) return nack("no trace loaded or recorded");
                start_replay(*t);
                return {true, "", {{"start_time", time()}}};
            }
            if (type == "stop") {
                state_.stopped = true;
                return {};
            }
        } catch (const Error& e) {
            return nack(e.what());
        } catch (const nlohmann::json::exception& e) {
            return nack(std::string("malformed message: ") + e.what());
        }
        return nack("unknown command '" + type + "'");
    }

    Reply command_text(const std::string& text)
    {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            return nack(std::string("malformed JSON: ") + e.what());
        }
        return command(j);
    }

    /// Drives the session from a trace. A trace recorded in this session
    /// restarts from the state at its recording start; any other starts from
    /// the initial state.
    void start_replay(const ControlTrace& t)
    {
        t.validate();
        const auto diff = trace_mismatch(t, scenario_);
        if (!diff.empty()) throw ConfigurationError("trace does not fit this scenario: " + diff.front());
        if (t.channels() != 0 && t.channels() != scenario_.control.mapping.size())
            throw ConfigurationError("trace channel count differs from the mapping");
        const std::string origin = t.meta("recorded_from");
        if (checkpoint_ && !origin.empty() && origin == checkpoint_->id) {
            state_ = checkpoint_->state;
            fault_.reset();
        } else {
            auto keep = checkpoint_;
            reset();
            checkpoint_ = keep;
        }
        recording_.reset();
        replay_ = t;
        replay_events_.clear();
        for (const auto& [k, v] : t.metadata)
            if (k == "event") replay_events_.push_back(parse_event(v));
        last_good_ = snapshot();
        next_snapshot_ = time() + snapshot_period_;
    }

    void start_record()
    {
        ControlTrace t;
        ++record_count_;
        const std::string id = "rec" + std::to_string(record_count_) + "@" + std::to_string(state_.world.steps());
        t.set_meta("scenario", scenario_.name);
        t.set_meta("mapping", scenario_.control.mapping.id);
        t.set_meta("sample_rate", number_text(scenario_.control.sample_rate));
        t.set_meta("start_time", number_text(time()));
        t.set_meta("recorded_from", id);
        checkpoint_ = Checkpoint{id, state_};
        recording_ = t;
    }

    std::function<void(const Snapshot&)> on_snapshot;

    static std::string hash_text(std::uint64_t h)
    {
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    /// Strain record along the first serial chain of the arm, base first.
    StrainRecord arm_record() const
    {
        const Assembly& a = state_.world.assembly();
        std::vector<std::string> chain{a.rods.front().id};
        bool extended = true;
        while (extended) {
            extended = false;
            const std::size_t last = a.index_of(chain.back());
            for (const auto& c : a.serial)
                if (c.rod_i == last) {
                    chain.push_back(a.rods[c.rod_j].id);
                    extended = true;
                    break;
                }
        }
        return strain_record(a, chain);
    }

private:
    struct State {
        World world;
        ActionSmoother smoother;
        std::vector<double> target;
        std::uint64_t tick = 0;
        bool paused = false;
        bool stopped = false;
        std::vector<ScenarioEvent> events;
        std::size_t next_event = 0;
        std::size_t next_replay_event = 0;
        std::set<std::string> attached;
        std::vector<std::string> events_since_snapshot;
        Fnv1a hash;
        TaskReport task;
    };

    struct Checkpoint {
        std::string id;
        State state;
    };

    static Reply nack(std::string reason) { return {false, std::move(reason), {}}; }

    std::shared_ptr<const World> build_initial()
    {
        Assembly a = build_assembly(scenario_);
        dt_ = scenario_dt(scenario_, a);
        if (scenario_.numerics.tune_connections && (!a.parallel.empty() || !a.serial.empty())) {
            Environment probe_env = scenario_.environment;
            probe_env.obstacles.clear();
            tuning_ = tune_connection_stiffness(a, probe_env, dt_);
        }
        return std::make_shared<const World>(std::move(a), scenario_.environment, dt_);
    }

    State fresh_state() const
    {
        const std::size_t n = scenario_.control.mapping.size();
        State s{*initial_, ActionSmoother(n, scenario_.control.max_rate, scenario_.control.cutoff)};
        s.target.assign(n, 0.0);
        s.events = scenario_.events;
        if (scenario_.task.enabled) init_task(s.task);
        return s;
    }

    static std::string number_text(double v)
    {
        std::string s;
        detail::append_double(s, v);
        return s;
    }

    static std::string event_text(double t, const std::string& payload)
    {
        return number_text(t) + " attach_payload " + payload;
    }

    static ScenarioEvent parse_event(const std::string& text)
    {
        std::istringstream in(text);
        std::string time, kind, payload;
        in >> time >> kind >> payload;
        if (kind != "attach_payload" || payload.empty()) throw FormatError("trace event '" + text + "' not understood");
        return {detail::parse_double(time, 0), EventKind::AttachPayload, payload};
    }

    void init_task(TaskReport& r) const
    {
        r.evaluated = true;
        for (const auto& p : scenario_.task.phases) r.phases.emplace_back(p.name, false);
        double radius = std::numeric_limits<double>::infinity();
        for (const auto& rod : initial_->assembly().rods) radius = std::min(radius, rod.state.geometry.outer_radius);
        for (const auto& p : scenario_.payloads) radius = std::min(radius, p.radius);
        r.penetration_bound = radius;
    }

    std::string attach(const std::string& id)
    {
        const Payload* p = scenario_.find_payload(id);
        if (!p) return "unknown payload id '" + id + "'";
        if (state_.attached.count(id)) return "payload '" + id + "' is already attached";
        if (state_.world.environment().attached) return "another payload is already attached";
        state_.world.attach(*p);
        state_.attached.insert(id);
        state_.events_since_snapshot.push_back("attach_payload:" + id);
        return {};
    }

    void run_due_events()
    {
        const double t = state_.world.time() + 0.5 * dt_;
        auto& evs = state_.events;
        while (state_.next_event < evs.size() && evs[state_.next_event].time <= t) {
            const ScenarioEvent e = evs[state_.next_event++];
            switch (e.kind) {
            case EventKind::Pause:
                state_.paused = true;
                state_.events_since_snapshot.push_back("pause");
                break;
            case EventKind::Resume:
                state_.paused = false;
                state_.events_since_snapshot.push_back("resume");
                break;
            case EventKind::Stop:
                state_.stopped = true;
                state_.events_since_snapshot.push_back("stop");
                break;
            case EventKind::AttachPayload:
                if (const std::string err = attach(e.payload); !err.empty()) warnings_.add("event: " + err);
                break;
            }
        }
        while (replay_ && state_.next_replay_event < replay_events_.size() &&
               replay_events_[state_.next_replay_event].time <= t) {
            const auto& e = replay_events_[state_.next_replay_event++];
            if (const std::string err = attach(e.payload); !err.empty()) warnings_.add("replay: " + err);
        }
    }

    /// Control tick: fix the target for the coming period, log it and fold
    /// the state into the trajectory hash.
    void latch()
    {
        const double tick_time = static_cast<double>(state_.tick) / scenario_.control.sample_rate;
        if (replay_) state_.target = replay_->sample_at(tick_time, scenario_.control.mapping.size());
        else state_.target = pending_;
        if (recording_) recording_->samples.push_back({tick_time, state_.target});
        ++state_.tick;
        hash_state(state_.hash, state_.world.assembly());
        state_.hash.add(state_.target);
        if (state_.task.evaluated) update_task(tick_time);
    }

    void update_task(double t)
    {
        TaskReport& r = state_.task;
        const auto& task = scenario_.task;
        const auto& env = state_.world.environment();
        const Assembly& a = state_.world.assembly();
        if (!task.rod.empty() && t >= task.pickup_window_start &&
            (task.pickup_window_end <= 0.0 || t <= task.pickup_window_end)) {
            const RodState& rod = a.rods[a.index_of(task.rod)].state;
            const double d = (rod.position.back() - task.pickup).norm();
            if (d < r.min_pickup_distance) {
                r.min_pickup_distance = d;
                r.pickup_time = t;
            }
            r.pickup_reached = r.min_pickup_distance <= task.tolerance;
        }
        for (std::size_t i = 0; i < task.phases.size(); ++i)
            if (t + 0.5 * tick_ >= task.phases[i].end && !fault_) r.phases[i].second = true;
        r.max_penetration = env.max_penetration;
        r.penetration_ok = r.max_penetration < r.penetration_bound;
        r.payload_attached = env.attached.has_value();
        if (const auto c = payload_center(a, env); c && !task.wall.empty()) {
            for (const auto& o : env.obstacles) {
                if (o.id != task.wall) continue;
                const Vec3 n = o.pose.orientation.row(2).transpose();
                const double base_side = (a.rods.front().state.base.position - o.pose.position).dot(n);
                const double side = (*c - o.pose.position).dot(n);
                r.payload_side = base_side >= 0.0 ? side : -side;
                r.payload_near_side = r.payload_side > 0.0;
            }
        }
    }

    void finish_replay()
    {
        pending_ = state_.target;
        replay_.reset();
        state_.events_since_snapshot.push_back("replay_done");
    }

    // declaration order matters: build_initial() sets dt_ and tuning_
    Scenario scenario_;
    double dt_ = 0.0;
    std::optional<ConnectionTuning> tuning_;
    std::shared_ptr<const World> initial_;
    State state_;
    double tick_ = 0.02;
    double snapshot_period_ = 1.0 / 30.0;
    double next_snapshot_ = 0.0;
    std::vector<double> pending_;
    std::optional<ControlTrace> recording_;
    std::optional<ControlTrace> last_recording_;
    std::optional<ControlTrace> loaded_;
    std::optional<ControlTrace> replay_;
    std::vector<ScenarioEvent> replay_events_;
    std::optional<Checkpoint> checkpoint_;
    std::optional<std::string> fault_;
    Snapshot last_good_;
    WarningLog warnings_;
    int record_count_ = 0;
};

}  // namespace softarm
