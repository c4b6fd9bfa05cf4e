#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "softarm/assembly.hpp"
#include "softarm/errors.hpp"

namespace softarm {

inline constexpr double kMinActionPsi = 0.0;
inline constexpr double kMaxActionPsi = 45.0;
inline constexpr double kDefaultSampleRate = 50.0;  // Hz

struct ChannelTarget {
    std::string rod;
    double gain = 1.0;
};

struct ActionChannel {
    std::string label;
    std::vector<ChannelTarget> targets;
};

/// Action channels to actuated rods. Linear: pressure = channel value * gain.
struct ActionMapping {
    std::string id = "custom";
    std::vector<ActionChannel> channels;

    std::size_t size() const { return channels.size(); }

    /// Every target must be an actuated rod of `a`, targeted at most once.
    void validate(const Assembly& a) const
    {
        if (channels.empty()) throw ConfigurationError("mapping '" + id + "': no channels");
        std::set<std::string> seen;
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const auto& ch = channels[c];
            const std::string where = "mapping '" + id + "' channel " + std::to_string(c) + " ('" + ch.label + "')";
            if (ch.targets.empty()) throw ConfigurationError(where + ": no targets");
            for (const auto& t : ch.targets) {
                const std::size_t r = a.index_of(t.rod);
                if (!a.rods[r].actuator) throw ConfigurationError(where + ": rod '" + t.rod + "' is passive");
                if (!seen.insert(t.rod).second)
                    throw ConfigurationError(where + ": rod '" + t.rod + "' is already targeted by another channel");
                if (!(t.gain >= 0.0 && std::isfinite(t.gain)))
                    throw ConfigurationError(where + ": gain for '" + t.rod + "' must be finite and >= 0");
            }
        }
    }
};

/// Default pairing for a preset. BR2-B3 uses the four paired channels; the
/// serial two-rod presets drive both rods from one channel; the bundles get
/// one channel per rod.
inline ActionMapping default_mapping(const std::string& preset)
{
    ActionMapping m;
    m.id = preset + ".default";
    auto ch = [](std::string label, std::vector<std::string> rods) {
        ActionChannel c{std::move(label), {}};
        for (auto& r : rods) c.targets.push_back({std::move(r), 1.0});
        return c;
    };
    if (preset == "br2-b3") {
        m.channels = {ch("bend-bend", {"upper.bend0", "lower.bend"}),
                      ch("bend-twist", {"upper.bend1", "lower.cw"}),
                      ch("bend-upper", {"upper.bend2"}),
                      ch("twist-lower", {"lower.ccw"})};
    } else if (preset == "twist-twist") {
        m.channels = {ch("twist-twist", {"cw", "ccw"})};
    } else if (preset == "bend-bend") {
        m.channels = {ch("bend-bend", {"bend0", "bend1"})};
    } else if (preset == "br2") {
        m.channels = {ch("bend", {"bend"}), ch("cw", {"cw"}), ch("ccw", {"ccw"})};
    } else if (preset == "b3") {
        m.channels = {ch("bend0", {"bend0"}), ch("bend1", {"bend1"}), ch("bend2", {"bend2"})};
    } else {
        throw ConfigurationError("no default mapping for preset '" + preset + "'");
    }
    return m;
}

/// Per-rod pressures in psi, indexed like Assembly::rods.
struct PressureCommand {
    double time = 0.0;
    std::vector<double> psi;
};

/// Clamps each action to [0, 45] psi (recording a warning) and distributes
/// it to the channel's targets. Untargeted rods get 0.
inline PressureCommand map_actions(const std::vector<double>& actions, const ActionMapping& mapping,
                                   const Assembly& a, WarningLog* warnings = nullptr, double time = 0.0)
{
    if (actions.size() != mapping.size())
        throw ConfigurationError("map_actions: expected " + std::to_string(mapping.size()) + " actions, got " +
                                 std::to_string(actions.size()));
    PressureCommand cmd{time, std::vector<double>(a.rods.size(), 0.0)};
    for (std::size_t c = 0; c < actions.size(); ++c) {
        double v = actions[c];
        if (!std::isfinite(v)) throw DomainError("map_actions: non-finite action on channel " + std::to_string(c));
        if (v < kMinActionPsi || v > kMaxActionPsi) {
            const double clamped = std::clamp(v, kMinActionPsi, kMaxActionPsi);
            if (warnings)
                warnings->add("action on channel " + std::to_string(c) + " (" + std::to_string(v) +
                              " psi) clamped to " + std::to_string(clamped) + " psi");
            v = clamped;
        }
        for (const auto& t : mapping.channels[c].targets) cmd.psi[a.index_of(t.rod)] = v * t.gain;
    }
    return cmd;
}

// Control traces

struct TraceSample {
    double time = 0.0;
    std::vector<double> actions;  // psi

    bool operator==(const TraceSample&) const = default;
};

/// Timed action samples with key=value metadata (scenario, mapping,
/// sample_rate). Between samples the actions are held.
struct ControlTrace {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<TraceSample> samples;

    bool operator==(const ControlTrace&) const = default;

    std::string meta(const std::string& key, const std::string& fallback = "") const
    {
        for (const auto& [k, v] : metadata)
            if (k == key) return v;
        return fallback;
    }
    void set_meta(const std::string& key, const std::string& value)
    {
        for (auto& [k, v] : metadata)
            if (k == key) {
                v = value;
                return;
            }
        metadata.emplace_back(key, value);
    }
    double sample_rate() const
    {
        const std::string s = meta("sample_rate");
        if (s.empty()) return kDefaultSampleRate;
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || !(v > 0.0))
            throw FormatError("trace: sample_rate '" + s + "' is not a positive number");
        return v;
    }
    std::size_t channels() const { return samples.empty() ? 0 : samples.front().actions.size(); }
    double duration() const { return samples.empty() ? 0.0 : samples.back().time; }

    /// Positive sample rate, strictly increasing finite times,
    /// one channel count, actions in [0, 45].
    void validate() const
    {
        (void)sample_rate();
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& s = samples[i];
            const std::string where = "trace sample " + std::to_string(i);
            if (!std::isfinite(s.time) || s.time < 0.0) throw FormatError(where + ": invalid timestamp");
            if (i > 0 && !(s.time > samples[i - 1].time))
                throw FormatError(where + ": timestamps must be strictly increasing");
            if (s.actions.size() != samples.front().actions.size())
                throw FormatError(where + ": channel count changes");
            for (double v : s.actions)
                if (!(v >= kMinActionPsi && v <= kMaxActionPsi))
                    throw FormatError(where + ": action outside [0, 45] psi");
        }
    }

    /// Held actions at time t; zeros before the first sample.
    std::vector<double> sample_at(double t, std::size_t n_channels) const
    {
        auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                   [](double x, const TraceSample& s) { return x < s.time; });
        if (it == samples.begin()) return std::vector<double>(n_channels, 0.0);
        return std::prev(it)->actions;
    }
};

namespace detail {

inline void append_double(std::string& out, double v)
{
    char buf[32];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, p);
}

inline double parse_double(std::string_view s, std::size_t line)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
        throw FormatError("trace line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

}  // namespace detail

/// Shortest round-trip decimal, so write(read(x)) == x byte for byte.
inline std::string format_trace(const ControlTrace& trace)
{
    std::string out;
    for (const auto& [k, v] : trace.metadata) out += "# " + k + "=" + v + "\n";
    for (const auto& s : trace.samples) {
        detail::append_double(out, s.time);
        for (double a : s.actions) {
            out += ", ";
            detail::append_double(out, a);
        }
        out += '\n';
    }
    return out;
}

inline ControlTrace parse_trace(std::istream& in)
{
    ControlTrace trace;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::string_view body(line);
            body.remove_prefix(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) continue;  // plain comment
            trace.metadata.emplace_back(std::string(body.substr(0, eq)), std::string(body.substr(eq + 1)));
            continue;
        }
        std::vector<double> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(detail::parse_double(rest.substr(0, comma), number));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() < 2) throw FormatError("trace line " + std::to_string(number) + ": expected t and actions");
        trace.samples.push_back({fields.front(), std::vector<double>(fields.begin() + 1, fields.end())});
    }
    trace.validate();
    return trace;
}

inline ControlTrace parse_trace(const std::string& text)
{
    std::istringstream in(text);
    return parse_trace(in);
}

/// Resamples with zero-order hold onto the uniform grid k / rate spanning
/// the trace, then rate-limits to `max_rate` psi/s and applies a first-order
/// low-pass with cutoff `cutoff_hz` (<= 0 disables it). The low-pass output
/// is a running convex combination, so it keeps both the rate bound and the
/// input range.
inline ControlTrace ramp_filter(const ControlTrace& trace, double max_rate, double cutoff_hz)
{
    trace.validate();
    if (!(max_rate > 0.0)) throw DomainError("ramp_filter: max_rate must be > 0");
    ControlTrace out;
    out.metadata = trace.metadata;
    if (trace.samples.empty()) return out;
    const double rate = trace.sample_rate();
    const double step = 1.0 / rate;
    const std::size_t n = trace.channels();
    const auto first = static_cast<long long>(std::ceil(trace.samples.front().time * rate - 1e-9));
    const auto last = static_cast<long long>(std::floor(trace.samples.back().time * rate + 1e-9));
    const double alpha = cutoff_hz > 0.0 ? 1.0 - std::exp(-2.0 * std::numbers::pi * cutoff_hz * step) : 1.0;

    std::vector<double> limited = trace.sample_at(static_cast<double>(first) / rate, n);
    std::vector<double> smooth = limited;
    for (long long k = first; k <= last; ++k) {
        const double t = static_cast<double>(k) / rate;
        const std::vector<double> target = trace.sample_at(t, n);
        for (std::size_t c = 0; c < n; ++c) {
            const double dv = std::clamp(target[c] - limited[c], -max_rate * step, max_rate * step);
            limited[c] += dv;
            smooth[c] += alpha * (limited[c] - smooth[c]);
        }
        out.samples.push_back({t, smooth});
    }
    return out;
}

/// Online form of ramp_filter for the stepping loop: advances by dt towards
/// the latched target.
class ActionSmoother {
public:
    ActionSmoother(std::size_t channels, double max_rate, double cutoff_hz)
        : max_rate_(max_rate), cutoff_(cutoff_hz), limited_(channels, 0.0), smooth_(channels, 0.0)
    {
        if (!(max_rate_ > 0.0)) throw ConfigurationError("smoother: max_rate must be > 0");
    }

    const std::vector<double>& advance(const std::vector<double>& target, double dt)
    {
        const double alpha = cutoff_ > 0.0 ? 1.0 - std::exp(-2.0 * std::numbers::pi * cutoff_ * dt) : 1.0;
        for (std::size_t c = 0; c < smooth_.size(); ++c) {
            limited_[c] += std::clamp(target[c] - limited_[c], -max_rate_ * dt, max_rate_ * dt);
            smooth_[c] += alpha * (limited_[c] - smooth_[c]);
        }
        return smooth_;
    }

    const std::vector<double>& value() const { return smooth_; }
    void reset(const std::vector<double>& v)
    {
        limited_ = v;
        smooth_ = v;
    }

private:
    double max_rate_;
    double cutoff_;
    std::vector<double> limited_;
    std::vector<double> smooth_;
};

}  // namespace softarm
