#pragma once

#include <chrono>
#include <vector>

#include "softarm/session.hpp"

namespace softarm {

struct BenchResult {
    std::uint64_t steps = 0;
    double wall_seconds = 0.0;
    double dt = 0.0;
    double steps_per_second = 0.0;
    double realtime_factor = 0.0;  // simulated seconds per wall second
};

/// Times the full session step (control pipeline, actuation, contact) with
/// every channel driven at `psi`, over `sim_seconds` of simulated time.
inline BenchResult bench(const Scenario& scenario, double sim_seconds = 1.0, double psi = 10.0)
{
    if (!(sim_seconds > 0.0)) throw ConfigurationError("bench: duration must be > 0");
    Session s(scenario);
    const std::vector<double> actions(scenario.control.mapping.size(), psi);
    const Reply r = s.command({{"type", "set_actions"}, {"actions", actions}});
    if (!r.ok) throw ConfigurationError("bench: " + r.reason);
    s.run_until(0.05);  // warm caches and allocations
    const std::uint64_t first = s.world().steps();
    const double end = s.time() + sim_seconds;
    const auto t0 = std::chrono::steady_clock::now();
    s.run_until(end);
    const auto t1 = std::chrono::steady_clock::now();
    if (s.fault()) throw DivergenceError("bench", *s.fault());
    BenchResult b;
    b.steps = s.world().steps() - first;
    b.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    b.dt = s.dt();
    b.steps_per_second = static_cast<double>(b.steps) / b.wall_seconds;
    b.realtime_factor = b.steps_per_second * b.dt;
    return b;
}

}  // namespace softarm
