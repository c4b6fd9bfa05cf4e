// Command-line front end: batch replay, interactive server, scenario
// validation, benchmark, metrics comparison and posture reconstruction.
//
// Exit codes: 0 success, 1 other failure, 2 invalid input, 3 divergence.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "softarm/bench.hpp"
#include "softarm/metrics.hpp"
#include "softarm/reconstruction.hpp"
#include "softarm/server.hpp"
#include "softarm/session.hpp"

using namespace softarm;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitDivergence = 3;

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigurationError("cannot write '" + p.string() + "'");
    out << text;
}

json task_json(const TaskReport& t)
{
    json phases = json::array();
    for (const auto& [name, ok] : t.phases) phases.push_back({{"name", name}, {"completed", ok}});
    return {{"passed", t.passed()},
            {"pickup_reached", t.pickup_reached},
            {"min_pickup_distance", t.min_pickup_distance},
            {"pickup_time", t.pickup_time},
            {"phases", phases},
            {"max_penetration", t.max_penetration},
            {"penetration_bound", t.penetration_bound},
            {"penetration_ok", t.penetration_ok},
            {"payload_attached", t.payload_attached},
            {"payload_side", t.payload_side},
            {"payload_near_side", t.payload_near_side}};
}

int cmd_run(const std::string& scenario_path, const std::string& trace_path, const std::string& out_dir, bool svg)
{
    Session s(load_scenario(scenario_path));
    if (!trace_path.empty()) s.start_replay(parse_trace(read_text_file(trace_path)));
    const double end = s.batch_end();
    const auto t0 = std::chrono::steady_clock::now();
    s.run_until(end);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json summary{{"scenario", s.scenario().name},
                 {"time", s.time()},
                 {"steps", s.world().steps()},
                 {"dt", s.dt()},
                 {"wall_seconds", wall},
                 {"trajectory_hash", Session::hash_text(s.trajectory_hash())},
                 {"warnings", s.warnings().size()}};
    if (s.fault()) summary["fault"] = *s.fault();
    if (s.task().evaluated) summary["task"] = task_json(s.task());

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    write_file(dir / "snapshot.json", *(s.fault() ? s.last_good_snapshot() : s.snapshot()).text + "\n");
    if (!s.fault()) {
        const StrainRecord rec = s.arm_record();
        write_file(dir / "strains.txt", format_record(rec));
        if (svg) write_file(dir / "profile.svg", profile_svg(rec, s.scenario().name));
    }

    std::cout << "scenario=" << s.scenario().name << " time=" << s.time() << " steps=" << s.world().steps()
              << " wall_s=" << wall << " hash=" << Session::hash_text(s.trajectory_hash()) << '\n';
    if (s.task().evaluated) std::cout << "task=" << (s.task().passed() ? "passed" : "failed") << '\n';
    if (s.fault()) {
        std::cerr << "fault: " << *s.fault() << '\n';
        return kExitDivergence;
    }
    return 0;
}

volatile std::sig_atomic_t g_interrupted = 0;

int cmd_serve(const std::string& scenario_path, int port, double realtime)
{
    ServerOptions opt;
    opt.port = port < 0 ? default_port() : static_cast<unsigned short>(port);
    opt.realtime_factor = realtime;
    SessionServer server(load_scenario(scenario_path), opt);
    std::signal(SIGINT, [](int) { g_interrupted = 1; });
    std::signal(SIGTERM, [](int) { g_interrupted = 1; });
    server.start();
    std::cout << "listening on ws://" << opt.address << ':' << server.port() << "/session" << std::endl;
    while (!g_interrupted && !server.wait_for(std::chrono::milliseconds(100))) {
    }
    server.stop();
    return 0;
}

int cmd_validate(const std::string& scenario_path)
{
    const Scenario s = load_scenario(scenario_path);
    const Assembly a = build_assembly(s);
    const double dt = scenario_dt(s, a);
    std::cout << "scenario=" << s.name << " rods=" << a.rods.size() << " parallel=" << a.parallel.size()
              << " serial=" << a.serial.size() << " channels=" << s.control.mapping.size()
              << " obstacles=" << s.environment.obstacles.size() << " events=" << s.events.size() << " dt=" << dt
              << "\nok\n";
    return 0;
}

int cmd_bench(const std::string& scenario_path, double seconds, double target)
{
    const BenchResult b = bench(load_scenario(scenario_path), seconds);
    std::cout << "steps=" << b.steps << " wall_s=" << b.wall_seconds << " dt=" << b.dt
              << " steps_per_s=" << b.steps_per_second << " realtime_steps_per_s=" << 1.0 / b.dt
              << " realtime_factor=" << b.realtime_factor << " target=" << target << '\n';
    return 0;
}

int cmd_compare(const std::string& a, const std::string& b, bool lines)
{
    const MetricsReport rep = compare(parse_record(read_text_file(a)), parse_record(read_text_file(b)));
    std::cout << (lines ? format_lines(rep) : format_table(rep));
    return 0;
}

int cmd_reconstruct(const std::string& markers_path, const std::string& templates_path, double gain, int frame,
                    const std::string& out_path, const std::string& svg_path)
{
    std::ifstream mf(markers_path), tf(templates_path);
    if (!mf) throw ConfigurationError("cannot open '" + markers_path + "'");
    if (!tf) throw ConfigurationError("cannot open '" + templates_path + "'");
    const auto frames = parse_markers(mf);
    const TemplateSet set = parse_templates(tf);
    if (!(set.arm_length > 0.0)) throw ConfigurationError("templates: '# arm_length=' header missing");

    const auto tracks = icp_track(frames, set.sections);
    const std::size_t idx = frame < 0 ? frames.size() - 1 : static_cast<std::size_t>(frame);
    if (idx >= frames.size()) throw ConfigurationError("frame index beyond the marker file");

    ArmModel model;
    model.segment_lengths = {set.arm_length};
    std::vector<SectionObservation> data;
    std::size_t missing = 0;
    for (const auto& track : tracks) {
        const SectionTrack smooth = so3_lowpass(track, gain);
        if (track.missing[idx]) ++missing;
        bool placed = false;
        for (const auto& [id, s] : set.arclength)
            if (id == track.section) {
                data.push_back({s, smooth.pose[idx]});
                if (s == 0.0) model.base = smooth.pose[idx];
                placed = true;
            }
        if (!placed) throw ConfigurationError("templates: section '" + track.section + "' has no arclength");
    }

    const ReconstructionResult r = reconstruct_posture(data, model);
    double worst_pos = 0.0, worst_rot = 0.0;
    for (const auto& e : r.residuals) {
        worst_pos = std::max(worst_pos, e.position_error);
        worst_rot = std::max(worst_rot, e.rotation_error);
    }
    std::cerr << "frames=" << frames.size() << " frame=" << idx << " sections=" << data.size()
              << " held=" << missing << " iterations=" << r.iterations << " objective=" << r.objective.front()
              << "->" << r.objective.back() << " converged=" << (r.converged ? "yes" : "no")
              << " max_position_residual_m=" << worst_pos << " max_rotation_residual_rad=" << worst_rot << '\n';
    const std::string rec = format_record(r.strains);
    if (out_path.empty()) std::cout << rec;
    else write_file(out_path, rec);
    if (!svg_path.empty()) write_file(svg_path, profile_svg(r.strains, "reconstruction"));
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Soft continuum arm simulator"};
    app.require_subcommand(1);

    std::string scenario, trace, out = "out", a, b, markers, templates, recon_out, recon_svg;
    bool svg = false, lines = false;
    int port = -1, frame = -1;
    double realtime = 1.0, seconds = 1.0, target = 50.0, gain = 0.1;

    auto* run = app.add_subcommand("run", "Replay a trace headless and write metrics");
    run->add_option("--scenario", scenario, "Scenario file")->required();
    run->add_option("--trace", trace, "Control trace to replay");
    run->add_option("--out", out, "Output directory");
    run->add_flag("--svg", svg, "Also write the curvature profile as SVG");

    auto* serve = app.add_subcommand("serve", "Serve the scenario on ws://host:port/session");
    serve->add_option("--scenario", scenario, "Scenario file")->required();
    serve->add_option("--port", port, "Port (default SOFTARM_PORT or 8765)");
    serve->add_option("--realtime", realtime, "Simulated seconds per wall second, 0 = flat out");

    auto* validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("--scenario", scenario, "Scenario file")->required();

    auto* benchc = app.add_subcommand("bench", "Measure steps per second");
    benchc->add_option("--scenario", scenario, "Scenario file")->required();
    benchc->add_option("--seconds", seconds, "Simulated seconds to time");
    benchc->add_option("--target", target, "Realtime multiple reported alongside");

    auto* comparec = app.add_subcommand("compare", "Compare two strain records");
    comparec->add_option("--a", a, "Record")->required();
    comparec->add_option("--b", b, "Baseline record")->required();
    comparec->add_flag("--lines", lines, "key=value output");

    auto* recon = app.add_subcommand("reconstruct", "Reconstruct strains from marker data");
    recon->add_option("--markers", markers, "Marker file")->required();
    recon->add_option("--templates", templates, "Section template file")->required();
    recon->add_option("--gain", gain, "Low-pass gain in (0, 1]");
    recon->add_option("--frame", frame, "Frame index (default last)");
    recon->add_option("--out", recon_out, "Write the strain record here instead of stdout");
    recon->add_option("--svg", recon_svg, "Write the curvature profile as SVG");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(scenario, trace, out, svg);
        if (*serve) return cmd_serve(scenario, port, realtime);
        if (*validate) return cmd_validate(scenario);
        if (*benchc) return cmd_bench(scenario, seconds, target);
        if (*comparec) return cmd_compare(a, b, lines);
        if (*recon) return cmd_reconstruct(markers, templates, gain, frame, recon_out, recon_svg);
    } catch (const ValidationError& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const ConfigurationError& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    } catch (const FormatError& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
