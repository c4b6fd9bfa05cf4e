#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "softarm/reconstruction.hpp"

using namespace softarm;

namespace {

std::vector<Vec3> random_points(std::mt19937_64& rng, int n, double scale)
{
    std::normal_distribution<double> g(0.0, scale);
    std::vector<Vec3> p;
    for (int i = 0; i < n; ++i) p.emplace_back(g(rng), g(rng), g(rng));
    return p;
}

std::vector<SectionTemplate> plates(int count)
{
    std::vector<SectionTemplate> t;
    for (int j = 0; j < count; ++j) {
        const double a = 0.004 * j;
        t.push_back({"s" + std::to_string(j),
                     {Vec3(0.020 + a, 0.0, 0.0), Vec3(0.0, 0.026 + 0.5 * a, 0.0), Vec3(-0.015, -0.011, 0.004 + a),
                      Vec3(-0.010, 0.013, -0.006)}});
    }
    return t;
}

Pose section_pose(int j, double time)
{
    Pose p;
    p.position = Vec3(0.01 * std::sin(time), 0.0, -0.06 * (j + 1)) + Vec3(0.002 * time, 0.0, 0.0);
    p.orientation = so3::exp_map(Vec3(0.1 * j + 0.3 * time, -0.2 * time, 0.05 * j));
    return p;
}

std::vector<MarkerFrame> moving_frames(const std::vector<SectionTemplate>& tpl, int n, double dt)
{
    std::vector<MarkerFrame> frames;
    for (int k = 0; k < n; ++k) {
        MarkerFrame f{k * dt, {}};
        for (std::size_t j = 0; j < tpl.size(); ++j) {
            const auto m = place_markers(tpl[j], section_pose(static_cast<int>(j), k * dt));
            f.points.insert(f.points.end(), m.begin(), m.end());
        }
        frames.push_back(f);
    }
    return frames;
}

double pose_distance(const Pose& a, const Pose& b)
{
    return std::max((a.position - b.position).norm(), so3::geodesic_distance(a.orientation, b.orientation));
}

}  // namespace

TEST(Kabsch, IdenticalSetsGiveIdentity)
{
    std::mt19937_64 rng(1);
    const auto p = random_points(rng, 6, 0.05);
    const RigidTransform t = kabsch_align(p, p);
    EXPECT_LT((t.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_LT(t.translation.norm(), 1e-14);
}

TEST(Kabsch, RecoversKnownTransform)
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_points(rng, 5, 0.05);
        const Mat3 r = so3::exp_map(random_points(rng, 1, 1.5)[0]);
        const Vec3 t = random_points(rng, 1, 0.3)[0];
        std::vector<Vec3> q;
        for (const auto& x : p) q.push_back(r * x + t);
        const RigidTransform fit = kabsch_align(p, q);
        EXPECT_LT((fit.rotation - r).norm(), 1e-10);
        EXPECT_LT((fit.translation - t).norm(), 1e-10);
    }
}

TEST(Kabsch, ResidualBelowNoiseLevel)
{
    std::mt19937_64 rng(3);
    const double sigma = 5e-4;
    std::normal_distribution<double> g(0.0, sigma);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_points(rng, 8, 0.03);
        const Mat3 r = so3::exp_map(random_points(rng, 1, 1.0)[0]);
        std::vector<Vec3> q;
        for (const auto& x : p) q.push_back(r * x + Vec3(g(rng), g(rng), g(rng)));
        const RigidTransform fit = kabsch_align(p, q);
        double sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) sum += (fit.apply(p[i]) - q[i]).squaredNorm();
        // per-axis RMS; the fit absorbs 6 of the 3n degrees of freedom
        EXPECT_LE(std::sqrt(sum / (3.0 * p.size())), sigma * 1.5) << trial;
    }
}

TEST(Kabsch, CollinearInputIsRejected)
{
    const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
    EXPECT_THROW(kabsch_align(line, line), DegenerateError);
    EXPECT_THROW(kabsch_align({Vec3::Zero(), Vec3::UnitX()}, {Vec3::Zero(), Vec3::UnitX()}), DegenerateError);
}

TEST(Icp, StaticMarkersGiveConstantPoses)
{
    const auto tpl = plates(3);
    std::vector<MarkerFrame> frames = moving_frames(tpl, 1, 0.01);
    for (int k = 1; k < 10; ++k) frames.push_back({k * 0.01, frames[0].points});
    const auto tracks = icp_track(frames, tpl);
    for (const auto& t : tracks)
        for (std::size_t k = 1; k < t.size(); ++k) EXPECT_LT(pose_distance(t.pose[k], t.pose[0]), 1e-12);
}

TEST(Icp, FollowsRigidMotion)
{
    const auto tpl = plates(3);
    const auto frames = moving_frames(tpl, 100, 0.01);
    const auto tracks = icp_track(frames, tpl);
    ASSERT_EQ(tracks.size(), 3u);
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < frames.size(); ++k) {
            EXPECT_FALSE(tracks[j].missing[k]);
            EXPECT_LT(pose_distance(tracks[j].pose[k], section_pose(static_cast<int>(j), frames[k].time)), 1e-8);
        }
}

TEST(Icp, DroppedMarkerIsFlaggedAndHeld)
{
    const auto tpl = plates(2);
    auto frames = moving_frames(tpl, 40, 0.01);
    for (int k = 10; k < 15; ++k) frames[k].points.erase(frames[k].points.begin() + 1);
    const auto tracks = icp_track(frames, tpl);
    for (int k = 0; k < 40; ++k) EXPECT_EQ(tracks[0].missing[k], k >= 10 && k < 15) << k;
    for (std::size_t k = 1; k < 40; ++k)
        EXPECT_LT(pose_distance(tracks[0].pose[k], tracks[0].pose[k - 1]), 0.05) << k;
    EXPECT_LT(pose_distance(tracks[0].pose[20], section_pose(0, 0.2)), 1e-8);
}

TEST(Icp, RigidlyMovedInputMovesTheTracks)
{
    const auto tpl = plates(3);
    const auto frames = moving_frames(tpl, 30, 0.01);
    const Mat3 r = so3::exp_map(Vec3(0.4, -1.2, 2.0));
    const Vec3 t(0.3, -0.1, 0.7);
    auto moved = frames;
    for (auto& f : moved)
        for (auto& p : f.points) p = r * p + t;
    const auto a = icp_track(frames, tpl);
    const auto b = icp_track(moved, tpl);
    for (std::size_t j = 0; j < a.size(); ++j)
        for (std::size_t k = 0; k < a[j].size(); ++k) {
            Pose expect{r * a[j].pose[k].position + t, a[j].pose[k].orientation * r.transpose()};
            EXPECT_LT(pose_distance(b[j].pose[k], expect), 1e-9);
        }
}

TEST(Icp, SymmetricTemplateIsAmbiguous)
{
    const double c = std::cos(2.0 * std::numbers::pi / 3.0), s = std::sin(2.0 * std::numbers::pi / 3.0);
    const SectionTemplate tri{"tri", {Vec3(0.02, 0, 0), Vec3(0.02 * c, 0.02 * s, 0), Vec3(0.02 * c, -0.02 * s, 0)}};
    const MarkerFrame f{0.0, place_markers(tri, Pose{})};
    try {
        icp_track({f}, {tri});
        FAIL() << "expected an ambiguity";
    } catch (const AmbiguityError& e) {
        EXPECT_NE(std::string(e.what()).find("placements"), std::string::npos);
    }
}

TEST(Icp, MarkerAndTemplateFilesParse)
{
    const auto tpl = plates(2);
    const auto frames = moving_frames(tpl, 3, 0.01);
    std::istringstream in(format_markers(frames));
    const auto back = parse_markers(in);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[1].points, frames[1].points);
    std::istringstream tin("# arm_length=0.18\n# arclength.s0=0.06\ns0, 0.02, 0, 0, 0, 0.03, 0, -0.01, -0.01, 0.005\n");
    const TemplateSet set = parse_templates(tin);
    EXPECT_EQ(set.sections.size(), 1u);
    EXPECT_EQ(set.sections[0].offsets.size(), 3u);
    EXPECT_EQ(set.arclength[0].second, 0.06);
    std::istringstream bad("0, -, 1, 2\n");
    EXPECT_THROW(parse_markers(bad), FormatError);
}

TEST(Lowpass, UnitGainPassesThrough)
{
    const auto tpl = plates(1);
    const auto track = icp_track(moving_frames(tpl, 20, 0.01), tpl)[0];
    const auto out = so3_lowpass(track, 1.0);
    for (std::size_t k = 0; k < track.size(); ++k) EXPECT_EQ(pose_distance(out.pose[k], track.pose[k]), 0.0);
    EXPECT_THROW(so3_lowpass(track, 0.0), DomainError);
    EXPECT_THROW(so3_lowpass(track, 1.5), DomainError);
}

TEST(Lowpass, AttenuatesOrientationNoise)
{
    // first-order filter on white noise: output RMS = sqrt(g / (2 - g)) of input
    std::mt19937_64 rng(7);
    const double sigma = 2.0 * std::numbers::pi / 180.0;
    std::normal_distribution<double> g(0.0, sigma);
    const Mat3 truth = so3::exp_map(Vec3(0.3, 0.2, -0.4));
    SectionTrack seq;
    for (int k = 0; k < 20000; ++k) {
        seq.time.push_back(k * 0.01);
        seq.pose.push_back({Vec3::Zero(), so3::exp_map(Vec3(g(rng), g(rng), g(rng))) * truth});
        seq.missing.push_back(false);
    }
    seq.pose[0].orientation = truth;
    const double gain = 0.1;
    const auto out = so3_lowpass(seq, gain);
    double raw = 0.0, filt = 0.0;
    for (std::size_t k = 1000; k < seq.size(); ++k) {
        raw += std::pow(so3::geodesic_distance(seq.pose[k].orientation, truth), 2);
        filt += std::pow(so3::geodesic_distance(out.pose[k].orientation, truth), 2);
        EXPECT_TRUE(so3::is_rotation(out.pose[k].orientation, 1e-10));
    }
    const double ratio = std::sqrt(filt / raw);
    EXPECT_NEAR(ratio, std::sqrt(gain / (2.0 - gain)), 0.02);
    EXPECT_LT(ratio, 0.25);
}

TEST(Lowpass, ConstantRateRotationLagsByFirstOrderLag)
{
    const double w = 0.01;  // rad per frame
    const double gain = 0.2;
    SectionTrack seq;
    for (int k = 0; k < 400; ++k) {
        seq.time.push_back(k);
        seq.pose.push_back({Vec3::Zero(), so3::rot_z(w * k)});
        seq.missing.push_back(false);
    }
    const auto out = so3_lowpass(seq, gain);
    const double lag = so3::geodesic_distance(out.pose.back().orientation, seq.pose.back().orientation);
    EXPECT_NEAR(lag, w * (1.0 - gain) / gain, 1e-9);
}

TEST(Spline, PartitionOfUnity)
{
    const SplineBasis b(8);
    for (double x : {0.0, 0.13, 0.5, 0.77, 1.0}) {
        double sum = 0.0;
        for (double v : b.eval(x)) {
            EXPECT_GE(v, -1e-15);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-14) << x;
    }
}

namespace {

ArmModel straight_arm()
{
    ArmModel m;
    m.segment_lengths = {0.18};
    m.base = ArmOptions::hanging_base();
    m.shear_stiffness = Vec3(80.0, 80.0, 240.0);
    m.bend_stiffness = Vec3(6e-3, 6e-3, 8e-3);
    return m;
}

Pose arc_pose(double s, double kappa)
{
    // planar arc bending about the local d1 axis, hanging from the origin
    const Pose base = ArmOptions::hanging_base();
    Pose p;
    p.orientation = so3::exp_map(Vec3(-kappa * s, 0, 0)) * base.orientation;
    const double x = kappa > 0 ? (1.0 - std::cos(kappa * s)) / kappa : 0.0;
    const double z = kappa > 0 ? std::sin(kappa * s) / kappa : s;
    p.position = base.orientation.transpose() * Vec3(0.0, -x, z);
    return p;
}

}  // namespace

TEST(Reconstruct, RestArmGivesZeroStrain)
{
    std::vector<SectionObservation> data;
    for (double s : {0.06, 0.12, 0.18}) data.push_back({s, arc_pose(s, 0.0)});
    const auto res = reconstruct_posture(data, straight_arm());
    double worst = 0.0;
    for (std::size_t k = 0; k < res.strains.size(); ++k)
        worst = std::max({worst, res.strains.shear[k].norm(), res.strains.curvature[k].norm()});
    EXPECT_LT(worst, 1e-6);
    EXPECT_TRUE(res.converged);
}

TEST(Reconstruct, RecoversArcAndDescendsMonotonically)
{
    const double kappa = 6.0;
    std::vector<SectionObservation> data;
    for (double s : {0.045, 0.09, 0.135, 0.18}) data.push_back({s, arc_pose(s, kappa)});
    const auto res = reconstruct_posture(data, straight_arm());
    for (std::size_t k = 1; k < res.objective.size(); ++k) EXPECT_LE(res.objective[k], res.objective[k - 1]);
    EXPECT_LT((res.posture.back().position - arc_pose(0.18, kappa).position).norm(), 1e-3);
    EXPECT_NEAR(total_bend(res.strains), kappa * 0.18, 0.05 * kappa * 0.18);
}

TEST(Reconstruct, HeavyRegularizationCollapsesToRest)
{
    std::vector<SectionObservation> data;
    for (double s : {0.09, 0.18}) data.push_back({s, arc_pose(s, 8.0)});
    ReconstructionOptions opt;
    opt.weights.energy = 1e9;
    const auto res = reconstruct_posture(data, straight_arm(), opt);
    EXPECT_LT(total_bend(res.strains), 1e-4);
}

TEST(Reconstruct, InvalidInputsAreRejected)
{
    EXPECT_THROW(reconstruct_posture({{0.1, Pose{}}}, straight_arm()), ConfigurationError);
    EXPECT_THROW(reconstruct_posture({{0.1, Pose{}}, {0.5, Pose{}}}, straight_arm()), ConfigurationError);
}

namespace {

SectionTransform around_axis(double angle, double radius)
{
    return {so3::rot_z(angle), Vec3(radius * std::cos(angle), radius * std::sin(angle), 0.0)};
}

}  // namespace

TEST(Averaging, SingleIdentityTransformIsPassThrough)
{
    const StrainSample e{Vec3(0.01, -0.02, 0.05), Vec3(3.0, -1.0, 0.5)};
    const auto fit = average_to_centerline({e}, {SectionTransform{}});
    EXPECT_LT((fit.strain.shear - e.shear).norm(), 1e-15);
    EXPECT_LT((fit.strain.curvature - e.curvature).norm(), 1e-15);
    EXPECT_FALSE(fit.pseudo_inverse);
}

TEST(Averaging, SymmetricPureStretchStaysPureStretch)
{
    const StrainSample e{Vec3(0, 0, 0.05), Vec3::Zero()};
    std::vector<SectionTransform> g;
    for (int i = 0; i < 3; ++i) g.push_back(around_axis(2.0 * std::numbers::pi * i / 3.0, 0.0098));
    const auto fit = average_to_centerline({e, e, e}, g);
    EXPECT_LT((fit.strain.shear - e.shear).norm(), 1e-14);
    EXPECT_LT(fit.strain.curvature.norm(), 1e-14);
}

TEST(Averaging, ConsistentInputsAreRecoveredExactly)
{
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const StrainSample truth{0.05 * Vec3(n(rng), n(rng), n(rng)), 5.0 * Vec3(n(rng), n(rng), n(rng))};
        std::vector<SectionTransform> g;
        std::vector<StrainSample> rods;
        for (int i = 0; i < 3; ++i) {
            g.push_back({so3::exp_map(Vec3(n(rng), n(rng), n(rng))), 0.01 * Vec3(n(rng), n(rng), n(rng))});
            rods.push_back(transport_strain(truth, g.back()));
        }
        const auto fit = average_to_centerline(rods, g);
        EXPECT_LT((fit.strain.shear - truth.shear).norm(), 1e-12);
        EXPECT_LT((fit.strain.curvature - truth.curvature).norm(), 1e-12);
    }
}

TEST(Averaging, FitBeatsEveryInputAsCandidate)
{
    std::mt19937_64 rng(19);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SectionTransform> g;
        std::vector<StrainSample> rods;
        for (int i = 0; i < 3; ++i) {
            g.push_back(around_axis(2.0 * std::numbers::pi * i / 3.0 + 0.1 * n(rng), 0.0098));
            rods.push_back({0.05 * Vec3(n(rng), n(rng), n(rng)), 5.0 * Vec3(n(rng), n(rng), n(rng))});
        }
        const auto fit = average_to_centerline(rods, g);
        for (const auto& candidate : rods) EXPECT_LE(fit.residual, averaging_residual(rods, g, candidate) + 1e-15);
    }
}

TEST(Averaging, DegenerateTransformsAreFlagged)
{
    const StrainSample e{Vec3(0, 0, 0.05), Vec3(1, 0, 0)};
    const auto fit = average_to_centerline({e}, {SectionTransform{Mat3::Zero(), Vec3::Zero()}});
    EXPECT_TRUE(fit.pseudo_inverse);
    EXPECT_TRUE(fit.strain.shear.allFinite());
}
