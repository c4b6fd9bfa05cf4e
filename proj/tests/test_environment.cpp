#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "softarm/simulation.hpp"

using namespace softarm;

namespace {

Obstacle wall(double hole = 0.035, double thickness = 0.005)
{
    Obstacle o;
    o.id = "wall";
    o.kind = ObstacleKind::PlaneWithHole;
    o.hole_radius = hole;
    o.thickness = thickness;
    return o;
}

// Solid membership used by the brute-force distance oracle.
bool inside(const Obstacle& o, const Vec3& lab)
{
    const Vec3 p = o.pose.orientation * (lab - o.pose.position);
    const double rho = std::hypot(p.x(), p.y());
    switch (o.kind) {
    case ObstacleKind::PlaneWithHole:
        return std::abs(p.z()) <= 0.5 * o.thickness && rho >= o.hole_radius;
    case ObstacleKind::Cylinder:
        return std::abs(p.z()) <= 0.5 * o.length && rho <= o.radius;
    case ObstacleKind::HalfSpace:
        return p.z() <= 0.0;
    }
    return false;
}

// Unsigned distance from an outside point to the solid, by sampling the
// meridian half-plane through the point on a coarse grid and refining
// around the best sample.
double brute_distance(const Obstacle& o, const Vec3& lab)
{
    const Vec3 p = o.pose.orientation * (lab - o.pose.position);
    const double rho = std::hypot(p.x(), p.y());
    auto in_meridian = [&](double r, double z) {
        const Vec3 local(r, 0.0, z);
        return inside(o, o.pose.position + o.pose.orientation.transpose() * local);
    };
    double best = 1e9;
    double br = 0.0;
    double bz = 0.0;
    const double span = 0.1;
    for (int pass = 0; pass < 3; ++pass) {
        const double extent = pass == 0 ? span : span / std::pow(40.0, pass);
        const double cr = pass == 0 ? rho : br;
        const double cz = pass == 0 ? p.z() : bz;
        const int m = 200;
        for (int i = 0; i <= m; ++i) {
            for (int j = 0; j <= m; ++j) {
                const double r = std::max(0.0, cr - extent + 2.0 * extent * i / m);
                const double z = cz - extent + 2.0 * extent * j / m;
                if (!in_meridian(r, z)) continue;
                const double d = std::hypot(r - rho, z - p.z());
                if (d < best) {
                    best = d;
                    br = r;
                    bz = z;
                }
            }
        }
    }
    return best;
}

Pose tilted_pose()
{
    Pose p;
    p.position = Vec3(0.01, -0.02, -0.1);
    p.orientation = so3::exp_map(Vec3(0.3, -0.5, 0.2));
    return p;
}

}  // namespace

TEST(SignedDistance, PlaneFarFromHoleIsZeroOnSurfaceWithPlaneNormal)
{
    const Obstacle o = wall();
    const SignedDistance sd = signed_distance(o, Vec3(0.2, 0.0, 0.0025));
    EXPECT_NEAR(sd.distance, 0.0, 1e-15);
    EXPECT_NEAR(sd.normal.z(), 1.0, 1e-15);
}

TEST(SignedDistance, HoleAxisIsHoleRadiusFromRim)
{
    const Obstacle o = wall(0.035, 0.0);
    const SignedDistance sd = signed_distance(o, Vec3::Zero());
    EXPECT_NEAR(sd.distance, 0.035, 1e-15);
}

TEST(SignedDistance, MatchesBruteForceOracle)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.06, 0.06);
    Obstacle cyl;
    cyl.kind = ObstacleKind::Cylinder;
    cyl.pose = tilted_pose();
    Obstacle plate = wall();
    plate.pose = tilted_pose();
    Obstacle half;
    half.pose = tilted_pose();
    int checked = 0;
    for (const Obstacle* o : {&plate, &cyl, &half}) {
        for (int t = 0; t < 40; ++t) {
            const Vec3 x = o->pose.position + Vec3(u(rng), u(rng), u(rng));
            const SignedDistance sd = signed_distance(*o, x);
            if (sd.distance <= 1e-3) continue;  // oracle covers outside points
            EXPECT_NEAR(sd.distance, brute_distance(*o, x), 1e-4);
            ++checked;
        }
    }
    EXPECT_GT(checked, 40);
}

TEST(SignedDistance, NegativeInsideAndGradientMatchesFiniteDifference)
{
    Obstacle o = wall();
    o.pose = tilted_pose();
    const Vec3 in = o.pose.position + o.pose.orientation.transpose() * Vec3(0.05, 0.0, 0.001);
    EXPECT_LT(signed_distance(o, in).distance, 0.0);
    const Vec3 x = o.pose.position + o.pose.orientation.transpose() * Vec3(0.03, 0.004, 0.006);
    const SignedDistance sd = signed_distance(o, x);
    const double h = 1e-7;
    for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = h;
        const double fd = (signed_distance(o, x + e).distance - signed_distance(o, x - e).distance) / (2 * h);
        EXPECT_NEAR(fd, sd.normal[k], 1e-6);
    }
}

TEST(Contact, ZeroWhenClearAndContinuousAtTouch)
{
    Obstacle o;  // half-space z <= 0
    const double r = 0.005;
    EXPECT_EQ(hertz_contact(o, Vec3(0, 0, r + 1e-9), Vec3(0, 0, -1), r, 1e-4).force.norm(), 0.0);
    // approaching at speed: the damping ramp keeps the force small just after touch
    const auto c = hertz_contact(o, Vec3(0, 0, r - 1e-9), Vec3(0, 0, -1), r, 1e-4);
    EXPECT_LT(c.force.norm(), 1e-3);
    EXPECT_GE(c.force.z(), 0.0);
}

TEST(Contact, NeverAdhesive)
{
    Obstacle o;
    const double r = 0.005;
    // separating fast with shallow penetration: damping would pull, but the force clamps at zero
    const auto c = hertz_contact(o, Vec3(0, 0, r - 1e-5), Vec3(0, 0, 100.0), r, 1e-4);
    EXPECT_EQ(c.force.norm(), 0.0);
}

TEST(Contact, HertzLawAndCap)
{
    Obstacle o;
    const double r = 0.005;
    const double p = 2e-4;
    const auto c = hertz_contact(o, Vec3(0, 0, r - p), Vec3::Zero(), r, 1e-4);
    EXPECT_NEAR(c.force.z(), o.stiffness * std::pow(p, 1.5), 1e-9);
    const auto deep = hertz_contact(o, Vec3(0, 0, -0.01), Vec3::Zero(), r, 1e-4);
    EXPECT_TRUE(deep.capped);
    EXPECT_NEAR(deep.force.z(), o.stiffness * std::pow(r, 1.5), 1e-9);
}

TEST(Contact, FrameInvariance)
{
    Obstacle a = wall();
    Obstacle b = wall();
    const Mat3 rot = so3::exp_map(Vec3(0.4, 0.9, -0.3));
    const Vec3 shift(0.1, -0.2, 0.3);
    b.pose.orientation = a.pose.orientation * rot.transpose();
    b.pose.position = rot * a.pose.position + shift;
    const Vec3 x(0.036, 0.002, 0.0028);
    const Vec3 v(0.01, -0.02, -0.05);
    const auto ca = hertz_contact(a, x, v, 0.004, 1e-4);
    const auto cb = hertz_contact(b, rot * x + shift, rot * v, 0.004, 1e-4);
    EXPECT_GT(ca.force.norm(), 0.0);
    EXPECT_LT((rot * ca.force - cb.force).norm(), 1e-10 * ca.force.norm());
}

TEST(Gravity, TotalForceIsWeight)
{
    ArmOptions o;
    o.n_elements = 5;
    Assembly a = make_preset("br2-b3", o);
    double mass = 0.0;
    Vec3 total = Vec3::Zero();
    for (std::size_t r = 0; r < a.rods.size(); ++r) {
        gravity_loads(a.rods[r].state, Vec3(0, 0, -9.81), a.loads[r]);
        for (double m : a.rods[r].state.mass) mass += m;
        for (const auto& f : a.loads[r].force) total += f;
    }
    const double expected = 6 * 1000.0 * o.geometry.area() * 0.18;
    EXPECT_NEAR(mass, expected, 1e-12 * expected);
    EXPECT_NEAR(total.z(), -9.81 * mass, 1e-12);
}

namespace {

// Short horizontal rod (d3 along +y) lying just above a floor at z = 0.
World rod_on_floor(double height, double damping)
{
    RodGeometry g;
    g.rest_length = 0.02;
    Pose base;
    base.orientation << 1, 0, 0,
                        0, 0, -1,
                        0, 1, 0;
    base.position = Vec3(0, 0, g.outer_radius + height);
    MaterialSpec m;
    m.damping = damping;
    Assembly a;
    a.rods.push_back(RodEntry{"r", discretize(g, m, 2, base), std::nullopt});
    a.reset_loads();
    Environment env;
    env.obstacles.push_back(Obstacle{});
    const double dt = World::stable_step(a);
    return World(std::move(a), env, dt);
}

}  // namespace

// At rest the Hertz reactions carry the weight: sum k p^1.5 = M g.
TEST(Contact, RestingPenetrationMatchesStaticBalance)
{
    World w = rod_on_floor(0.0, 30.0);
    ASSERT_TRUE(settle(w, 2.0, 1e-6, 0.02));
    const RodState& rod = w.assembly().rods[0].state;
    const double k = w.environment().obstacles[0].stiffness;
    double weight = 0.0;
    double reaction = 0.0;
    for (std::size_t i = 0; i < rod.n_nodes(); ++i) {
        weight += rod.mass[i] * 9.81;
        const double p = rod.geometry.outer_radius - rod.position[i].z();
        ASSERT_GT(p, 0.0);
        reaction += k * p * std::sqrt(p);
    }
    EXPECT_NEAR(reaction, weight, 0.01 * weight);
}

TEST(Contact, DroppedRodBouncesLowerEachTime)
{
    World w = rod_on_floor(0.01, 0.0);
    auto centre = [&](double& z, double& vz) {
        const RodState& rod = w.assembly().rods[0].state;
        double m = 0.0;
        z = 0.0;
        vz = 0.0;
        for (std::size_t i = 0; i < rod.n_nodes(); ++i) {
            m += rod.mass[i];
            z += rod.mass[i] * rod.position[i].z();
            vz += rod.mass[i] * rod.velocity[i].z();
        }
        z /= m;
        vz /= m;
    };
    std::vector<double> apex;
    double prev_v = 0.0;
    while (w.time() < 1.0 && apex.size() < 3) {
        w.step();
        double z = 0.0;
        double v = 0.0;
        centre(z, v);
        if (prev_v > 0.0 && v <= 0.0) apex.push_back(z);
        prev_v = v;
    }
    ASSERT_GE(apex.size(), 2u);
    const double start = 0.01 + w.assembly().rods[0].state.geometry.outer_radius;
    EXPECT_LT(apex[0], start);
    for (std::size_t i = 1; i < apex.size(); ++i) EXPECT_LT(apex[i], apex[i - 1]);
    EXPECT_LT(w.environment().max_penetration, w.assembly().rods[0].state.geometry.outer_radius);
}

TEST(Payload, AttachAddsTipMassOnceAndRejectsDuplicate)
{
    ArmOptions o;
    o.n_elements = 4;
    Assembly a = make_preset("br2-b3", o);
    Environment env;
    Payload p;
    p.rod = "lower.bend";
    const std::size_t r = a.index_of("lower.bend");
    const double before = a.rods[r].state.mass.back();
    attach_payload(a, env, p);
    EXPECT_NEAR(a.rods[r].state.mass.back() - before, 0.024, 1e-15);
    EXPECT_THROW(attach_payload(a, env, p), ConfigurationError);
    const auto c = payload_center(a, env);
    ASSERT_TRUE(c.has_value());
    const RodState& rod = a.rods[r].state;
    EXPECT_NEAR((*c - rod.position.back()).norm(), 0.025, 1e-12);
}

TEST(Payload, InvalidPayloadAndUnknownRodAreRejected)
{
    Assembly a = make_preset("br2");
    Environment env;
    Payload p;
    p.rod = "missing";
    EXPECT_THROW(attach_payload(a, env, p), ConfigurationError);
    p.rod = "bend";
    p.mass = -1.0;
    EXPECT_THROW(attach_payload(a, env, p), ConfigurationError);
}

TEST(ObstacleValidation, RejectsBadParameters)
{
    Obstacle o = wall();
    o.hole_radius = 0.0;
    EXPECT_THROW(o.validate(), ConfigurationError);
    Obstacle c;
    c.kind = ObstacleKind::Cylinder;
    c.length = -1.0;
    EXPECT_THROW(c.validate(), ConfigurationError);
    Obstacle bad_pose;
    bad_pose.pose.orientation = 2.0 * Mat3::Identity();
    EXPECT_THROW(bad_pose.validate(), InvalidRotationError);
}
