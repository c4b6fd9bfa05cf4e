#include <gtest/gtest.h>

#include <cmath>

#include "softarm/metrics.hpp"
#include "softarm/simulation.hpp"

using namespace softarm;

namespace {

StrainRecord uniform(std::size_t n, double length, const Vec3& kappa, const Vec3& nu)
{
    StrainRecord r;
    for (std::size_t i = 0; i <= n; ++i) {
        r.s.push_back(length * static_cast<double>(i) / static_cast<double>(n));
        r.curvature.push_back(kappa);
        r.shear.push_back(nu);
    }
    r.tip = Vec3(0.0, 0.0, -length);
    return r;
}

template <class F>
StrainRecord sampled(std::size_t n, double length, F kappa)
{
    StrainRecord r = uniform(n, length, Vec3::Zero(), Vec3::Zero());
    for (std::size_t i = 0; i <= n; ++i) r.curvature[i] = kappa(r.s[i]);
    return r;
}

}  // namespace

TEST(Metrics, StraightRodIntegralsVanish)
{
    const StrainRecord r = uniform(10, 0.18, Vec3::Zero(), Vec3::Zero());
    EXPECT_EQ(total_twist(r), 0.0);
    EXPECT_EQ(total_bend(r), 0.0);
    EXPECT_EQ(total_elongation(r), 0.0);
}

TEST(Metrics, ConstantFieldsIntegrateExactly)
{
    EXPECT_NEAR(total_twist(uniform(7, 0.18, Vec3(0, 0, 2.0), Vec3::Zero())), 0.36, 1e-15);
    const double radius = 0.3;
    EXPECT_NEAR(total_bend(uniform(7, 0.18, Vec3(1.0 / radius, 0, 0), Vec3::Zero())), 0.18 / radius, 1e-14);
    EXPECT_NEAR(total_elongation(uniform(7, 0.18, Vec3::Zero(), Vec3(0, 0, 0.05))), 0.009, 1e-15);
    EXPECT_NEAR(total_elongation(uniform(7, 0.18, Vec3::Zero(), Vec3(0, 0, -0.05))), 0.009, 1e-15);
}

TEST(Metrics, BendIsIndependentOfBendingPlane)
{
    for (double phi : {0.0, 0.4, 1.3, 2.9}) {
        const StrainRecord r = uniform(5, 0.18, Vec3(3.0 * std::cos(phi), 3.0 * std::sin(phi), 0), Vec3::Zero());
        EXPECT_NEAR(total_bend(r), 0.54, 1e-14);
    }
}

TEST(Metrics, ReversedTwistCountsBothHalves)
{
    StrainRecord cw = uniform(6, 0.18, Vec3(0, 0, 3.0), Vec3::Zero());
    StrainRecord ccw = uniform(6, 0.18, Vec3(0, 0, -3.0), Vec3::Zero());
    StrainRecord both = cw;
    for (std::size_t i = 0; i < ccw.size(); ++i) {
        both.s.push_back(cw.s.back() + ccw.s[i]);
        both.curvature.push_back(ccw.curvature[i]);
        both.shear.push_back(ccw.shear[i]);
    }
    EXPECT_NEAR(total_twist(both), total_twist(cw) + total_twist(ccw), 1e-15);
}

TEST(Metrics, RefiningTheGridChangesLittle)
{
    auto field = [](double s) { return Vec3(std::sin(20 * s), 0.5 * s, 1.0 + std::cos(15 * s)); };
    const StrainRecord coarse = sampled(24, 0.36, field);
    const StrainRecord fine = sampled(48, 0.36, field);
    EXPECT_LT(relative_error(total_twist(fine), total_twist(coarse)), 0.5);
    EXPECT_LT(relative_error(total_bend(fine), total_bend(coarse)), 0.5);
}

TEST(Metrics, EmptyRecordIsAFormatError)
{
    EXPECT_THROW(total_twist(StrainRecord{}), FormatError);
}

TEST(RelativeError, Definition)
{
    EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
    EXPECT_NEAR(relative_error(1.05, 1.0), 5.0, 1e-12);
    EXPECT_NE(relative_error(2.0, 1.0), relative_error(1.0, 2.0));
    EXPECT_NEAR(relative_error(Vec3(3, 4, 0), Vec3(3, 0, 0)), 400.0 / 3.0, 1e-12);
    EXPECT_THROW(relative_error(1.0, 0.0), DomainError);
    EXPECT_THROW(relative_error(Vec3(1, 0, 0), Vec3::Zero()), DomainError);
}

TEST(Compare, IdenticalRecordsAndAbsentModes)
{
    const StrainRecord bend = uniform(6, 0.18, Vec3(2.0, 0, 0), Vec3(0, 0, 0.01));
    const MetricsReport rep = compare(bend, bend);
    EXPECT_EQ(*rep.row("tip_position").error_pct, 0.0);
    EXPECT_EQ(*rep.row("total_bend").error_pct, 0.0);
    EXPECT_EQ(*rep.row("elongation").error_pct, 0.0);
    EXPECT_FALSE(rep.row("total_twist").error_pct.has_value());
    EXPECT_NE(format_table(rep).find("N/A"), std::string::npos);
    EXPECT_NE(format_lines(rep).find("metric=total_twist"), std::string::npos);
}

TEST(Compare, LengthMismatchIsRejected)
{
    EXPECT_THROW(compare(uniform(4, 0.18, Vec3::Zero(), Vec3::Zero()), uniform(4, 0.36, Vec3::Zero(), Vec3::Zero())),
                 ConfigurationError);
}

TEST(Compare, TwistTwistPerturbedTwoPercent)
{
    ArmOptions o;
    o.n_elements = 6;
    for (double psi : {10.0, 20.0}) {
        Assembly a = make_preset("twist-twist", o);
        for (auto& r : a.rods) r.state.material.damping = 20.0;
        const double dt = World::stable_step(a);
        Environment env;
        env.gravity = Vec3::Zero();
        World w(std::move(a), env, dt);
        for (int k = 0; k < 4000; ++k) {
            const double ramp = std::min(1.0, k / 2000.0);
            w.set_pressures({ramp * psi * kPsiToPa, ramp * psi * kPsiToPa});
            w.step();
        }
        const StrainRecord base = strain_record(w.assembly(), {"cw", "ccw"});
        StrainRecord pert = base;
        for (auto& k : pert.curvature) k *= 1.02;
        for (auto& n : pert.shear) n *= 1.02;
        pert.tip *= 1.02;
        const MetricsReport rep = compare(pert, base);
        EXPECT_NEAR(*rep.row("total_twist").error_pct, 2.0, 1e-9) << psi;
        EXPECT_NEAR(*rep.row("tip_position").error_pct, 2.0, 1e-9) << psi;
        if (rep.row("elongation").error_pct) EXPECT_NEAR(*rep.row("elongation").error_pct, 2.0, 1e-9);
    }
}

TEST(Compare, IntegralsIgnoreRigidMotion)
{
    ArmOptions o;
    o.n_elements = 5;
    Assembly a = make_preset("br2", o);
    for (auto& r : a.rods) {
        for (std::size_t i = 0; i < r.state.n_nodes(); ++i)
            r.state.position[i] += 1e-3 * Vec3(std::sin(3.0 * i), std::cos(2.0 * i), 0.5 * i);
        compute_strains(r.state);
    }
    const StrainRecord before = strain_record(a.rods[0].state);
    const Mat3 rot = so3::exp_map(Vec3(0.3, -1.1, 0.7));
    const Vec3 shift(0.2, -0.5, 1.0);
    for (auto& x : a.rods[0].state.position) x = rot * x + shift;
    for (auto& q : a.rods[0].state.director) q = q * rot.transpose();
    compute_strains(a.rods[0].state);
    const StrainRecord after = strain_record(a.rods[0].state);
    EXPECT_NEAR(total_twist(after), total_twist(before), 1e-12);
    EXPECT_NEAR(total_bend(after), total_bend(before), 1e-12);
    EXPECT_NEAR(total_elongation(after), total_elongation(before), 1e-12);
    EXPECT_NEAR(after.tip.norm(), before.tip.norm(), 1e-12);
}

TEST(Compare, RecordTextRoundTrip)
{
    StrainRecord r = sampled(9, 0.18, [](double s) { return Vec3(s, 1.0 / 3.0, -s * s); });
    r.tip = Vec3(0.1, 0.2, -1.0 / 7.0);
    const StrainRecord back = parse_record(format_record(r));
    EXPECT_EQ(back.s, r.s);
    EXPECT_EQ(back.curvature, r.curvature);
    EXPECT_EQ(back.tip, r.tip);
    EXPECT_NE(profile_svg(r, "demo").find("<polyline"), std::string::npos);
}
