#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "softarm/so3.hpp"

using namespace softarm;

namespace {

Mat3 random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, std::numbers::pi);
    Vec3 axis(n(rng), n(rng), n(rng));
    axis.normalize();
    return so3::exp_map(axis * u(rng));
}

}  // namespace

TEST(So3, LogOfIdentityIsZero)
{
    EXPECT_EQ(so3::log_map(Mat3::Identity()), Vec3::Zero());
}

TEST(So3, LogOfQuarterTurnAboutZ)
{
    Mat3 r;
    r << 0, -1, 0,
         1, 0, 0,
         0, 0, 1;
    const Vec3 v = so3::log_map(r);
    EXPECT_NEAR(v.x(), 0.0, 1e-15);
    EXPECT_NEAR(v.y(), 0.0, 1e-15);
    EXPECT_NEAR(v.z(), std::numbers::pi / 2.0, 1e-15);
}

TEST(So3, ExpOfZeroAndHalfTurn)
{
    EXPECT_EQ(so3::exp_map(Vec3::Zero()), Mat3::Identity());
    const Mat3 half = so3::exp_map(Vec3(0, 0, std::numbers::pi));
    const Mat3 expected = Vec3(-1, -1, 1).asDiagonal();
    EXPECT_LT((half - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(So3, ExpOfTinyVectorMatchesTaylor)
{
    const Vec3 v(1e-12, -7e-13, 3e-13);
    const Mat3 expected = Mat3::Identity() + so3::skew(v);
    EXPECT_LT((so3::exp_map(v) - expected).cwiseAbs().maxCoeff(), 1e-18);
}

TEST(So3, RoundTripThousandRandomRotations)
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const Mat3 r = random_rotation(rng);
        const Vec3 v = so3::log_map(r);
        EXPECT_LE(v.norm(), std::numbers::pi + 1e-12);
        EXPECT_LT((so3::exp_map(v) - r).norm(), 1e-10);
    }
}

TEST(So3, RoundTripNearHalfTurn)
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double eps : {0.0, 1e-12, 1e-9, 1e-6, 1e-3, 0.1}) {
        Vec3 axis(n(rng), n(rng), n(rng));
        axis.normalize();
        const Mat3 r = so3::exp_map(axis * (std::numbers::pi - eps));
        const Vec3 v = so3::log_map(r);
        EXPECT_LT((so3::exp_map(v) - r).norm(), 1e-10) << "eps=" << eps;
        if (eps > 0.0) EXPECT_LT((v - axis * (std::numbers::pi - eps)).norm(), 1e-7) << "eps=" << eps;
    }
}

TEST(So3, LogRejectsNonOrthonormal)
{
    Mat3 bad = Mat3::Identity();
    bad(0, 0) = 1.001;
    EXPECT_THROW(so3::log_map(bad), InvalidRotationError);
    Mat3 reflection = Mat3::Identity();
    reflection(2, 2) = -1.0;
    EXPECT_THROW(so3::log_map(reflection), InvalidRotationError);
}

TEST(So3, GeodesicEndpointsAndMidpoint)
{
    std::mt19937_64 rng(3);
    const Mat3 a = random_rotation(rng);
    const Mat3 b = random_rotation(rng);
    EXPECT_EQ(so3::geodesic_step(a, b, 0.0), a);
    EXPECT_EQ(so3::geodesic_step(a, b, 1.0), b);

    const Mat3 mid = so3::geodesic_step(Mat3::Identity(), so3::rot_z(std::numbers::pi / 2.0), 0.5);
    const double c = std::cos(std::numbers::pi / 4.0);
    Mat3 expected;
    expected << c, -c, 0,
                c, c, 0,
                0, 0, 1;
    EXPECT_LT((mid - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(So3, GeodesicRejectsOutOfRangeT)
{
    EXPECT_THROW(so3::geodesic_step(Mat3::Identity(), Mat3::Identity(), -0.1), DomainError);
    EXPECT_THROW(so3::geodesic_step(Mat3::Identity(), Mat3::Identity(), 1.5), DomainError);
}

TEST(So3, GeodesicStaysOrthonormal)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> t(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const Mat3 r = so3::geodesic_step(random_rotation(rng), random_rotation(rng), t(rng));
        EXPECT_TRUE(so3::is_rotation(r, 1e-10));
    }
}
