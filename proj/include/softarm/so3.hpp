#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "softarm/errors.hpp"

namespace softarm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

namespace so3 {

inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kOrthoTolerance = 1e-10;

inline Mat3 skew(const Vec3& v)
{
    Mat3 s;
    s << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return s;
}

inline bool is_rotation(const Mat3& r, double tol = kOrthoTolerance)
{
    if (!r.allFinite()) return false;
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

inline void require_rotation(const Mat3& r, double tol = kOrthoTolerance)
{
    if (!is_rotation(r, tol))
        throw InvalidRotationError("matrix is not a proper rotation within tolerance");
}

namespace detail {

inline constexpr double kSeriesAngle = 1e-2;

// sin(t)/t and (1 - cos t)/t^2 from t^2; series below kSeriesAngle, where
// the truncation error is below 1e-20.
inline void rodrigues_coefficients(double theta2, double& a, double& b)
{
    if (theta2 < kSeriesAngle * kSeriesAngle) {
        const double t = theta2;
        a = 1.0 - t / 6.0 * (1.0 - t / 20.0 * (1.0 - t / 42.0 * (1.0 - t / 72.0)));
        b = 0.5 * (1.0 - t / 12.0 * (1.0 - t / 30.0 * (1.0 - t / 56.0 * (1.0 - t / 90.0))));
        return;
    }
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
}

}  // namespace detail

/// Rodrigues rotation. Vectors longer than pi are wrapped by the periodicity
/// of sin/cos, so no explicit reduction is needed.
inline Mat3 exp_map(const Vec3& v)
{
    const double theta2 = v.squaredNorm();
    double a = 0.0;
    double b = 0.0;
    detail::rodrigues_coefficients(theta2, a, b);
    // I + a K + b K^2 with K^2 = v v^T - |v|^2 I
    Mat3 r = b * (v * v.transpose());
    r.diagonal().array() += 1.0 - b * theta2;
    r(0, 1) -= a * v.z();
    r(1, 0) += a * v.z();
    r(0, 2) += a * v.y();
    r(2, 0) -= a * v.y();
    r(1, 2) -= a * v.x();
    r(2, 1) += a * v.x();
    return r;
}

/// Rotate a vector by exp_map(v) without forming the matrix.
inline Vec3 rotate(const Vec3& v, const Vec3& x)
{
    const double theta = v.norm();
    if (theta < kSmallAngle) return x + v.cross(x) + 0.5 * v.cross(v.cross(x));
    const Vec3 axis = v / theta;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return x * c + axis.cross(x) * s + axis * (axis.dot(x) * (1.0 - c));
}

namespace detail {

// Unchecked principal logarithm. Near pi the axis comes from the dominant
// diagonal of R + R^T, which avoids the cancellation in (R - R^T)/(2 sin).
inline Vec3 log_unchecked(const Mat3& r)
{
    const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
    const double sin_theta = 0.5 * w.norm();
    if (cos_theta > 0.0 && sin_theta < kSeriesAngle) {
        // asin(s) / s
        const double t = sin_theta * sin_theta;
        const double ratio = 1.0 + t * (1.0 / 6.0 + t * (3.0 / 40.0 + t * (5.0 / 112.0 + t * (35.0 / 1152.0))));
        return 0.5 * w * ratio;
    }
    const double theta = std::atan2(sin_theta, cos_theta);

    if (theta < kSmallAngle) {
        // log(R) ~ vee(R - R^T)/2 * (1 + theta^2/6)
        return 0.5 * w * (1.0 + theta * theta / 6.0);
    }
    if (cos_theta > -0.99) {
        return w * (theta / (2.0 * sin_theta));
    }

    const Mat3 s = 0.5 * (r + r.transpose()) - cos_theta * Mat3::Identity();
    // s = (1 - cos) a a^T
    int i = 0;
    s.diagonal().maxCoeff(&i);
    Vec3 axis = s.col(i) / std::sqrt(std::max(s(i, i), 1e-300));
    axis.normalize();
    if (axis.dot(w) < 0.0) axis = -axis;
    return axis * theta;
}

}  // namespace detail

/// Principal-branch rotation vector of R, |result| <= pi.
inline Vec3 log_map(const Mat3& r)
{
    require_rotation(r);
    return detail::log_unchecked(r);
}

/// R_from * exp(t * log(R_from^T R_to)).
inline Mat3 geodesic_step(const Mat3& r_from, const Mat3& r_to, double t)
{
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("geodesic_step: t must lie in [0, 1]");
    require_rotation(r_from);
    require_rotation(r_to);
    if (t == 0.0) return r_from;
    if (t == 1.0) return r_to;
    return r_from * exp_map(t * detail::log_unchecked(r_from.transpose() * r_to));
}

/// Nearest rotation in the Frobenius sense; used to clean accumulated drift.
inline Mat3 orthonormalize(const Mat3& m)
{
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

inline double geodesic_distance(const Mat3& a, const Mat3& b)
{
    return detail::log_unchecked(a.transpose() * b).norm();
}

inline Mat3 rot_x(double a) { return exp_map(Vec3(a, 0.0, 0.0)); }
inline Mat3 rot_y(double a) { return exp_map(Vec3(0.0, a, 0.0)); }
inline Mat3 rot_z(double a) { return exp_map(Vec3(0.0, 0.0, a)); }

}  // namespace so3
}  // namespace softarm
