#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "softarm/assembly.hpp"
#include "softarm/errors.hpp"

namespace softarm {

/// Strains sampled along an arm. Shear uses the engine convention (zero at
/// rest); curvature is in the local frame.
struct StrainRecord {
    std::vector<double> s;  // rest arclength, non-decreasing
    std::vector<Vec3> curvature;
    std::vector<Vec3> shear;
    Vec3 tip = Vec3::Zero();  // tip minus base, lab frame

    std::size_t size() const { return s.size(); }
    double length() const { return s.empty() ? 0.0 : s.back() - s.front(); }

    void validate() const
    {
        if (s.size() < 2) throw FormatError("strain record: need at least 2 samples");
        if (curvature.size() != s.size() || shear.size() != s.size())
            throw FormatError("strain record: field sizes differ from the grid");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!std::isfinite(s[i]) || !curvature[i].allFinite() || !shear[i].allFinite())
                throw FormatError("strain record: non-finite sample " + std::to_string(i));
            if (i > 0 && s[i] < s[i - 1]) throw FormatError("strain record: arclength decreases at " + std::to_string(i));
        }
    }
};

/// Node samples of one rod: interior nodes carry their junction curvature,
/// end nodes copy the nearest junction; shear is averaged onto nodes.
inline StrainRecord strain_record(const RodState& rod, double s0 = 0.0)
{
    const std::size_t n = rod.n_elements();
    StrainRecord r;
    double s = s0;
    for (std::size_t i = 0; i <= n; ++i) {
        r.s.push_back(s);
        if (i < n) s += rod.rest_length[i];
        if (n == 1) r.curvature.push_back(Vec3::Zero());
        else r.curvature.push_back(rod.curvature[std::clamp<std::size_t>(i, 1, n - 1) - 1]);
        if (i == 0) r.shear.push_back(rod.shear[0]);
        else if (i == n) r.shear.push_back(rod.shear[n - 1]);
        else r.shear.push_back(0.5 * (rod.shear[i - 1] + rod.shear[i]));
    }
    r.tip = rod.position.back() - rod.position.front();
    return r;
}

/// Record along a chain of serially connected rods, base first.
inline StrainRecord strain_record(const Assembly& a, const std::vector<std::string>& chain)
{
    if (chain.empty()) throw ConfigurationError("strain_record: empty rod chain");
    StrainRecord out;
    Vec3 base = Vec3::Zero();
    for (std::size_t c = 0; c < chain.size(); ++c) {
        const RodState& rod = a.rods[a.index_of(chain[c])].state;
        const StrainRecord part = strain_record(rod, out.s.empty() ? 0.0 : out.s.back());
        if (c == 0) base = rod.position.front();
        out.s.insert(out.s.end(), part.s.begin(), part.s.end());
        out.curvature.insert(out.curvature.end(), part.curvature.begin(), part.curvature.end());
        out.shear.insert(out.shear.end(), part.shear.begin(), part.shear.end());
        out.tip = rod.position.back() - base;
    }
    return out;
}

namespace detail {

template <class F>
double trapezoid(const StrainRecord& r, F f)
{
    r.validate();
    double sum = 0.0;
    double prev = f(0);
    for (std::size_t i = 1; i < r.size(); ++i) {
        const double cur = f(i);
        sum += 0.5 * (prev + cur) * (r.s[i] - r.s[i - 1]);
        prev = cur;
    }
    return sum;
}

}  // namespace detail

/// Integral of |kappa3| over the arm, rad.
inline double total_twist(const StrainRecord& r)
{
    return detail::trapezoid(r, [&](std::size_t i) { return std::abs(r.curvature[i].z()); });
}

/// Integral of the bending curvature magnitude, rad.
inline double total_bend(const StrainRecord& r)
{
    return detail::trapezoid(r, [&](std::size_t i) { return std::hypot(r.curvature[i].x(), r.curvature[i].y()); });
}

/// Integral of |stretch - 1|; the engine stores stretch - 1 directly.
inline double total_elongation(const StrainRecord& r)
{
    return detail::trapezoid(r, [&](std::size_t i) { return std::abs(r.shear[i].z()); });
}

/// |a - b| / |b| * 100.
inline double relative_error(double a, double b)
{
    if (!(std::abs(b) > 0.0)) throw DomainError("relative_error: baseline is zero");
    return std::abs(a - b) / std::abs(b) * 100.0;
}

inline double relative_error(const Vec3& a, const Vec3& b)
{
    if (!(b.norm() > 0.0)) throw DomainError("relative_error: baseline is zero");
    return (a - b).norm() / b.norm() * 100.0;
}

struct MetricRow {
    std::string name;
    double a = 0.0;  // raw value of the compared record
    double b = 0.0;  // raw value of the baseline
    std::optional<double> error_pct;  // empty: mode absent (N/A)
};

struct MetricsReport {
    std::vector<MetricRow> rows;  // tip_position, total_twist, total_bend, elongation

    const MetricRow& row(const std::string& name) const
    {
        for (const auto& r : rows)
            if (r.name == name) return r;
        throw ConfigurationError("metrics: no row '" + name + "'");
    }
};

struct CompareOptions {
    double absent_threshold = 1e-3;  // baseline integral below this: N/A
    double length_tolerance = 0.01;  // relative arclength mismatch allowed
};

/// Metrics of `a` against the baseline `b`.
inline MetricsReport compare(const StrainRecord& a, const StrainRecord& b, const CompareOptions& opt = {})
{
    a.validate();
    b.validate();
    const double la = a.length();
    const double lb = b.length();
    if (!(std::abs(la - lb) <= opt.length_tolerance * std::max(la, lb)))
        throw ConfigurationError("compare: arclengths " + std::to_string(la) + " and " + std::to_string(lb) +
                                 " m differ beyond tolerance");
    MetricsReport rep;
    MetricRow tip{"tip_position", a.tip.norm(), b.tip.norm(), std::nullopt};
    if (b.tip.norm() > 0.0) tip.error_pct = relative_error(a.tip, b.tip);
    rep.rows.push_back(tip);
    auto add = [&](const char* name, double va, double vb) {
        MetricRow r{name, va, vb, std::nullopt};
        if (vb >= opt.absent_threshold) r.error_pct = relative_error(va, vb);
        rep.rows.push_back(r);
    };
    add("total_twist", total_twist(a), total_twist(b));
    add("total_bend", total_bend(a), total_bend(b));
    add("elongation", total_elongation(a), total_elongation(b));
    return rep;
}

/// Aligned table in the order tip position, twist, bend, elongation.
inline std::string format_table(const MetricsReport& rep)
{
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %14s %14s %10s\n", "metric", "record", "baseline", "error %");
    out << buf;
    for (const auto& r : rep.rows) {
        char err[32] = "N/A";
        if (r.error_pct) std::snprintf(err, sizeof err, "%.2f", *r.error_pct);
        std::snprintf(buf, sizeof buf, "%-14s %14.6g %14.6g %10s\n", r.name.c_str(), r.a, r.b, err);
        out << buf;
    }
    return out.str();
}

/// One `key=value` line per metric.
inline std::string format_lines(const MetricsReport& rep)
{
    std::ostringstream out;
    out.precision(17);
    for (const auto& r : rep.rows) {
        out << "metric=" << r.name << " record=" << r.a << " baseline=" << r.b << " error_pct=";
        if (r.error_pct) out << *r.error_pct;
        else out << "N/A";
        out << '\n';
    }
    return out.str();
}

/// Curvature profiles (kappa1, kappa2, kappa3 against arclength) as SVG.
inline std::string profile_svg(const StrainRecord& r, const std::string& title = "")
{
    r.validate();
    const double w = 640.0, h = 360.0, pad = 40.0;
    double lo = 0.0, hi = 0.0;
    for (const auto& k : r.curvature) {
        lo = std::min(lo, k.minCoeff());
        hi = std::max(hi, k.maxCoeff());
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double s0 = r.s.front();
    const double span = std::max(r.length(), 1e-12);
    auto px = [&](double s) { return pad + (s - s0) / span * (w - 2 * pad); };
    auto py = [&](double v) { return h - pad - (v - lo) / (hi - lo) * (h - 2 * pad); };
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<text x=\"" << pad << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << py(0.0) << "\" x2=\"" << w - pad << "\" y2=\"" << py(0.0)
        << "\" stroke=\"#999\"/>\n";
    const char* colors[3] = {"#1f77b4", "#2ca02c", "#d62728"};
    const char* labels[3] = {"kappa1", "kappa2", "kappa3"};
    for (int c = 0; c < 3; ++c) {
        out << "<polyline fill=\"none\" stroke=\"" << colors[c] << "\" points=\"";
        for (std::size_t i = 0; i < r.size(); ++i) out << px(r.s[i]) << ',' << py(r.curvature[i][c]) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << w - pad - 60 << "\" y=\"" << 40 + 16 * c << "\" font-size=\"12\" fill=\"" << colors[c]
            << "\">" << labels[c] << "</text>\n";
    }
    out << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" font-size=\"12\">s (m)</text>\n";
    out << "</svg>\n";
    return out.str();
}

/// Line format: `s, k1, k2, k3, n1, n2, n3` after a `# tip=x,y,z` header.
inline std::string format_record(const StrainRecord& r)
{
    std::ostringstream out;
    out.precision(17);
    out << "# tip=" << r.tip.x() << ',' << r.tip.y() << ',' << r.tip.z() << '\n';
    for (std::size_t i = 0; i < r.size(); ++i) {
        out << r.s[i];
        for (int c = 0; c < 3; ++c) out << ", " << r.curvature[i][c];
        for (int c = 0; c < 3; ++c) out << ", " << r.shear[i][c];
        out << '\n';
    }
    return out.str();
}

inline StrainRecord parse_record(std::istream& in)
{
    StrainRecord r;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        if (line[0] == '#') {
            double x, y, z;
            if (std::sscanf(line.c_str(), "# tip=%lf,%lf,%lf", &x, &y, &z) == 3) r.tip = Vec3(x, y, z);
            continue;
        }
        double v[7];
        if (std::sscanf(line.c_str(), "%lf, %lf, %lf, %lf, %lf, %lf, %lf", &v[0], &v[1], &v[2], &v[3], &v[4], &v[5],
                        &v[6]) != 7)
            throw FormatError("strain record line " + std::to_string(number) + ": expected 7 numbers");
        r.s.push_back(v[0]);
        r.curvature.emplace_back(v[1], v[2], v[3]);
        r.shear.emplace_back(v[4], v[5], v[6]);
    }
    r.validate();
    return r;
}

inline StrainRecord parse_record(const std::string& text)
{
    std::istringstream in(text);
    return parse_record(in);
}

}  // namespace softarm
