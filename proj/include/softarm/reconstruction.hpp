#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softarm/errors.hpp"
#include "softarm/metrics.hpp"
#include "softarm/rod.hpp"

namespace softarm {

// Rigid registration

/// target = rotation * source + translation.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
};

/// Least-squares rigid fit of corresponding point sets.
inline RigidTransform kabsch_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target)
{
    if (source.size() != target.size()) throw ConfigurationError("kabsch_align: point counts differ");
    if (source.size() < 3) throw DegenerateError("kabsch_align: need at least 3 correspondences");
    Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        cs += source[i];
        ct += target[i];
    }
    cs /= static_cast<double>(source.size());
    ct /= static_cast<double>(source.size());
    Mat3 h = Mat3::Zero();
    Mat3 spread = Mat3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Vec3 a = source[i] - cs;
        h += a * (target[i] - ct).transpose();
        spread += a * a.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(spread);
    const Vec3 ev = eig.eigenvalues();  // ascending
    if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300)))
        throw DegenerateError("kabsch_align: source points are collinear or coincident");
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    RigidTransform t;
    t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
    t.translation = ct - t.rotation * cs;
    return t;
}

// Marker tracking

struct MarkerFrame {
    double time = 0.0;
    std::vector<Vec3> points;
};

/// Marker layout of one cross-section in its local frame.
struct SectionTemplate {
    std::string id;
    std::vector<Vec3> offsets;
};

/// Pose sequence of one section. lab = orientation^T * offset + position,
/// matching the director convention.
struct SectionTrack {
    std::string section;
    std::vector<double> time;
    std::vector<Pose> pose;
    std::vector<bool> missing;  // held from the previous frame

    std::size_t size() const { return pose.size(); }
};

struct IcpOptions {
    double gate = 0.01;              // max marker jump between frames, m
    double assign_tolerance = 2e-3;  // marker residual for the first-frame match, m
    int max_iterations = 50;
    double cost_tolerance = 1e-10;   // m^2
};

namespace detail {

inline Pose pose_from(const RigidTransform& t) { return {t.translation, t.rotation.transpose()}; }
inline RigidTransform transform_from(const Pose& p) { return {p.orientation.transpose(), p.position}; }

inline std::size_t nearest(const std::vector<Vec3>& pts, const Vec3& x, double& dist)
{
    std::size_t best = pts.size();
    dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = (pts[i] - x).norm();
        if (d < dist) {
            dist = d;
            best = i;
        }
    }
    return best;
}

/// Residual RMS of a template at a pose; infinite if a marker has no point
/// within `gate`.
inline double template_rms(const SectionTemplate& tpl, const RigidTransform& t, const std::vector<Vec3>& pts,
                           double gate, std::vector<std::size_t>* matched = nullptr)
{
    double sum = 0.0;
    if (matched) matched->clear();
    for (const auto& o : tpl.offsets) {
        double d = 0.0;
        const std::size_t k = nearest(pts, t.apply(o), d);
        if (!(d <= gate)) return std::numeric_limits<double>::infinity();
        sum += d * d;
        if (matched) matched->push_back(k);
    }
    return std::sqrt(sum / static_cast<double>(tpl.offsets.size()));
}

/// Every pose placing the template on the cloud within tolerance, from
/// matching its widest marker triangle to point triples of equal shape.
inline std::vector<RigidTransform> template_candidates(const SectionTemplate& tpl, const std::vector<Vec3>& pts,
                                                       double tol)
{
    const auto& o = tpl.offsets;
    std::size_t a = 0, b = 1, c = 2;
    double best = -1.0;
    for (std::size_t i = 0; i < o.size(); ++i)
        for (std::size_t j = i + 1; j < o.size(); ++j)
            for (std::size_t k = j + 1; k < o.size(); ++k) {
                const double area = (o[j] - o[i]).cross(o[k] - o[i]).norm();
                if (area > best) {
                    best = area;
                    a = i;
                    b = j;
                    c = k;
                }
            }
    const double dab = (o[b] - o[a]).norm(), dac = (o[c] - o[a]).norm(), dbc = (o[c] - o[b]).norm();
    const double dtol = 3.0 * tol;
    std::vector<RigidTransform> out;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j == i || std::abs((pts[j] - pts[i]).norm() - dab) > dtol) continue;
            for (std::size_t k = 0; k < pts.size(); ++k) {
                if (k == i || k == j) continue;
                if (std::abs((pts[k] - pts[i]).norm() - dac) > dtol) continue;
                if (std::abs((pts[k] - pts[j]).norm() - dbc) > dtol) continue;
                RigidTransform t = kabsch_align({o[a], o[b], o[c]}, {pts[i], pts[j], pts[k]});
                if (template_rms(tpl, t, pts, dtol) > tol) continue;
                // refine on all markers
                std::vector<std::size_t> m;
                template_rms(tpl, t, pts, dtol, &m);
                std::vector<Vec3> tgt;
                for (std::size_t q : m) tgt.push_back(pts[q]);
                t = kabsch_align(o, tgt);
                bool duplicate = false;
                for (const auto& prev : out)
                    duplicate = duplicate || ((prev.translation - t.translation).norm() < tol &&
                                              so3::geodesic_distance(prev.rotation, t.rotation) < 1e-3);
                if (!duplicate) out.push_back(t);
            }
        }
    return out;
}

inline std::string describe(const RigidTransform& t)
{
    std::ostringstream s;
    s.precision(4);
    s << "position (" << t.translation.x() << ", " << t.translation.y() << ", " << t.translation.z()
      << ") rotvec (" << so3::detail::log_unchecked(t.rotation).transpose() << ")";
    return s.str();
}

}  // namespace detail

/// Tracks every section through the frames: an unambiguous match in the
/// first frame, then nearest-neighbour ICP warm-started from the previous
/// pose. A section with any marker outside the gate is flagged and held.
inline std::vector<SectionTrack> icp_track(const std::vector<MarkerFrame>& frames,
                                           const std::vector<SectionTemplate>& templates,
                                           const IcpOptions& opt = {})
{
    if (frames.empty()) throw FormatError("icp_track: no frames");
    for (const auto& t : templates)
        if (t.offsets.size() < 3) throw ConfigurationError("icp_track: template '" + t.id + "' needs >= 3 markers");

    std::vector<SectionTrack> tracks;
    std::vector<RigidTransform> current;
    std::vector<std::vector<std::size_t>> claimed;
    for (const auto& tpl : templates) {
        const auto cands = detail::template_candidates(tpl, frames[0].points, opt.assign_tolerance);
        if (cands.empty())
            throw ConfigurationError("icp_track: section '" + tpl.id + "' not found in the first frame");
        if (cands.size() > 1) {
            std::string msg = "icp_track: section '" + tpl.id + "' matches " + std::to_string(cands.size()) +
                              " placements:";
            for (const auto& c : cands) msg += "\n  " + detail::describe(c);
            throw AmbiguityError(msg);
        }
        std::vector<std::size_t> m;
        detail::template_rms(tpl, cands[0], frames[0].points, 3.0 * opt.assign_tolerance, &m);
        for (std::size_t k = 0; k < claimed.size(); ++k)
            for (std::size_t q : m)
                if (std::find(claimed[k].begin(), claimed[k].end(), q) != claimed[k].end())
                    throw AmbiguityError("icp_track: sections '" + templates[k].id + "' and '" + tpl.id +
                                         "' claim the same markers");
        claimed.push_back(m);
        current.push_back(cands[0]);
        tracks.push_back({tpl.id, {}, {}, {}});
    }

    for (const auto& frame : frames) {
        for (std::size_t s = 0; s < templates.size(); ++s) {
            const auto& tpl = templates[s];
            RigidTransform t = current[s];
            bool missing = false;
            double cost = std::numeric_limits<double>::infinity();
            for (int it = 0; it < opt.max_iterations; ++it) {
                std::vector<Vec3> tgt;
                double sum = 0.0;
                for (const auto& o : tpl.offsets) {
                    double d = 0.0;
                    const std::size_t k = detail::nearest(frame.points, t.apply(o), d);
                    if (!(d <= opt.gate)) {
                        missing = true;
                        break;
                    }
                    tgt.push_back(frame.points[k]);
                    sum += d * d;
                }
                if (missing) break;
                const double c = sum / static_cast<double>(tpl.offsets.size());
                const bool done = std::abs(cost - c) < opt.cost_tolerance;
                t = kabsch_align(tpl.offsets, tgt);
                cost = c;
                if (done) break;
            }
            if (missing) t = current[s];
            current[s] = t;
            tracks[s].time.push_back(frame.time);
            tracks[s].pose.push_back(detail::pose_from(t));
            tracks[s].missing.push_back(missing);
        }
    }
    return tracks;
}

/// Geodesic first-order low-pass: each frame moves a fraction `gain` of the
/// way from the filtered pose to the measured one.
inline SectionTrack so3_lowpass(const SectionTrack& seq, double gain)
{
    if (!(gain > 0.0 && gain <= 1.0)) throw DomainError("so3_lowpass: gain must lie in (0, 1]");
    SectionTrack out = seq;
    if (seq.pose.empty() || gain == 1.0) return out;
    Pose f = seq.pose[0];
    for (std::size_t k = 1; k < seq.size(); ++k) {
        const Pose& m = seq.pose[k];
        // rows convention: the lab-frame rotation is orientation^T
        f.orientation = so3::geodesic_step(f.orientation.transpose(), m.orientation.transpose(), gain).transpose();
        f.orientation = so3::orthonormalize(f.orientation);
        f.position += gain * (m.position - f.position);
        out.pose[k] = f;
    }
    return out;
}

/// Lab positions of a template's markers at a section pose.
inline std::vector<Vec3> place_markers(const SectionTemplate& tpl, const Pose& pose)
{
    std::vector<Vec3> out;
    for (const auto& o : tpl.offsets) out.push_back(pose.orientation.transpose() * o + pose.position);
    return out;
}

// Marker and template files

/// Lines `t, marker_id_or_dash, x, y, z`; consecutive lines with one t form
/// a frame.
inline std::vector<MarkerFrame> parse_markers(std::istream& in)
{
    std::vector<MarkerFrame> frames;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string field[5];
        for (int i = 0; i < 5; ++i)
            if (!std::getline(ss, field[i], ','))
                throw FormatError("marker line " + std::to_string(number) + ": expected t, id, x, y, z");
        double v[4];
        const int idx[4] = {0, 2, 3, 4};
        for (int i = 0; i < 4; ++i) {
            try {
                std::size_t used = 0;
                v[i] = std::stod(field[idx[i]], &used);
            } catch (const std::exception&) {
                throw FormatError("marker line " + std::to_string(number) + ": bad number '" + field[idx[i]] + "'");
            }
        }
        if (frames.empty() || frames.back().time != v[0]) {
            if (!frames.empty() && v[0] < frames.back().time)
                throw FormatError("marker line " + std::to_string(number) + ": time goes backwards");
            frames.push_back({v[0], {}});
        }
        frames.back().points.emplace_back(v[1], v[2], v[3]);
    }
    return frames;
}

inline std::string format_markers(const std::vector<MarkerFrame>& frames)
{
    std::ostringstream out;
    out.precision(17);
    for (const auto& f : frames)
        for (const auto& p : f.points) out << f.time << ", -, " << p.x() << ", " << p.y() << ", " << p.z() << '\n';
    return out.str();
}

/// Lines `section_id, x1, y1, z1, x2, ...`; `# arclength.<id>=s` headers
/// place sections along the arm.
struct TemplateSet {
    std::vector<SectionTemplate> sections;
    std::vector<std::pair<std::string, double>> arclength;
    double arm_length = 0.0;
};

inline TemplateSet parse_templates(std::istream& in)
{
    TemplateSet set;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            const double value = std::stod(line.substr(eq + 1));
            if (key.rfind("arclength.", 0) == 0) set.arclength.emplace_back(key.substr(10), value);
            else if (key == "arm_length") set.arm_length = value;
            continue;
        }
        std::stringstream ss(line);
        std::string id, f;
        std::getline(ss, id, ',');
        std::vector<double> v;
        while (std::getline(ss, f, ',')) {
            try {
                v.push_back(std::stod(f));
            } catch (const std::exception&) {
                throw FormatError("template line " + std::to_string(number) + ": bad number '" + f + "'");
            }
        }
        if (v.size() < 9 || v.size() % 3 != 0)
            throw FormatError("template line " + std::to_string(number) + ": need >= 3 markers as x, y, z triples");
        SectionTemplate t{id, {}};
        for (std::size_t i = 0; i < v.size(); i += 3) t.offsets.emplace_back(v[i], v[i + 1], v[i + 2]);
        set.sections.push_back(t);
    }
    return set;
}

// Posture reconstruction

/// Uniform clamped cubic B-spline basis with `count` functions on [0, 1].
class SplineBasis {
public:
    explicit SplineBasis(int count) : count_(count)
    {
        if (count < 4) throw ConfigurationError("spline basis: need >= 4 functions");
        const int inner = count - 4;
        for (int i = 0; i < 4; ++i) knots_.push_back(0.0);
        for (int i = 1; i <= inner; ++i) knots_.push_back(static_cast<double>(i) / (inner + 1));
        for (int i = 0; i < 4; ++i) knots_.push_back(1.0);
    }

    int size() const { return count_; }

    /// Values of every basis function at x in [0, 1].
    std::vector<double> eval(double x) const
    {
        x = std::clamp(x, 0.0, 1.0);
        const int m = static_cast<int>(knots_.size());
        std::vector<double> n(m - 1, 0.0);
        int span = count_ - 1;
        for (int i = 3; i < count_; ++i)
            if (x >= knots_[i] && x < knots_[i + 1]) {
                span = i;
                break;
            }
        n[span] = 1.0;
        for (int p = 1; p <= 3; ++p) {
            for (int i = 0; i + p + 1 < m; ++i) {
                double v = 0.0;
                const double d1 = knots_[i + p] - knots_[i];
                const double d2 = knots_[i + p + 1] - knots_[i + 1];
                if (d1 > 0.0) v += (x - knots_[i]) / d1 * n[i];
                if (d2 > 0.0) v += (knots_[i + p + 1] - x) / d2 * n[i + 1];
                n[i] = v;
            }
        }
        n.resize(count_);
        return n;
    }

private:
    int count_;
    std::vector<double> knots_;
};

/// Rest arm for reconstruction: a straight rod from `base`, split into
/// serial segments with independent strain bases.
struct ArmModel {
    std::vector<double> segment_lengths{0.18};
    Pose base = Pose{};
    Vec3 shear_stiffness = Vec3::Ones();  // N
    Vec3 bend_stiffness = Vec3::Ones();   // N m^2
    int coefficients = 8;                 // per strain mode and segment
    int steps = 48;                       // integration steps over the arm

    /// Stiffness of `count` parallel copies of a rod; base at the rod base.
    static ArmModel from_rod(const RodState& rod, int count = 1)
    {
        ArmModel m;
        double len = 0.0;
        for (double l : rod.rest_length) len += l;
        m.segment_lengths = {len};
        m.base = rod.base;
        m.shear_stiffness = count * rod.shear_stiffness;
        m.bend_stiffness = count * rod.bend_stiffness;
        return m;
    }

    double length() const
    {
        double l = 0.0;
        for (double s : segment_lengths) l += s;
        return l;
    }
};

struct SectionObservation {
    double s = 0.0;  // arclength of the section, m
    Pose pose;
};

struct ReconstructionWeights {
    double data = 1.0;
    double energy = 1e-3;
    double position_scale = 0.01;  // m per unit of position mismatch
};

struct SectionResidual {
    double s = 0.0;
    double position_error = 0.0;  // m
    double rotation_error = 0.0;  // rad
};

struct ReconstructionResult {
    StrainRecord strains;     // on the integration grid
    std::vector<Pose> posture;  // on the same grid
    std::vector<double> objective;  // accepted iterates, first is the start
    std::vector<SectionResidual> residuals;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
};

/// Strain coefficients u on spline bases, the observation set and the
/// weights of J(u) = data mismatch + elastic energy.
class ReconstructionProblem {
public:
    ReconstructionProblem(ArmModel model, std::vector<SectionObservation> data, ReconstructionWeights w)
        : model_(std::move(model)), data_(std::move(data)), w_(w), basis_(model_.coefficients)
    {
        if (data_.size() < 2) throw ConfigurationError("reconstruction: need at least 2 section poses");
        if (!(w_.data > 0.0 && w_.energy > 0.0 && w_.position_scale > 0.0))
            throw ConfigurationError("reconstruction: weights must be > 0");
        if (model_.segment_lengths.empty()) throw ConfigurationError("reconstruction: arm has no segments");
        for (double l : model_.segment_lengths)
            if (!(l > 0.0)) throw ConfigurationError("reconstruction: segment lengths must be > 0");
        const double total = model_.length();
        for (const auto& d : data_)
            if (!(d.s >= 0.0 && d.s <= total + 1e-12))
                throw ConfigurationError("reconstruction: section arclength outside the arm");
        // grid: each segment gets a share of the steps, at least 4
        double start = 0.0;
        grid_.push_back(0.0);
        for (std::size_t g = 0; g < model_.segment_lengths.size(); ++g) {
            const double len = model_.segment_lengths[g];
            const int n = std::max(4, static_cast<int>(std::lround(model_.steps * len / total)));
            for (int k = 1; k <= n; ++k) {
                grid_.push_back(start + len * k / n);
                segment_of_step_.push_back(static_cast<int>(g));
            }
            start += len;
        }
        grid_.back() = total;
        for (std::size_t k = 0; k + 1 < grid_.size(); ++k)
            mid_basis_.push_back(basis_at(segment_of_step_[k], 0.5 * (grid_[k] + grid_[k + 1])));
    }

    std::size_t n_variables() const { return model_.segment_lengths.size() * 6 * basis_.size(); }
    const std::vector<double>& grid() const { return grid_; }

    /// (nu, kappa) at arclength s from coefficients u.
    void strain_at(const Eigen::VectorXd& u, double s, Vec3& nu, Vec3& kappa) const
    {
        const int g = segment_at(s);
        eval(u, g, basis_at(g, s), nu, kappa);
    }

    /// Poses on the grid plus the observation residual vector and energy
    /// residuals, stacked so that J = |r|^2.
    Eigen::VectorXd residuals(const Eigen::VectorXd& u, std::vector<Pose>* posture = nullptr,
                              std::vector<SectionResidual>* report = nullptr) const
    {
        const std::size_t steps = grid_.size() - 1;
        Eigen::VectorXd r(6 * data_.size() + 6 * steps);
        std::vector<Pose> poses(grid_.size());
        poses[0] = model_.base;
        std::vector<Vec3> nu(steps), kappa(steps);
        for (std::size_t k = 0; k < steps; ++k) {
            eval(u, segment_of_step_[k], mid_basis_[k], nu[k], kappa[k]);
            poses[k + 1] = advance(poses[k], nu[k], kappa[k], grid_[k + 1] - grid_[k]);
        }
        const double wd = std::sqrt(w_.data);
        if (report) report->clear();
        for (std::size_t j = 0; j < data_.size(); ++j) {
            const double s = data_[j].s;
            std::size_t k = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), s) - grid_.begin());
            k = std::clamp<std::size_t>(k, 1, steps) - 1;
            Pose p = poses[k];
            if (s > grid_[k]) {
                Vec3 n, c;
                eval(u, segment_of_step_[k], basis_at(segment_of_step_[k], 0.5 * (grid_[k] + s)), n, c);
                p = advance(poses[k], n, c, s - grid_[k]);
            }
            const Vec3 dp = (p.position - data_[j].pose.position) / w_.position_scale;
            const Vec3 dr = so3::detail::log_unchecked(data_[j].pose.orientation * p.orientation.transpose());
            r.segment<3>(6 * j) = wd * dp;
            r.segment<3>(6 * j + 3) = wd * dr;
            if (report)
                report->push_back({s, (p.position - data_[j].pose.position).norm(), dr.norm()});
        }
        const std::size_t off = 6 * data_.size();
        for (std::size_t k = 0; k < steps; ++k) {
            const double h = grid_[k + 1] - grid_[k];
            const double we = std::sqrt(0.5 * w_.energy * h);
            r.segment<3>(off + 6 * k) = we * model_.shear_stiffness.cwiseSqrt().cwiseProduct(nu[k]);
            r.segment<3>(off + 6 * k + 3) = we * model_.bend_stiffness.cwiseSqrt().cwiseProduct(kappa[k]);
        }
        if (posture) *posture = std::move(poses);
        return r;
    }

    double objective(const Eigen::VectorXd& u) const { return residuals(u).squaredNorm(); }

    /// Central-difference Jacobian of the residual vector.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& u) const
    {
        const double h = 1e-6;
        Eigen::MatrixXd jac(6 * data_.size() + 6 * (grid_.size() - 1), u.size());
        Eigen::VectorXd x = u;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            x(i) = u(i) + h;
            const Eigen::VectorXd rp = residuals(x);
            x(i) = u(i) - h;
            const Eigen::VectorXd rm = residuals(x);
            x(i) = u(i);
            jac.col(i) = (rp - rm) / (2.0 * h);
        }
        return jac;
    }

private:
    int segment_at(double s) const
    {
        double start = 0.0;
        for (std::size_t g = 0; g < model_.segment_lengths.size(); ++g) {
            start += model_.segment_lengths[g];
            if (s < start) return static_cast<int>(g);
        }
        return static_cast<int>(model_.segment_lengths.size()) - 1;
    }

    std::vector<double> basis_at(int g, double s) const
    {
        double start = 0.0;
        for (int i = 0; i < g; ++i) start += model_.segment_lengths[i];
        return basis_.eval((s - start) / model_.segment_lengths[g]);
    }

    void eval(const Eigen::VectorXd& u, int g, const std::vector<double>& b, Vec3& nu, Vec3& kappa) const
    {
        const int m = basis_.size();
        double v[6] = {0, 0, 0, 0, 0, 0};
        for (int mode = 0; mode < 6; ++mode) {
            const Eigen::Index base = (static_cast<Eigen::Index>(g) * 6 + mode) * m;
            for (int c = 0; c < m; ++c) v[mode] += u(base + c) * b[c];
        }
        nu = Vec3(v[0], v[1], v[2]);
        kappa = Vec3(v[3], v[4], v[5]);
    }

    /// One midpoint step: rotate half-way, translate, rotate the rest.
    static Pose advance(const Pose& p, const Vec3& nu, const Vec3& kappa, double h)
    {
        const Mat3 half = so3::exp_map(-0.5 * h * kappa);
        const Mat3 q_mid = half * p.orientation;
        Pose out;
        out.position = p.position + h * (q_mid.transpose() * (nu + Vec3::UnitZ()));
        out.orientation = half * q_mid;
        return out;
    }

    ArmModel model_;
    std::vector<SectionObservation> data_;
    ReconstructionWeights w_;
    SplineBasis basis_;
    std::vector<double> grid_;
    std::vector<int> segment_of_step_;
    std::vector<std::vector<double>> mid_basis_;
};

struct ReconstructionOptions {
    ReconstructionWeights weights;
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;
};

/// Fits strains to the observed section poses by damped Gauss-Newton
/// descent: a step is kept only if it lowers J, otherwise the damping grows.
inline ReconstructionResult reconstruct_posture(const std::vector<SectionObservation>& data, const ArmModel& model,
                                                const ReconstructionOptions& opt = {})
{
    const ReconstructionProblem prob(model, data, opt.weights);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prob.n_variables()));
    Eigen::VectorXd r = prob.residuals(u);
    double cost = r.squaredNorm();
    ReconstructionResult res;
    res.objective.push_back(cost);
    double lambda = 1e-3;
    for (int it = 0; it < opt.max_iterations; ++it) {
        const Eigen::MatrixXd jac = prob.jacobian(u);
        const Eigen::VectorXd grad = 2.0 * jac.transpose() * r;
        res.gradient_norm = grad.norm();
        if (res.gradient_norm < opt.gradient_tolerance) {
            res.converged = true;
            break;
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;
        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-jtr);
            const Eigen::VectorXd trial = u + step;
            const Eigen::VectorXd rt = prob.residuals(trial);
            const double ct = rt.squaredNorm();
            if (std::isfinite(ct) && ct < cost) {
                u = trial;
                r = rt;
                cost = ct;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        res.iterations = it + 1;
        if (!accepted) break;  // no descent left in floating point; best iterate kept
        res.objective.push_back(cost);
    }

    prob.residuals(u, &res.posture, &res.residuals);
    const auto& grid = prob.grid();
    for (double s : grid) {
        Vec3 nu, kappa;
        prob.strain_at(u, std::min(s, grid.back() - 1e-12), nu, kappa);
        res.strains.s.push_back(s);
        res.strains.shear.push_back(nu);
        res.strains.curvature.push_back(kappa);
    }
    res.strains.tip = res.posture.back().position - res.posture.front().position;
    return res;
}

// Centerline averaging

/// Rigid offset of a rod's frame from the arm centerline frame:
/// rod-local = rotation * centerline-local, `offset` is the rod centre in
/// centerline-local coordinates.
struct SectionTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 offset = Vec3::Zero();
};

struct StrainSample {
    Vec3 shear = Vec3::Zero();  // nu, zero at rest
    Vec3 curvature = Vec3::Zero();
};

/// Linear part of the strain transport on twist coordinates
/// (kappa, nu + e3): kappa_i = R kappa, v_i = R v - R [offset]x kappa.
inline Eigen::Matrix<double, 6, 6> strain_adjoint(const SectionTransform& g)
{
    Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
    a.block<3, 3>(0, 0) = g.rotation;
    a.block<3, 3>(3, 0) = -g.rotation * so3::skew(g.offset);
    a.block<3, 3>(3, 3) = g.rotation;
    return a;
}

inline Eigen::Matrix<double, 6, 1> to_twist(const StrainSample& e)
{
    Eigen::Matrix<double, 6, 1> x;
    x << e.curvature, e.shear + Vec3::UnitZ();
    return x;
}

inline StrainSample from_twist(const Eigen::Matrix<double, 6, 1>& x)
{
    return {x.tail<3>() - Vec3::UnitZ(), x.head<3>()};
}

/// Strain of rod i implied by centerline strain e.
inline StrainSample transport_strain(const StrainSample& e, const SectionTransform& g)
{
    return from_twist(strain_adjoint(g) * to_twist(e));
}

struct CenterlineFit {
    StrainSample strain;
    bool pseudo_inverse = false;  // stacked transport was rank deficient
    double residual = 0.0;
};

/// (1/N) |stacked (e_i - Ad_i e)| for a candidate centerline strain.
inline double averaging_residual(const std::vector<StrainSample>& rods, const std::vector<SectionTransform>& g,
                                 const StrainSample& e)
{
    double sum = 0.0;
    const auto x = to_twist(e);
    for (std::size_t i = 0; i < rods.size(); ++i) sum += (to_twist(rods[i]) - strain_adjoint(g[i]) * x).squaredNorm();
    return std::sqrt(sum) / static_cast<double>(rods.size());
}

/// Least-squares centerline strain from the rod strains through the normal
/// equations; a rank-deficient system falls back to the minimum-norm
/// solution and is flagged.
inline CenterlineFit average_to_centerline(const std::vector<StrainSample>& rods,
                                           const std::vector<SectionTransform>& g)
{
    if (rods.empty()) throw ConfigurationError("average_to_centerline: no rods");
    if (rods.size() != g.size()) throw ConfigurationError("average_to_centerline: one transform per rod required");
    Eigen::Matrix<double, 6, 6> n = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < rods.size(); ++i) {
        if (!g[i].rotation.allFinite() || !g[i].offset.allFinite())
            throw DomainError("average_to_centerline: non-finite transform");
        const auto a = strain_adjoint(g[i]);
        n += a.transpose() * a;
        b += a.transpose() * to_twist(rods[i]);
    }
    CenterlineFit fit;
    Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix<double, 6, 6>> cod(n);
    cod.setThreshold(1e-12);
    fit.pseudo_inverse = cod.rank() < 6;
    fit.strain = from_twist(fit.pseudo_inverse ? Eigen::Matrix<double, 6, 1>(cod.solve(b))
                                               : Eigen::Matrix<double, 6, 1>(n.ldlt().solve(b)));
    fit.residual = averaging_residual(rods, g, fit.strain);
    return fit;
}

/// Pointwise averaging of rod records sampled on a common grid.
inline StrainRecord average_to_centerline(const std::vector<StrainRecord>& rods,
                                          const std::vector<SectionTransform>& g, bool* pseudo_inverse = nullptr)
{
    if (rods.empty()) throw ConfigurationError("average_to_centerline: no rods");
    for (const auto& r : rods) {
        r.validate();
        if (r.size() != rods[0].size()) throw ConfigurationError("average_to_centerline: records differ in size");
    }
    StrainRecord out;
    out.tip = rods[0].tip;
    bool flagged = false;
    for (std::size_t k = 0; k < rods[0].size(); ++k) {
        std::vector<StrainSample> samples;
        for (const auto& r : rods) samples.push_back({r.shear[k], r.curvature[k]});
        const CenterlineFit f = average_to_centerline(samples, g);
        flagged = flagged || f.pseudo_inverse;
        out.s.push_back(rods[0].s[k]);
        out.shear.push_back(f.strain.shear);
        out.curvature.push_back(f.strain.curvature);
    }
    if (pseudo_inverse) *pseudo_inverse = flagged;
    return out;
}

}  // namespace softarm
