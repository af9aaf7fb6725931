#include "slelab/loewner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace slelab {

namespace {

double cross(Complex a, Complex b) { return a.real() * b.imag() - a.imag() * b.real(); }

double point_segment_distance(Complex p, Complex a, Complex b)
{
    const Complex d = b - a;
    const double len2 = std::norm(d);
    double s = len2 > 0.0 ? ((p - a) * std::conj(d)).real() / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    return std::abs(p - (a + s * d));
}

// Parameter along p0 -> p1 where it crosses segment q0 -> q1, or +inf.
double segment_hit(Complex p0, Complex p1, Complex q0, Complex q1)
{
    const Complex r = p1 - p0;
    const Complex s = q1 - q0;
    const double denom = cross(r, s);
    if (denom == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double t = cross(q0 - p0, s) / denom;
    const double u = cross(q0 - p0, r) / denom;
    if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) {
        return std::numeric_limits<double>::infinity();
    }
    return t;
}

bool segments_cross(Complex a0, Complex a1, Complex b0, Complex b1)
{
    return std::isfinite(segment_hit(a0, a1, b0, b1));
}

// Closed polyline: consecutive vertices plus the closing edge.
template <class F>
void for_each_edge(const std::vector<Complex>& v, F&& f)
{
    for (std::size_t i = 0; i < v.size(); ++i) {
        f(v[i], v[(i + 1) % v.size()]);
    }
}

}  // namespace

void DrivingPath::validate() const
{
    if (times.empty() || times.size() != values.size()) {
        throw ParameterError("driving path needs matching, nonempty times and values");
    }
    if (times[0] != 0.0) {
        throw ParameterError("driving path must start at time 0");
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw ParameterError("driving path has a non-finite value");
        }
        if (i > 0 && !(times[i] > times[i - 1])) {
            throw ParameterError("driving path times must increase strictly");
        }
    }
}

DrivingPath DrivingPath::truncated(std::size_t n) const
{
    const std::size_t m = std::min(n + 1, times.size());
    return {{times.begin(), times.begin() + m}, {values.begin(), values.begin() + m}};
}

HullSpec::HullSpec(Polygon p) : shape_(std::move(p))
{
    const auto& v = polygon().vertices;
    if (v.size() < 3) {
        throw ParameterError("polygon hull needs at least three vertices");
    }
    if (v.front().imag() != 0.0 || v.back().imag() != 0.0) {
        throw ParameterError("polygon hull must start and end on the real axis");
    }
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        if (!(v[i].imag() > 0.0)) {
            throw ParameterError("polygon hull vertices must lie in the upper half-plane");
        }
    }
}

bool HullSpec::contains(Complex z) const
{
    if (z.imag() < 0.0) {
        return false;
    }
    if (is_half_disk()) {
        const auto& d = half_disk();
        return std::abs(z - d.center) <= d.radius;
    }
    const auto& v = polygon().vertices;
    bool inside = false;
    bool on_edge = false;
    for_each_edge(v, [&](Complex a, Complex b) {
        if (point_segment_distance(z, a, b) <= 1e-14 * (1.0 + std::abs(z))) {
            on_edge = true;
        }
        if ((a.imag() > z.imag()) != (b.imag() > z.imag())) {
            const double x = a.real() + (z.imag() - a.imag()) * (b.real() - a.real()) /
                                            (b.imag() - a.imag());
            if (z.real() < x) {
                inside = !inside;
            }
        }
    });
    return inside || on_edge;
}

double HullSpec::exit_fraction(Complex a, Complex b) const
{
    if (is_half_disk()) {
        const auto& h = half_disk();
        const Complex d = b - a;
        const Complex q = a - h.center;
        const double qa = std::norm(d);
        const double qb = 2.0 * (std::conj(d) * q).real();
        const double qc = std::norm(q) - h.radius * h.radius;
        if (qa == 0.0) {
            return 1.0;
        }
        const double disc = std::max(0.0, qb * qb - 4.0 * qa * qc);
        const double s = (-qb + std::sqrt(disc)) / (2.0 * qa);
        return std::clamp(s, 0.0, 1.0);
    }
    double best = 1.0;
    for_each_edge(polygon().vertices, [&](Complex p, Complex q) {
        best = std::min(best, segment_hit(a, b, p, q));
    });
    return best;
}

std::pair<double, double> HullSpec::footprint() const
{
    if (is_half_disk()) {
        const auto& d = half_disk();
        return {d.center - d.radius, d.center + d.radius};
    }
    const auto& v = polygon().vertices;
    return std::minmax(v.front().real(), v.back().real());
}

double HullSpec::hcap_upper_bound() const
{
    if (is_half_disk()) {
        return half_disk().radius * half_disk().radius;
    }
    const auto& v = polygon().vertices;
    double lo = v[0].real();
    double hi = v[0].real();
    for (const Complex& z : v) {
        lo = std::min(lo, z.real());
        hi = std::max(hi, z.real());
    }
    const double c = 0.5 * (lo + hi);
    double r = 0.0;
    for (const Complex& z : v) {
        r = std::max(r, std::abs(z - c));
    }
    return r * r;
}

std::vector<Complex> HullSpec::boundary(std::size_t arc_points) const
{
    if (!is_half_disk()) {
        return polygon().vertices;
    }
    const auto& d = half_disk();
    std::vector<Complex> out;
    out.reserve(arc_points + 1);
    for (std::size_t i = 0; i <= arc_points; ++i) {
        const double th = std::numbers::pi * static_cast<double>(i) / arc_points;
        out.push_back(d.center + std::polar(d.radius, th));
    }
    out.back().imag(0.0);
    return out;
}

HullSpec HullSpec::mirrored(double axis) const
{
    if (is_half_disk()) {
        return HalfDisk{2.0 * axis - half_disk().center, half_disk().radius};
    }
    Polygon p;
    const auto& v = polygon().vertices;
    for (auto it = v.rbegin(); it != v.rend(); ++it) {
        p.vertices.emplace_back(2.0 * axis - it->real(), it->imag());
    }
    return p;
}

MapComposition evolve(const DrivingPath& path)
{
    path.validate();
    std::vector<SlitStep> steps;
    steps.reserve(path.steps());
    for (std::size_t i = 0; i + 1 < path.times.size(); ++i) {
        steps.push_back({path.values[i], path.times[i + 1] - path.times[i]});
    }
    return MapComposition(std::move(steps));
}

Trace trace(const DrivingPath& path, const MapComposition& comp)
{
    Trace tr;
    tr.times = path.times;
    tr.points.resize(path.size());
    if (path.size() == 0) {
        return tr;
    }
    tr.points[0] = {path.values[0], 0.0};
    for (std::size_t k = 1; k < path.size(); ++k) {
        tr.points[k] = invert_apply(comp.prefix(k), {path.values[k - 1], 0.0});
    }
    return tr;
}

Trace trace(const DrivingPath& path) { return trace(path, evolve(path)); }

Unzipped extract_driving(std::span<const Complex> points)
{
    Unzipped out;
    if (points.empty()) {
        return out;
    }
    const std::size_t m = points.size();
    std::vector<SlitStep> steps;
    steps.reserve(m - 1);
    out.path.times.assign(1, 0.0);
    out.path.values.reserve(m);
    for (std::size_t k = 1; k < m; ++k) {
        if (points[k].imag() < 0.0) {
            throw ZipperError("zipper: input point below the real axis");
        }
        Complex w;
        try {
            w = compose_apply(steps, points[k]);
        } catch (const DomainError& e) {
            throw ZipperError(std::string("zipper: ") + e.what());
        }
        if (!(w.imag() > 0.0)) {
            std::ostringstream msg;
            msg << "zipper: point " << k << " maps to Im(w) = " << w.imag();
            throw ZipperError(msg.str());
        }
        const SlitStep s{w.real(), 0.25 * w.imag() * w.imag()};
        steps.push_back(s);
        out.path.values.push_back(s.xi);
        out.path.times.push_back(out.path.times.back() + s.dt);
    }
    out.path.values.push_back(m > 1 ? out.path.values.back() : points[0].real());
    out.comp = MapComposition(std::move(steps));
    return out;
}

ExitTime exit_time(const Trace& tr, const HullSpec& hull)
{
    ExitTime out;
    for (std::size_t k = 0; k < tr.points.size(); ++k) {
        if (hull.contains(tr.points[k])) {
            continue;
        }
        out.index = k;
        out.exited = true;
        if (k == 0) {
            out.time = tr.times[0];
        } else {
            const double s = hull.exit_fraction(tr.points[k - 1], tr.points[k]);
            out.time = tr.times[k - 1] + s * (tr.times[k] - tr.times[k - 1]);
        }
        return out;
    }
    if (!tr.points.empty()) {
        out.index = tr.points.size() - 1;
        out.time = tr.times.back();
    }
    return out;
}

Trace trace_until_exit(const DrivingPath& path, const MapComposition& comp, const HullSpec& hull,
                       ExitTime& exit, const std::function<Complex(Complex)>& pullback)
{
    Trace tr;
    exit = ExitTime{};
    for (std::size_t k = 0; k < path.size(); ++k) {
        Complex z = k == 0 ? Complex{path.values[0], 0.0}
                           : invert_apply(comp.prefix(k), {path.values[k - 1], 0.0});
        if (pullback) {
            z = pullback(z);
        }
        tr.times.push_back(path.times[k]);
        tr.points.push_back(z);
        if (!hull.contains(z)) {
            exit = exit_time(tr, hull);
            return tr;
        }
    }
    exit = exit_time(tr, hull);
    return tr;
}

void validate_hull_pair(const HullSpec& h1, const HullSpec& h2, double x1, double x2,
                        double sep_min)
{
    if (!(x1 < x2)) {
        throw ParameterError("hull pair requires x1 < x2");
    }
    if (sep_min < 0.0) {
        sep_min = 0.05 * (x2 - x1);
    }
    const auto [a1, b1] = h1.footprint();
    const auto [a2, b2] = h2.footprint();
    if (!(a1 < x1 && x1 < b1) || !(a2 < x2 && x2 < b2)) {
        throw ParameterError("each hull must contain its base point in the interior of its footprint");
    }
    if (!(b1 < a2)) {
        throw ParameterError("hull footprints overlap or are out of order");
    }
    double dist = 0.0;
    if (h1.is_half_disk() && h2.is_half_disk()) {
        dist = std::abs(h2.half_disk().center - h1.half_disk().center) - h1.half_disk().radius -
               h2.half_disk().radius;
    } else {
        const auto v1 = h1.boundary();
        const auto v2 = h2.boundary();
        dist = std::numeric_limits<double>::infinity();
        for_each_edge(v1, [&](Complex p, Complex q) {
            for_each_edge(v2, [&](Complex r, Complex s) {
                if (segments_cross(p, q, r, s)) {
                    dist = 0.0;
                }
                dist = std::min({dist, point_segment_distance(p, r, s),
                                 point_segment_distance(r, p, q)});
            });
        });
    }
    if (dist < sep_min) {
        std::ostringstream msg;
        msg << "hull closures are " << dist << " apart, below sep_min " << sep_min;
        throw ParameterError(msg.str());
    }
}

}  // namespace slelab
