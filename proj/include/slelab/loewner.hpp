#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "slelab/conformal_maps.hpp"

namespace slelab {

// Piecewise-constant driving: values[i] holds on [times[i], times[i+1]).
struct DrivingPath {
    std::vector<double> times;
    std::vector<double> values;

    std::size_t size() const { return times.size(); }
    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double final_time() const { return times.empty() ? 0.0 : times.back(); }

    // Throws ParameterError on a malformed grid.
    void validate() const;
    // First n steps (n + 1 grid points).
    DrivingPath truncated(std::size_t n) const;
};

struct Trace {
    std::vector<double> times;
    std::vector<Complex> points;

    std::size_t size() const { return points.size(); }
};

struct HalfDisk {
    double center = 0.0;
    double radius = 0.0;
};

// Closed region attached to the real axis. The first and last vertices sit
// on the real axis; the closing edge runs along it.
struct Polygon {
    std::vector<Complex> vertices;
};

class HullSpec {
public:
    HullSpec() = default;
    HullSpec(HalfDisk d) : shape_(d) {}
    HullSpec(Polygon p);

    bool is_half_disk() const { return std::holds_alternative<HalfDisk>(shape_); }
    const HalfDisk& half_disk() const { return std::get<HalfDisk>(shape_); }
    const Polygon& polygon() const { return std::get<Polygon>(shape_); }

    // Closed hull membership for points in the closed upper half-plane.
    bool contains(Complex z) const;
    // Parameter s in (0, 1] where the segment a -> b first leaves the hull
    // (a inside, b outside). Falls back to 1.
    double exit_fraction(Complex a, Complex b) const;
    // Real footprint [lo, hi].
    std::pair<double, double> footprint() const;
    // hcap of an enclosing half-disk; hcap is monotone so this bounds hcap(H).
    double hcap_upper_bound() const;
    // Boundary as a polyline (half-disks are sampled with `arc_points`).
    std::vector<Complex> boundary(std::size_t arc_points = 256) const;
    // Reflection across Re z = axis.
    HullSpec mirrored(double axis) const;

private:
    std::variant<HalfDisk, Polygon> shape_;
};

MapComposition evolve(const DrivingPath& path);

// points[0] = values[0]; points[k] is the tip of the hull after k steps,
// i.e. the preimage of values[k - 1] under the first k steps.
Trace trace(const DrivingPath& path);
Trace trace(const DrivingPath& path, const MapComposition& comp);

struct Unzipped {
    DrivingPath path;
    MapComposition comp;
};

Unzipped extract_driving(std::span<const Complex> points);

struct ExitTime {
    double time = 0.0;
    std::size_t index = 0;  // first grid index outside the hull
    bool exited = false;
};

ExitTime exit_time(const Trace& tr, const HullSpec& hull);

// Builds trace points one at a time and stops at the first one outside
// `hull`; the returned trace ends at that point. `pullback`, when set, maps
// each point before the hull test and before it is stored.
Trace trace_until_exit(const DrivingPath& path, const MapComposition& comp, const HullSpec& hull,
                       ExitTime& exit, const std::function<Complex(Complex)>& pullback = {});

// Throws ParameterError unless each hull contains its base point and the
// closures are at least sep_min apart. sep_min < 0 selects 0.05 |x2 - x1|.
void validate_hull_pair(const HullSpec& h1, const HullSpec& h2, double x1, double x2,
                        double sep_min = -1.0);

}  // namespace slelab
