#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "slelab/errors.hpp"

namespace slelab {

using Complex = std::complex<double>;

/// Proximity tolerance for slit domain checks; scaled by (1 + |z|).
inline constexpr double kSlitTolerance = 1e-9;

/// Constant-driving Loewner step over a duration `dt`:
///   g(z) = xi + sqrt((z - xi)^2 + 4 dt).
/// It removes the vertical slit [xi, xi + 2i sqrt(dt)] and adds 2 dt to the
/// half-plane capacity.
struct SlitStep {
    double xi = 0.0;
    double dt = 0.0;

    double height() const;
};

/// Value and first three derivatives of a map at a point.
struct Jet3 {
    Complex f{0.0, 0.0};
    Complex f1{1.0, 0.0};
    Complex f2{0.0, 0.0};
    Complex f3{0.0, 0.0};

    static Jet3 identity(Complex z) { return {z, 1.0, 0.0, 0.0}; }
};

using StepSpan = std::span<const SlitStep>;

/// Ordered slit steps, applied first to last: phi = g_n o ... o g_1.
class MapComposition {
public:
    MapComposition() = default;
    explicit MapComposition(std::vector<SlitStep> steps);

    const std::vector<SlitStep>& steps() const { return steps_; }
    std::size_t size() const { return steps_.size(); }
    bool empty() const { return steps_.empty(); }

    /// The first `n` steps (clamped to size()).
    StepSpan prefix(std::size_t n) const;

    operator StepSpan() const { return {steps_.data(), steps_.size()}; }

    /// This composition followed by `next`.
    MapComposition then(StepSpan next) const;

    void append(SlitStep step);

private:
    std::vector<SlitStep> steps_;
};

Complex apply_slit(const SlitStep& step, Complex z, double tol = kSlitTolerance);
Jet3 slit_jet(const SlitStep& step, Complex z, double tol = kSlitTolerance);
Complex invert_slit(const SlitStep& step, Complex w);

Complex compose_apply(StepSpan steps, Complex z, double tol = kSlitTolerance);
Jet3 compose_jet(StepSpan steps, Complex z, double tol = kSlitTolerance);

/// Right inverse of compose_apply: inverse elementary maps in reverse order.
/// `branch_tol` bounds how far below the real axis an input or intermediate
/// value may sit before a BranchError is raised.
Complex invert_apply(StepSpan steps, Complex w, double branch_tol = 1e-9);

/// Applies `steps` to every point of `zs` in place.
void apply_in_place(StepSpan steps, std::span<Complex> zs, double tol = kSlitTolerance);

/// Half-plane capacity of the hull removed by `steps`: 2 * sum(dt).
double hcap(StepSpan steps);

/// Chain rule to third order: jet of (outer o inner) given the jet of the
/// inner map and the jet of the outer map at inner.f.
Jet3 chain(const Jet3& outer, const Jet3& inner);

}  // namespace slelab
