#include "slelab/conformal_maps.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slelab {

namespace {

// Branch of sqrt((z - xi)^2 + 4 dt) that maps the upper half-plane into
// itself; on the real axis the sign follows Re(z - xi).
Complex forward_root(const SlitStep& s, Complex u)
{
    if (u.imag() == 0.0) {
        const double r = std::sqrt(u.real() * u.real() + 4.0 * s.dt);
        return {u.real() < 0.0 ? -r : r, 0.0};
    }
    Complex w = std::sqrt(u * u + 4.0 * s.dt);
    if (w.imag() < 0.0 || (w.imag() == 0.0 && u.real() < 0.0)) {
        w = -w;
    }
    return w;
}

void check_off_slit(const SlitStep& s, Complex z, Complex u, double tol)
{
    const double eps = tol * (1.0 + std::abs(z));
    if (std::abs(u.real()) <= eps && u.imag() > -eps && u.imag() < s.height() - eps) {
        std::ostringstream msg;
        msg << "point (" << z.real() << ", " << z.imag() << ") lies on the slit at xi=" << s.xi
            << " of height " << s.height();
        throw DomainError(msg.str());
    }
}

}  // namespace

double SlitStep::height() const { return 2.0 * std::sqrt(dt); }

MapComposition::MapComposition(std::vector<SlitStep> steps) : steps_(std::move(steps)) {}

StepSpan MapComposition::prefix(std::size_t n) const
{
    return {steps_.data(), std::min(n, steps_.size())};
}

MapComposition MapComposition::then(StepSpan next) const
{
    std::vector<SlitStep> all = steps_;
    all.insert(all.end(), next.begin(), next.end());
    return MapComposition(std::move(all));
}

void MapComposition::append(SlitStep step) { steps_.push_back(step); }

Complex apply_slit(const SlitStep& step, Complex z, double tol)
{
    const Complex u = z - step.xi;
    check_off_slit(step, z, u, tol);
    return step.xi + forward_root(step, u);
}

Jet3 slit_jet(const SlitStep& step, Complex z, double tol)
{
    const Complex u = z - step.xi;
    check_off_slit(step, z, u, tol);
    const Complex w = forward_root(step, u);
    if (w == Complex{0.0, 0.0}) {
        throw DomainError("slit jet requested at the slit tip");
    }
    const Complex w2 = w * w;
    const Complex w3 = w2 * w;
    Jet3 jet;
    jet.f = step.xi + w;
    jet.f1 = u / w;
    jet.f2 = 4.0 * step.dt / w3;
    jet.f3 = -12.0 * step.dt * u / (w3 * w2);
    return jet;
}

Complex invert_slit(const SlitStep& step, Complex w)
{
    const Complex v = w - step.xi;
    const double h2 = 4.0 * step.dt;
    if (v.imag() == 0.0) {
        const double a = v.real() * v.real() - h2;
        if (a >= 0.0) {
            const double r = std::sqrt(a);
            return {step.xi + (v.real() < 0.0 ? -r : r), 0.0};
        }
        return {step.xi, std::sqrt(-a)};
    }
    Complex s = std::sqrt(v * v - h2);
    if (s.imag() < 0.0 || (s.imag() == 0.0 && v.real() < 0.0)) {
        s = -s;
    }
    return step.xi + s;
}

Complex compose_apply(StepSpan steps, Complex z, double tol)
{
    for (const SlitStep& s : steps) {
        z = apply_slit(s, z, tol);
    }
    return z;
}

Jet3 chain(const Jet3& outer, const Jet3& inner)
{
    Jet3 out;
    out.f = outer.f;
    out.f1 = outer.f1 * inner.f1;
    out.f2 = outer.f2 * inner.f1 * inner.f1 + outer.f1 * inner.f2;
    out.f3 = outer.f3 * inner.f1 * inner.f1 * inner.f1 + 3.0 * outer.f2 * inner.f1 * inner.f2 +
             outer.f1 * inner.f3;
    return out;
}

Jet3 compose_jet(StepSpan steps, Complex z, double tol)
{
    Jet3 jet = Jet3::identity(z);
    for (const SlitStep& s : steps) {
        jet = chain(slit_jet(s, jet.f, tol), jet);
    }
    return jet;
}

Complex invert_apply(StepSpan steps, Complex w, double branch_tol)
{
    if (!(w.imag() >= -branch_tol)) {
        std::ostringstream msg;
        msg << "inverse map input (" << w.real() << ", " << w.imag()
            << ") is below the real axis";
        throw BranchError(msg.str());
    }
    if (w.imag() < 0.0) {
        w.imag(0.0);
    }
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        w = invert_slit(*it, w);
        if (!std::isfinite(w.real()) || !std::isfinite(w.imag()) || w.imag() < -branch_tol) {
            throw BranchError("inverse map left the closed upper half-plane");
        }
    }
    return w;
}

void apply_in_place(StepSpan steps, std::span<Complex> zs, double tol)
{
    for (const SlitStep& s : steps) {
        for (Complex& z : zs) {
            z = apply_slit(s, z, tol);
        }
    }
}

double hcap(StepSpan steps)
{
    double total = 0.0;
    for (const SlitStep& s : steps) {
        total += s.dt;
    }
    return 2.0 * total;
}

}  // namespace slelab
