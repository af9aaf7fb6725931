#include "slelab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slelab {

namespace {

double relative_gap(double lhs, double rhs)
{
    const double scale = std::max(std::abs(lhs), std::abs(rhs));
    if (scale < 1e-14) {
        return 0.0;
    }
    return std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-14);
}

std::size_t side_index(int j, std::size_t i1, std::size_t i2) { return j == 0 ? i1 : i2; }

double trapezoid(const std::vector<std::size_t>& nodes, const std::vector<double>& f, double dt)
{
    double sum = 0.0;
    for (std::size_t a = 1; a < nodes.size(); ++a) {
        sum += 0.5 * (f[a] + f[a - 1]) * static_cast<double>(nodes[a] - nodes[a - 1]) * dt;
    }
    return sum;
}

}  // namespace

double EnsemblePair::tip_driving(int j, std::size_t i) const
{
    return i == 0 ? xi[j].values[0] : xi[j].values[i - 1];
}

EnsemblePair make_ensemble_pair(const PairDriver& driver, std::size_t n1, std::size_t n2)
{
    EnsemblePair pair;
    pair.kappa = driver.kappa;
    pair.x1 = driver.x1;
    pair.x2 = driver.x2;
    pair.dt = driver.dt;
    const std::size_t n[2] = {n1, n2};
    for (int j = 0; j < 2; ++j) {
        const SideDriver& s = driver.side[j];
        const std::size_t m = std::min(n[j], s.xi.steps());
        pair.xi[j] = s.xi.truncated(m);
        pair.p_driver[j].assign(s.p.begin(), s.p.begin() + static_cast<std::ptrdiff_t>(m + 1));
        pair.comp[j] = evolve(pair.xi[j]);
        pair.trace[j] = trace(pair.xi[j], pair.comp[j]);
    }
    return pair;
}

Unzipped remainder_from(StepSpan comp_j, std::span<const Complex> trace_k)
{
    std::vector<Complex> image(trace_k.begin(), trace_k.end());
    apply_in_place(comp_j, image);
    if (!image.empty()) {
        image[0].imag(0.0);
    }
    return extract_driving(image);
}

Unzipped remainder_map(const EnsemblePair& pair, int j, std::size_t ij, std::size_t ik)
{
    const int k = 1 - j;
    const auto& pts = pair.trace[k].points;
    ik = std::min(ik, pts.size() - 1);
    return remainder_from(pair.comp[j].prefix(ij), std::span<const Complex>(pts.data(), ik + 1));
}

AValues compute_A(const EnsemblePair& pair, std::size_t i1, std::size_t i2)
{
    AValues A;
    for (int j = 0; j < 2; ++j) {
        const std::size_t ij = side_index(j, i1, i2);
        const std::size_t ik = side_index(1 - j, i1, i2);
        const Unzipped r = remainder_map(pair, j, ij, ik);
        const Jet3 jet = compose_jet(r.comp, pair.tip_driving(j, ij));
        A.a[j] = {jet.f.real(), jet.f1.real(), jet.f2.real(), jet.f3.real()};
    }
    for (int j = 0; j < 2; ++j) {
        for (double v : A.a[j]) {
            if (!std::isfinite(v)) {
                throw InvariantError("non-finite A value");
            }
        }
        if (!(A.a[j][1] > 0.0)) {
            throw InvariantError("A_{j,1} must be positive");
        }
    }
    if (!(A.a[0][0] < A.a[1][0])) {
        std::ostringstream msg;
        msg << "A_{1,0} = " << A.a[0][0] << " is not left of A_{2,0} = " << A.a[1][0];
        throw InvariantError(msg.str());
    }
    return A;
}

double compute_N(const AValues& A)
{
    const double E = A.E();
    return A.a[0][1] * A.a[1][1] / (E * E);
}

double axis_N(const EnsemblePair& pair, int j, std::size_t i)
{
    const int k = 1 - j;
    const Jet3 jet = compose_jet(pair.comp[j].prefix(i), pair.start(k));
    const double gap = jet.f.real() - pair.tip_driving(j, i);
    return jet.f1.real() / (gap * gap);
}

std::vector<std::size_t> lattice(std::size_t n, std::size_t cells)
{
    std::vector<std::size_t> nodes;
    if (n == 0) {
        nodes.push_back(0);
        return nodes;
    }
    cells = std::max<std::size_t>(cells, 1);
    const std::size_t stride = (n + cells - 1) / cells;
    for (std::size_t s = 0; s < n; s += stride) {
        nodes.push_back(s);
    }
    nodes.push_back(n);
    return nodes;
}

MartingaleField::MartingaleField(const EnsemblePair& pair, MartingaleOptions opt)
    : pair_(&pair), opt_(opt)
{
    eps_E_ = opt_.eps_E < 0.0 ? 1e-3 * (pair.x2 - pair.x1) : opt_.eps_E;
    for (int j = 0; j < 2; ++j) {
        axis_N_[j].assign(pair.steps(j) + 1, 0.0);
    }
}

double MartingaleField::axis(int j, std::size_t i)
{
    double& slot = axis_N_[j][i];
    if (slot == 0.0) {
        slot = axis_N(*pair_, j, i);
    }
    return slot;
}

double MartingaleField::integrand(std::size_t s1, std::size_t i2)
{
    const auto key = std::make_pair(s1, i2);
    if (auto it = f_cache_.find(key); it != f_cache_.end()) {
        return it->second;
    }
    double f = 0.0;
    if (i2 > 0) {
        const AValues A = compute_A(*pair_, s1, i2);
        const auto& C = A.a[0];
        const double q = C[2] / C[1];
        f = 0.25 * q * q - C[3] / (6.0 * C[1]);
    }
    f_cache_.emplace(key, f);
    return f;
}

double MartingaleField::integral_I(std::size_t i1, std::size_t i2, double* coarse)
{
    if (i1 == 0 || i2 == 0) {
        if (coarse) {
            *coarse = 0.0;
        }
        return 0.0;
    }
    const auto nodes = lattice(i1, opt_.n_sub);

    // Side-1 images of trace 2 are carried along s1 so each node costs one
    // zip; jets only need side 1, so the A_2 half of compute_A is skipped.
    const auto& pts = pair_->trace[1].points;
    std::vector<Complex> image(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(i2 + 1));
    std::size_t applied = 0;
    std::vector<double> f(nodes.size());
    for (std::size_t a = 0; a < nodes.size(); ++a) {
        const std::size_t s = nodes[a];
        const auto key = std::make_pair(s, i2);
        if (auto it = f_cache_.find(key); it != f_cache_.end()) {
            f[a] = it->second;
            continue;
        }
        const auto& steps = pair_->comp[0].steps();
        apply_in_place(StepSpan(steps.data() + applied, s - applied), image);
        applied = s;
        image[0].imag(0.0);
        const Unzipped r = extract_driving(image);
        const Jet3 jet = compose_jet(r.comp, pair_->tip_driving(0, s));
        const double c1 = jet.f1.real();
        if (!(c1 > 0.0) || !std::isfinite(c1)) {
            throw InvariantError("A_{1,1} must be positive");
        }
        const double q = jet.f2.real() / c1;
        f[a] = 0.25 * q * q - jet.f3.real() / (6.0 * c1);
        f_cache_.emplace(key, f[a]);
    }
    const double dt = pair_->dt;
    const double fine = trapezoid(nodes, f, dt);
    if (coarse) {
        *coarse = fine;
    }
    if (coarse && nodes.size() > 3) {
        std::vector<std::size_t> cn;
        std::vector<double> cf;
        for (std::size_t a = 0; a < nodes.size(); a += 2) {
            cn.push_back(nodes[a]);
            cf.push_back(f[a]);
        }
        if (cn.back() != nodes.back()) {
            cn.push_back(nodes.back());
            cf.push_back(f.back());
        }
        *coarse = trapezoid(cn, cf, dt);
    }
    return fine;
}

double MartingaleField::integral_I_2d(std::size_t i1, std::size_t i2, std::size_t m)
{
    if (i1 == 0 || i2 == 0) {
        return 0.0;
    }
    const auto n1 = lattice(i1, m);
    const auto n2 = lattice(i2, m);
    std::vector<double> inner(n1.size());
    for (std::size_t a = 0; a < n1.size(); ++a) {
        std::vector<double> g(n2.size());
        for (std::size_t b = 0; b < n2.size(); ++b) {
            double N = 0.0;
            if (n1[a] == 0) {
                N = axis(1, n2[b]);
            } else if (n2[b] == 0) {
                N = axis(0, n1[a]);
            } else {
                N = compute_N(compute_A(*pair_, n1[a], n2[b]));
            }
            g[b] = 2.0 * N * N;
        }
        inner[a] = trapezoid(n2, g, pair_->dt);
    }
    return trapezoid(n1, inner, pair_->dt);
}

MartingaleRecord MartingaleField::record(std::size_t i1, std::size_t i2)
{
    const EnsemblePair& pr = *pair_;
    MartingaleRecord r;
    r.i1 = i1;
    r.i2 = i2;
    r.t1 = pr.time(i1);
    r.t2 = pr.time(i2);
    r.alpha = alpha_of(pr.kappa);
    r.lambda = lambda_of(pr.kappa);
    r.A = compute_A(pr, i1, i2);
    r.E = r.A.E();
    r.N = compute_N(r.A);
    if (r.E < eps_E_) {
        r.valid = false;
    }
    if (i1 == 0 || i2 == 0) {
        r.M = 1.0;
        return r;
    }
    double coarse = 0.0;
    r.I = integral_I(i1, i2, &coarse);
    // Flag grids where halving the s1 resolution moves log M noticeably.
    r.quadrature_warning = std::abs(r.lambda * (r.I - coarse)) > 1e-3;
    const double d = pr.x2 - pr.x1;
    const double n00 = 1.0 / (d * d);
    const double ratio = r.N * n00 / (axis(0, i1) * axis(1, i2));
    r.M = std::pow(ratio, r.alpha) * std::exp(-r.lambda * r.I);
    if (!(r.M > 0.0) || !std::isfinite(r.M)) {
        r.valid = false;
    }
    return r;
}

double MartingaleField::M(std::size_t i1, std::size_t i2)
{
    if (i1 == 0 || i2 == 0) {
        return 1.0;
    }
    const auto key = std::make_pair(i1, i2);
    if (auto it = m_cache_.find(key); it != m_cache_.end()) {
        return it->second;
    }
    const MartingaleRecord r = record(i1, i2);
    if (!r.valid) {
        std::ostringstream msg;
        msg << "invalid martingale record at (" << i1 << ", " << i2 << "), E = " << r.E;
        throw InvariantError(msg.str());
    }
    m_cache_.emplace(key, r.M);
    return r.M;
}

MartingaleRecord compute_M(const EnsemblePair& pair, std::size_t i1, std::size_t i2,
                           MartingaleOptions opt)
{
    MartingaleField field(pair, opt);
    return field.record(i1, i2);
}

LemmaResidual lemma_check(const EnsemblePair& pair, int j, std::size_t i1, std::size_t i2,
                              double delta_t)
{
    if (!(delta_t > 0.0)) {
        throw ParameterError("delta_t must be positive");
    }
    const int k = 1 - j;
    const std::size_t ij = side_index(j, i1, i2);
    const std::size_t ik = side_index(k, i1, i2);
    const double w = pair.tip_driving(j, ij);
    const auto& pts = pair.trace[k].points;
    const std::span<const Complex> curve(pts.data(), std::min(ik, pts.size() - 1) + 1);

    const Unzipped now = remainder_from(pair.comp[j].prefix(ij), curve);
    const MapComposition advanced =
        MapComposition(std::vector<SlitStep>(pair.comp[j].prefix(ij).begin(),
                                             pair.comp[j].prefix(ij).end()))
            .then(std::vector<SlitStep>{{w, delta_t}});
    const Unzipped later = remainder_from(advanced, curve);

    const Jet3 a = compose_jet(now.comp, w);
    const Jet3 b = compose_jet(later.comp, w);
    const double A1 = a.f1.real();
    const double A2 = a.f2.real();
    const double A3 = a.f3.real();

    LemmaResidual out;
    out.lhs_value = (b.f.real() - a.f.real()) / delta_t;
    out.rhs_value = -3.0 * A2;
    out.lhs_log = (std::log(b.f1.real()) - std::log(A1)) / delta_t;
    out.rhs_log = 0.5 * (A2 / A1) * (A2 / A1) - (4.0 / 3.0) * A3 / A1;
    out.residual_value = relative_gap(out.lhs_value, out.rhs_value);
    out.residual_log = relative_gap(out.lhs_log, out.rhs_log);
    return out;
}

double commutation_residual(const EnsemblePair& pair, std::size_t i1, std::size_t i2, Complex z)
{
    const Unzipped r1 = remainder_map(pair, 0, i1, i2);
    const Unzipped r2 = remainder_map(pair, 1, i2, i1);
    const Complex lhs = compose_apply(r1.comp, compose_apply(pair.comp[0].prefix(i1), z));
    const Complex rhs = compose_apply(r2.comp, compose_apply(pair.comp[1].prefix(i2), z));
    return std::abs(lhs - rhs);
}

TimeChangedChain time_changed_chain(const EnsemblePair& pair, int j, std::size_t ij,
                                    std::size_t ik)
{
    const int k = 1 - j;
    const Unzipped r = remainder_map(pair, k, ik, ij);
    TimeChangedChain out;
    out.v = r.path.times;
    out.eta.resize(r.path.size());
    for (std::size_t i = 0; i < r.path.size(); ++i) {
        out.eta[i] = i == 0 ? r.path.values[0] : r.path.values[i - 1];
    }
    return out;
}

}  // namespace slelab
