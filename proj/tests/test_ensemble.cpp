#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "slelab/ensemble.hpp"

using namespace slelab;

namespace {

constexpr double kDt = 1e-4;

EnsemblePair standard_pair(std::uint64_t stream, std::size_t n = 100, double kappa = 3.0,
                           bool zero_noise = false, double dt = kDt)
{
    SdeOptions opt;
    opt.zero_noise = zero_noise;
    const PairDriver d = build_pair_driver(kappa, 0.0, 1.0, dt, n + 2, {17, stream}, opt);
    return make_ensemble_pair(d, n, n);
}

// Jet of a map that is real on the real axis, from the Cauchy integral over
// the upper half circle and its reflection.
std::array<double, 4> cauchy_real_jet(const std::function<Complex(Complex)>& f, double x, double r)
{
    const int n = 64;
    Complex d[4] = {};
    for (int k = 0; k < n; ++k) {
        const double th = 2.0 * std::numbers::pi * (k + 0.5) / n;
        const Complex e = std::polar(1.0, th);
        const Complex z = x + r * e;
        const Complex v = z.imag() >= 0.0 ? f(z) : std::conj(f(std::conj(z)));
        for (int h = 0; h <= 3; ++h) {
            d[h] += v * std::pow(e, -h);
        }
    }
    return {(d[0] / double(n)).real(), (d[1] / (n * r)).real(), (2.0 * d[2] / (n * r * r)).real(),
            (6.0 * d[3] / (n * r * r * r)).real()};
}

}  // namespace

TEST(Remainder, EmptyOtherSideIsIdentity)
{
    const EnsemblePair pair = standard_pair(0);
    for (int j = 0; j < 2; ++j) {
        const Unzipped r = remainder_map(pair, j, 100, 0);
        EXPECT_TRUE(r.comp.empty());
        const double w = pair.tip_driving(j, 100);
        const Jet3 jet = compose_jet(r.comp, w);
        EXPECT_EQ(jet.f.real(), w);
        EXPECT_EQ(jet.f1.real(), 1.0);
        EXPECT_EQ(jet.f2.real(), 0.0);
        EXPECT_EQ(jet.f3.real(), 0.0);
    }
}

TEST(Remainder, EmptyOwnSideReproducesOtherChain)
{
    const EnsemblePair pair = standard_pair(1);
    for (int j = 0; j < 2; ++j) {
        const int k = 1 - j;
        const Unzipped r = remainder_map(pair, j, 0, 100);
        const Complex a = compose_apply(r.comp, pair.start(j));
        const Complex b = compose_apply(pair.comp[k], pair.start(j));
        EXPECT_NEAR(a.real(), b.real(), 1e-10);
    }
}

TEST(Remainder, CommutationAtOffHullPoints)
{
    const EnsemblePair pair = standard_pair(2);
    const Complex zs[] = {{0.5, 0.5}, {0.5, 2.0}, {-1.0, 0.3}, {2.0, 0.3}, {0.5, 0.1}};
    for (const Complex& z : zs) {
        EXPECT_LE(commutation_residual(pair, 100, 100, z), 1e-3) << z;
    }
}

TEST(AValues, AxisValues)
{
    const EnsemblePair pair = standard_pair(3);
    const AValues a0 = compute_A(pair, 0, 0);
    EXPECT_DOUBLE_EQ(a0.E(), 1.0);
    EXPECT_EQ(a0.a[0][1], 1.0);
    EXPECT_EQ(a0.a[1][1], 1.0);
    EXPECT_DOUBLE_EQ(compute_N(a0), 1.0);
    const AValues a = compute_A(pair, 60, 0);
    EXPECT_EQ(a.a[0][0], pair.tip_driving(0, 60));
    EXPECT_EQ(a.a[0][1], 1.0);
    EXPECT_EQ(a.a[0][2], 0.0);
    EXPECT_EQ(a.a[0][3], 0.0);
}

TEST(AValues, JetsMatchFiniteDifferencesAndCauchyIntegrals)
{
    for (std::uint64_t s : {4u, 5u, 6u}) {
        const EnsemblePair pair = standard_pair(s);
        for (auto [i1, i2] : {std::pair<std::size_t, std::size_t>{100, 100}, {40, 90}, {100, 25}}) {
            const AValues A = compute_A(pair, i1, i2);
            for (int j = 0; j < 2; ++j) {
                const Unzipped r = remainder_map(pair, j, j == 0 ? i1 : i2, j == 0 ? i2 : i1);
                auto f = [&](Complex z) { return compose_apply(r.comp, z); };
                const double x = pair.tip_driving(j, j == 0 ? i1 : i2);
                const double d = 1e-4 * A.E();
                const double fp = f(x + d).real(), f0 = f(x).real(), fm = f(x - d).real();
                EXPECT_LE(std::abs((fp - fm) / (2 * d) - A.a[j][1]) / A.a[j][1], 1e-4);
                EXPECT_LE(std::abs((fp - 2 * f0 + fm) / (d * d) - A.a[j][2]),
                          1e-4 * std::abs(A.a[j][2]) + 1e-6);
                const auto c = cauchy_real_jet(f, x, 0.1 * A.E());
                for (int h = 0; h < 4; ++h) {
                    EXPECT_LE(std::abs(c[h] - A.a[j][h]), 1e-4 * std::abs(A.a[j][h]) + 1e-8)
                        << "s=" << s << " j=" << j << " h=" << h;
                }
            }
        }
    }
}

TEST(AValues, MappedDrivingMatchesFirstComponent)
{
    const EnsemblePair pair = standard_pair(7);
    const AValues A = compute_A(pair, 100, 100);
    for (int j = 0; j < 2; ++j) {
        const TimeChangedChain c = time_changed_chain(pair, j, 100, 100);
        EXPECT_LE(std::abs(c.eta.back() - A.a[j][0]), 1e-3) << j;
    }
}

TEST(AValues, SpeedFactorMatchesSquaredDerivative)
{
    const EnsemblePair pair = standard_pair(8, 200);
    const std::size_t ik = 200;
    for (int j = 0; j < 2; ++j) {
        const TimeChangedChain c = time_changed_chain(pair, j, 200, ik);
        for (std::size_t i = 20; i <= 180; i += 40) {
            const std::size_t m = 10;
            const double dv = (c.v[i + m] - c.v[i - m]) / (2.0 * m * kDt);
            const double a1 = j == 0 ? compute_A(pair, i, ik).a[0][1] : compute_A(pair, ik, i).a[1][1];
            EXPECT_LE(std::abs(dv - a1 * a1) / (a1 * a1), 0.05) << j << " " << i;
        }
    }
}

TEST(NValues, AxisFormulaMatchesDriverForcePoint)
{
    const EnsemblePair pair = standard_pair(9);
    for (std::size_t i : {10u, 50u, 100u}) {
        const double n = axis_N(pair, 0, i);
        const Jet3 jet = compose_jet(pair.comp[0].prefix(i), pair.x2);
        const double p = pair.p_driver[0][i];
        const double xi = pair.tip_driving(0, i);
        const double from_driver = jet.f1.real() / ((p - xi) * (p - xi));
        EXPECT_LE(std::abs(n - from_driver) / n, 1e-3);
    }
}

TEST(NValues, PositiveOnSampledGrids)
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const EnsemblePair pair = standard_pair(100 + s);
        for (std::size_t i1 : lattice(100, 4)) {
            for (std::size_t i2 : lattice(100, 4)) {
                EXPECT_GT(compute_N(compute_A(pair, i1, i2)), 0.0);
            }
        }
    }
}

TEST(Integral, ZeroTimeEdges)
{
    const EnsemblePair pair = standard_pair(10);
    MartingaleField field(pair);
    EXPECT_EQ(field.integral_I(0, 100), 0.0);
    EXPECT_EQ(field.integral_I(100, 0), 0.0);
    EXPECT_EQ(field.integrand(50, 0), 0.0);
}

TEST(Integral, ClosedFormRouteMatchesTwoDimensionalQuadrature)
{
    for (std::uint64_t s : {11u, 12u}) {
        const EnsemblePair pair = standard_pair(s);
        MartingaleField field(pair);
        const double I = field.integral_I(100, 100);
        const double I2 = field.integral_I_2d(100, 100, 20);
        EXPECT_LE(std::abs(I - I2) / std::abs(I2), 0.02);
    }
}

TEST(Integral, ResidualShrinksUnderRefinement)
{
    // Zero-noise driving: the residual is pure discretization error.
    const EnsemblePair a = standard_pair(0, 100, 3.0, true, kDt);
    const EnsemblePair b = standard_pair(0, 200, 3.0, true, kDt / 2);
    MartingaleField fa(a), fb(b);
    const double ra = std::abs(fa.integral_I(100, 100) / fa.integral_I_2d(100, 100) - 1.0);
    const double rb = std::abs(fb.integral_I(200, 200) / fb.integral_I_2d(200, 200) - 1.0);
    EXPECT_LT(rb, ra);
}

TEST(Martingale, AxisValuesAreOne)
{
    const EnsemblePair pair = standard_pair(13);
    MartingaleField field(pair);
    EXPECT_EQ(field.M(0, 50), 1.0);
    EXPECT_EQ(field.M(50, 0), 1.0);
    EXPECT_EQ(field.record(70, 0).M, 1.0);
    EXPECT_EQ(field.record(0, 0).M, 1.0);
}

TEST(Martingale, KappaEightThirdsDropsTheIntegral)
{
    const EnsemblePair pair = standard_pair(14, 100, 8.0 / 3.0);
    MartingaleField field(pair);
    const MartingaleRecord r = field.record(100, 80);
    EXPECT_NEAR(r.lambda, 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(r.alpha, 0.625);
    const double ratio = r.N / (axis_N(pair, 0, 100) * axis_N(pair, 1, 80));
    EXPECT_NEAR(r.M, std::pow(ratio, 0.625), 1e-12);
}

TEST(Martingale, ExitValuesStayInAFixedPositiveInterval)
{
    double lo = 1e300, hi = 0.0;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const PairDriver d = build_pair_driver(2.0, 0.0, 1.0, kDt, 500, {23, s});
        std::size_t e[2];
        for (int j = 0; j < 2; ++j) {
            ExitTime ex;
            trace_until_exit(d.side[j].xi, evolve(d.side[j].xi), HalfDisk{double(j), 0.3}, ex);
            ASSERT_TRUE(ex.exited);
            e[j] = ex.index;
        }
        const EnsemblePair pair = make_ensemble_pair(d, e[0], e[1]);
        MartingaleField field(pair);
        const MartingaleRecord r = field.record(e[0], e[1]);
        ASSERT_TRUE(r.valid);
        lo = std::min(lo, r.M);
        hi = std::max(hi, r.M);
    }
    EXPECT_GT(lo, 0.3);
    EXPECT_LT(hi, 3.0);
}

TEST(Lemma, ZeroTimeGivesExactZeros)
{
    const EnsemblePair pair = standard_pair(15);
    for (int j = 0; j < 2; ++j) {
        const LemmaResidual l = lemma_check(pair, j, j == 0 ? 100 : 0, j == 0 ? 0 : 100, 1e-3);
        EXPECT_EQ(l.lhs_value, 0.0);
        EXPECT_EQ(l.rhs_value, 0.0);
        EXPECT_EQ(l.lhs_log, 0.0);
        EXPECT_EQ(l.rhs_log, 0.0);
    }
}

TEST(Lemma, FiniteDifferenceResidualsBothSides)
{
    for (std::uint64_t s : {16u, 17u}) {
        const EnsemblePair pair = standard_pair(s);
        for (int j = 0; j < 2; ++j) {
            const LemmaResidual l = lemma_check(pair, j, 100, 100, 1e-3);
            EXPECT_LE(l.residual_value, 0.05) << j;
            EXPECT_LE(l.residual_log, 0.05) << j;
        }
    }
}

TEST(Lattice, NodesIncludeEndpoints)
{
    EXPECT_EQ(lattice(0, 20), std::vector<std::size_t>{0});
    EXPECT_EQ(lattice(5, 20), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
    EXPECT_EQ(lattice(45, 20), (std::vector<std::size_t>{0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30,
                                                         33, 36, 39, 42, 45}));
}
