#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "slelab/sde_drivers.hpp"

using namespace slelab;

TEST(Bessel, ZeroNoiseKappaTwoFollowsTheOde)
{
    SdeOptions opt;
    opt.zero_noise = true;
    const double dt = 1e-5;
    const BesselPath b = sample_bessel(2.0, 1.0, dt, 30000, {1, 0}, opt);
    ASSERT_TRUE(b.stopped);
    const double t_stop = static_cast<double>(b.stop_index) * dt;
    EXPECT_NEAR(t_stop, 0.25, 1e-3);
    for (std::size_t i = 0; i <= 20000; i += 1000) {
        const double t = static_cast<double>(i) * dt;
        EXPECT_NEAR(b.y[i], std::sqrt(1.0 - 4.0 * t), 1e-3) << t;
    }
}

TEST(Bessel, KappaFourHasNoDrift)
{
    const double dt = 1e-4;
    const auto dB = brownian_increments({3, 4}, 0, dt, 2000);
    const BesselPath b = sample_bessel(4.0, 1.0, dt, dB);
    double y = 1.0;
    for (std::size_t i = 1; i < b.y.size(); ++i) {
        y += 2.0 * dB[i - 1];
        EXPECT_NEAR(b.y[i], y, 1e-12);
    }
}

TEST(Bessel, StrongErrorShrinksWithTheStep)
{
    // Coarse paths built from sums of a dt/16 reference path's increments.
    const double T = 0.1;
    const std::size_t samples = 200;
    double prev = 1e300;
    double first = 0.0, first_dt = 0.0, last = 0.0, last_dt = 0.0;
    for (double dt : {2e-3, 1e-3, 5e-4}) {
        const double fine = dt / 16.0;
        const std::size_t n = static_cast<std::size_t>(std::llround(T / fine));
        double err = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
            const auto dBf = brownian_increments({11, s}, 0, fine, n);
            std::vector<double> dBc(n / 16, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                dBc[i / 16] += dBf[i];
            }
            const BesselPath ref = sample_bessel(2.0, 1.0, fine, dBf);
            const BesselPath c = sample_bessel(2.0, 1.0, dt, dBc);
            if (ref.stopped || c.stopped) {
                continue;
            }
            err += std::abs(ref.y.back() - c.y.back());
        }
        err /= static_cast<double>(samples);
        EXPECT_LT(err, prev);
        if (first == 0.0) {
            first = err;
            first_dt = dt;
        }
        last = err;
        last_dt = dt;
        prev = err;
    }
    // At least the sqrt(dt) rate.
    EXPECT_LE(last / first, 1.1 * std::sqrt(last_dt / first_dt));
}

TEST(PairDriver, InitialState)
{
    const PairDriver d = build_pair_driver(3.0, -0.5, 1.5, 1e-4, 10, {1, 0});
    EXPECT_EQ(d.side[0].xi.values[0], -0.5);
    EXPECT_EQ(d.side[0].p[0], 1.5);
    EXPECT_EQ(d.side[1].xi.values[0], 1.5);
    EXPECT_EQ(d.side[1].p[0], -0.5);
}

TEST(PairDriver, GapMatchesBesselRecursion)
{
    const PairDriver d = build_pair_driver(3.0, 0.0, 1.0, 1e-5, 10000, {9, 1});
    for (int j = 0; j < 2; ++j) {
        const SideDriver& s = d.side[j];
        const double sign = j == 0 ? -1.0 : 1.0;
        double worst = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            worst = std::max(worst, std::abs((s.xi.values[i] - s.p[i]) - sign * s.y[i]));
        }
        EXPECT_LE(worst, 1e-9);
    }
}

TEST(PairDriver, KappaSixZeroNoiseKeepsDrivingConstant)
{
    SdeOptions opt;
    opt.zero_noise = true;
    const double dt = 1e-4;
    const PairDriver d = build_pair_driver(6.0, 0.0, 1.0, dt, 500, {1, 0}, opt);
    const SideDriver& s = d.side[0];
    for (std::size_t i = 1; i < s.size(); ++i) {
        EXPECT_EQ(s.xi.values[i], 0.0);
        EXPECT_NEAR(s.p[i], s.p[i - 1] + 2.0 * dt / (s.p[i - 1] - s.xi.values[i - 1]), 1e-15);
    }
}

TEST(SideDriver, ReproducesPairSideOnTheSameStream)
{
    const PairDriver d = build_pair_driver(2.5, 0.0, 1.0, 1e-4, 300, {4, 7});
    const SideDriver a = sle_kr_driver(2.5, 0.0, 1.0, 1e-4, 300, {4, 7}, {}, 0);
    const SideDriver b = sle_kr_driver(2.5, 1.0, 0.0, 1e-4, 300, {4, 7}, {}, 1);
    EXPECT_EQ(a.xi.values, d.side[0].xi.values);
    EXPECT_EQ(b.xi.values, d.side[1].xi.values);
}

TEST(SideDriver, ReflectionSymmetry)
{
    const double dt = 1e-4;
    auto dB = brownian_increments({2, 2}, 0, dt, 400);
    const SideDriver a = sle_kr_driver(3.0, 0.2, 1.0, dt, dB);
    for (double& b : dB) {
        b = -b;
    }
    const SideDriver m = sle_kr_driver(3.0, -0.2, -1.0, dt, dB);
    ASSERT_EQ(a.size(), m.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.xi.values[i], -m.xi.values[i]);
        EXPECT_EQ(a.p[i], -m.p[i]);
    }
}

TEST(SideDriver, RejectsBadParameters)
{
    EXPECT_THROW(sle_kr_driver(0.0, 0.0, 1.0, 1e-4, 5, {1, 0}), ParameterError);
    EXPECT_THROW(sle_kr_driver(2.0, 1.0, 1.0, 1e-4, 5, {1, 0}), ParameterError);
    EXPECT_THROW(sle_kr_driver(2.0, 0.0, 1.0, -1e-4, 5, {1, 0}), ParameterError);
}

TEST(StandardDriver, VarianceMatchesKappa)
{
    const double kappa = 3.0, dt = 1e-3;
    const std::size_t n = 10000, steps = 10;
    std::vector<double> v;
    for (std::size_t s = 0; s < n; ++s) {
        const DrivingPath p = standard_sle_driver(kappa, dt, steps, {5, s});
        v.push_back(p.values.back() / std::sqrt(p.final_time()));
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(n - 1);
    EXPECT_LE(std::abs(var - kappa), 3.0 * kappa * std::sqrt(2.0 / (n - 1)));
}

TEST(StandardDriver, ZeroNoiseAndDeterminism)
{
    const DrivingPath z = standard_sle_driver(3.0, 1e-3, 50, {1, 1}, true);
    for (double v : z.values) {
        EXPECT_EQ(v, 0.0);
    }
    const DrivingPath a = standard_sle_driver(3.0, 1e-3, 50, {1, 1});
    const DrivingPath b = standard_sle_driver(3.0, 1e-3, 50, {1, 1});
    const DrivingPath c = standard_sle_driver(3.0, 1e-3, 50, {1, 2});
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
}

TEST(Rng, LanesAreDistinct)
{
    const auto a = brownian_increments({1, 1}, 0, 1.0, 5);
    const auto b = brownian_increments({1, 1}, 1, 1.0, 5);
    EXPECT_NE(a, b);
}
