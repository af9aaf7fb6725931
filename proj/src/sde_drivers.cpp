#include "slelab/sde_drivers.hpp"

#include <cmath>

namespace slelab {

namespace {

std::seed_seq make_seed(RngSpec rng, std::uint32_t lane)
{
    return std::seed_seq{static_cast<std::uint32_t>(rng.seed),
                         static_cast<std::uint32_t>(rng.seed >> 32),
                         static_cast<std::uint32_t>(rng.stream),
                         static_cast<std::uint32_t>(rng.stream >> 32), lane};
}

void check_kappa(double kappa)
{
    if (!(kappa > 0.0) || !std::isfinite(kappa)) {
        throw ParameterError("kappa must be positive");
    }
}

void check_dt(double dt)
{
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ParameterError("dt must be positive");
    }
}

}  // namespace

NormalStream::NormalStream(RngSpec rng, std::uint32_t lane, bool zero_noise) : zero_(zero_noise)
{
    auto seq = make_seed(rng, lane);
    engine_.seed(seq);
}

double NormalStream::next() { return zero_ ? 0.0 : normal_(engine_); }

std::vector<double> brownian_increments(RngSpec rng, std::uint32_t lane, double dt, std::size_t n,
                                        bool zero_noise)
{
    NormalStream normals(rng, lane, zero_noise);
    const double sd = std::sqrt(dt);
    std::vector<double> dB(n);
    for (double& b : dB) {
        b = sd * normals.next();
    }
    return dB;
}

BesselPath sample_bessel(double kappa, double y0, double dt, std::span<const double> dB,
                         const SdeOptions& opt)
{
    check_kappa(kappa);
    check_dt(dt);
    if (!(y0 > 0.0)) {
        throw ParameterError("Bessel start must be positive");
    }
    const double guard = opt.floor_guard < 0.0 ? 1e-3 * y0 : opt.floor_guard;
    const double sk = std::sqrt(kappa);
    BesselPath out;
    out.y.reserve(dB.size() + 1);
    out.y.push_back(y0);
    for (std::size_t i = 0; i < dB.size(); ++i) {
        const double y = out.y.back();
        const double b = opt.zero_noise ? 0.0 : dB[i];
        const double next = y + sk * b + (kappa - 4.0) / y * dt;
        if (!(next > guard)) {
            out.stopped = true;
            break;
        }
        out.y.push_back(next);
    }
    out.stop_index = out.y.size() - 1;
    return out;
}

BesselPath sample_bessel(double kappa, double y0, double dt, std::size_t n, RngSpec rng,
                         const SdeOptions& opt)
{
    check_dt(dt);
    return sample_bessel(kappa, y0, dt, brownian_increments(rng, 0, dt, n, opt.zero_noise), opt);
}

SideDriver sle_kr_driver(double kappa, double start, double force, double dt,
                         std::span<const double> dB, const SdeOptions& opt)
{
    check_kappa(kappa);
    check_dt(dt);
    if (!(start != force) || !std::isfinite(start) || !std::isfinite(force)) {
        throw ParameterError("start and force point must differ");
    }
    SideDriver d;
    d.sign = start < force ? -1.0 : 1.0;
    const double gap = std::abs(force - start);
    const double guard = opt.floor_guard < 0.0 ? 1e-3 * gap : opt.floor_guard;
    const double sk = std::sqrt(kappa);
    const std::size_t n = dB.size();
    d.xi.times.reserve(n + 1);
    d.xi.values.reserve(n + 1);
    d.p.reserve(n + 1);
    d.y.reserve(n + 1);
    d.xi.times.push_back(0.0);
    d.xi.values.push_back(start);
    d.p.push_back(force);
    d.y.push_back(gap);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = d.xi.values.back();
        const double p = d.p.back();
        const double y = d.y.back();
        const double b = opt.zero_noise ? 0.0 : dB[i];
        const double y_next = y + d.sign * sk * b + (kappa - 4.0) / y * dt;
        if (!(y_next > guard)) {
            d.stopped = true;
            break;
        }
        d.xi.values.push_back(xi + sk * b + (kappa - 6.0) / (xi - p) * dt);
        d.p.push_back(p + 2.0 * dt / (p - xi));
        d.y.push_back(y_next);
        d.xi.times.push_back(static_cast<double>(i + 1) * dt);
    }
    d.stop_index = d.xi.size() - 1;
    return d;
}

SideDriver sle_kr_driver(double kappa, double start, double force, double dt, std::size_t n,
                         RngSpec rng, const SdeOptions& opt, std::uint32_t lane)
{
    check_dt(dt);
    return sle_kr_driver(kappa, start, force, dt,
                         brownian_increments(rng, lane, dt, n, opt.zero_noise), opt);
}

PairDriver build_pair_driver(double kappa, double x1, double x2, double dt,
                             std::span<const double> dB1, std::span<const double> dB2,
                             const SdeOptions& opt)
{
    if (!(x1 < x2)) {
        throw ParameterError("pair driver requires x1 < x2");
    }
    PairDriver pd;
    pd.kappa = kappa;
    pd.x1 = x1;
    pd.x2 = x2;
    pd.dt = dt;
    pd.side[0] = sle_kr_driver(kappa, x1, x2, dt, dB1, opt);
    pd.side[1] = sle_kr_driver(kappa, x2, x1, dt, dB2, opt);
    return pd;
}

PairDriver build_pair_driver(double kappa, double x1, double x2, double dt, std::size_t n,
                             RngSpec rng, const SdeOptions& opt)
{
    check_dt(dt);
    const auto dB1 = brownian_increments(rng, 0, dt, n, opt.zero_noise);
    const auto dB2 = brownian_increments(rng, 1, dt, n, opt.zero_noise);
    return build_pair_driver(kappa, x1, x2, dt, dB1, dB2, opt);
}

DrivingPath standard_sle_driver(double kappa, double dt, std::size_t n, RngSpec rng,
                                bool zero_noise)
{
    check_kappa(kappa);
    check_dt(dt);
    NormalStream normals(rng, 0, zero_noise);
    const double scale = std::sqrt(kappa * dt);
    DrivingPath path;
    path.times.resize(n + 1);
    path.values.resize(n + 1);
    path.values[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        path.times[i + 1] = static_cast<double>(i + 1) * dt;
        path.values[i + 1] = path.values[i] + scale * normals.next();
    }
    return path;
}

}  // namespace slelab
