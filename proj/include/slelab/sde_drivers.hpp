#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "slelab/loewner.hpp"

namespace slelab {

struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

// Standard normals from mt19937_64 seeded by (seed, stream, lane). Lanes keep
// the two sides of a pair (and auxiliary draws) on separate substreams.
class NormalStream {
public:
    NormalStream(RngSpec rng, std::uint32_t lane, bool zero_noise = false);
    double next();

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
    bool zero_;
};

// Brownian increments sqrt(dt) * Z_i.
std::vector<double> brownian_increments(RngSpec rng, std::uint32_t lane, double dt, std::size_t n,
                                        bool zero_noise = false);

struct SdeOptions {
    double floor_guard = -1.0;  // < 0: 1e-3 times the initial gap
    bool zero_noise = false;
};

struct BesselPath {
    std::vector<double> y;
    bool stopped = false;
    std::size_t stop_index = 0;  // last retained index
};

// dY = sqrt(kappa) dB + (kappa - 4) / Y dt, stopped before Y drops below the guard.
BesselPath sample_bessel(double kappa, double y0, double dt, std::size_t n, RngSpec rng,
                         const SdeOptions& opt = {});
BesselPath sample_bessel(double kappa, double y0, double dt, std::span<const double> dB,
                         const SdeOptions& opt = {});

// One chain of the two-point system: driving xi, force point p and the gap
// process Y with xi - p = sign(start - force) * Y.
struct SideDriver {
    DrivingPath xi;
    std::vector<double> p;
    std::vector<double> y;
    bool stopped = false;
    std::size_t stop_index = 0;
    double sign = 1.0;

    std::size_t size() const { return xi.size(); }
};

// SLE(kappa, kappa - 6) from `start` with force point `force`.
SideDriver sle_kr_driver(double kappa, double start, double force, double dt, std::size_t n,
                         RngSpec rng, const SdeOptions& opt = {}, std::uint32_t lane = 0);
SideDriver sle_kr_driver(double kappa, double start, double force, double dt,
                         std::span<const double> dB, const SdeOptions& opt = {});

struct PairDriver {
    double kappa = 0.0;
    double x1 = 0.0;
    double x2 = 1.0;
    double dt = 0.0;
    SideDriver side[2];
};

PairDriver build_pair_driver(double kappa, double x1, double x2, double dt, std::size_t n,
                             RngSpec rng, const SdeOptions& opt = {});
PairDriver build_pair_driver(double kappa, double x1, double x2, double dt,
                             std::span<const double> dB1, std::span<const double> dB2,
                             const SdeOptions& opt = {});

// xi(t) = sqrt(kappa) B(t).
DrivingPath standard_sle_driver(double kappa, double dt, std::size_t n, RngSpec rng,
                                bool zero_noise = false);

}  // namespace slelab
