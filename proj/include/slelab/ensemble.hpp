#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "slelab/loewner.hpp"
#include "slelab/sde_drivers.hpp"

namespace slelab {

// Sides are indexed 0 (started at x1) and 1 (started at x2).
struct EnsemblePair {
    double kappa = 0.0;
    double x1 = 0.0;
    double x2 = 1.0;
    double dt = 0.0;
    DrivingPath xi[2];
    std::vector<double> p_driver[2];
    MapComposition comp[2];
    Trace trace[2];

    std::size_t steps(int j) const { return comp[j].size(); }
    double start(int j) const { return j == 0 ? x1 : x2; }
    double time(std::size_t i) const { return static_cast<double>(i) * dt; }
    // Driving value seen at the tip after i steps.
    double tip_driving(int j, std::size_t i) const;
};

// Builds both chains up to n1 and n2 steps (clamped to the driver length).
EnsemblePair make_ensemble_pair(const PairDriver& driver, std::size_t n1, std::size_t n2);

// Image of trace_k[0..ik] under the first ij steps of side j, zipped. The
// composition is the remainder map that normalizes the image hull.
Unzipped remainder_map(const EnsemblePair& pair, int j, std::size_t ij, std::size_t ik);
Unzipped remainder_from(StepSpan comp_j, std::span<const Complex> trace_k);

struct AValues {
    std::array<std::array<double, 4>, 2> a{};  // a[j][h]

    double E() const { return a[1][0] - a[0][0]; }
};

AValues compute_A(const EnsemblePair& pair, std::size_t i1, std::size_t i2);
double compute_N(const AValues& A);

// N(t1, 0) and N(0, t2) from the single-chain jets.
double axis_N(const EnsemblePair& pair, int j, std::size_t i);

inline double alpha_of(double kappa) { return (6.0 - kappa) / (2.0 * kappa); }
inline double lambda_of(double kappa) { return (8.0 - 3.0 * kappa) * (6.0 - kappa) / (2.0 * kappa); }

struct MartingaleOptions {
    std::size_t n_sub = 20;   // s1 quadrature cells
    double eps_E = -1.0;      // < 0: 1e-3 (x2 - x1)
};

struct MartingaleRecord {
    std::size_t i1 = 0;
    std::size_t i2 = 0;
    double t1 = 0.0;
    double t2 = 0.0;
    AValues A;
    double E = 0.0;
    double N = 0.0;
    double I = 0.0;
    double M = 1.0;
    double alpha = 0.0;
    double lambda = 0.0;
    bool valid = true;
    bool quadrature_warning = false;
};

// Per-pair evaluator with caches for the integrand and M values. Not thread
// safe; use one per sample.
class MartingaleField {
public:
    explicit MartingaleField(const EnsemblePair& pair, MartingaleOptions opt = {});

    const EnsemblePair& pair() const { return *pair_; }

    // 1/4 (C2/C1)^2 - 1/6 C3/C1 at (s1, t2), C_h = A_{1,h}.
    double integrand(std::size_t s1, std::size_t i2);
    // Outer trapezoid over the s1 lattice of the closed-form inner integral.
    // `coarse`, when set, receives the estimate from every other node.
    double integral_I(std::size_t i1, std::size_t i2, double* coarse = nullptr);
    // Brute-force 2-D trapezoid of 2 N^2 on an m x m cell lattice.
    double integral_I_2d(std::size_t i1, std::size_t i2, std::size_t m = 20);

    MartingaleRecord record(std::size_t i1, std::size_t i2);
    // Cached M; exactly 1 on the axes.
    double M(std::size_t i1, std::size_t i2);

    std::size_t evaluations() const { return m_cache_.size(); }

private:
    const EnsemblePair* pair_;
    MartingaleOptions opt_;
    double eps_E_;
    std::map<std::pair<std::size_t, std::size_t>, double> f_cache_;
    std::map<std::pair<std::size_t, std::size_t>, double> m_cache_;
    std::vector<double> axis_N_[2];

    double axis(int j, std::size_t i);
};

// Quadrature nodes 0, s, 2s, ..., n with s = ceil(n / cells).
std::vector<std::size_t> lattice(std::size_t n, std::size_t cells);

MartingaleRecord compute_M(const EnsemblePair& pair, std::size_t i1, std::size_t i2,
                           MartingaleOptions opt = {});

struct LemmaResidual {
    double lhs_value = 0.0;   // d/dt of the remainder map at the frozen point
    double rhs_value = 0.0;   // -3 A_{j,2}
    double lhs_log = 0.0;     // d/dt of log derivative
    double rhs_log = 0.0;     // 1/2 (A2/A1)^2 - 4/3 A3/A1
    double residual_value = 0.0;
    double residual_log = 0.0;
};

// Advances side j by a constant-driving step of length delta_t at its tip
// value while the evaluation point stays frozen at that value.
LemmaResidual lemma_check(const EnsemblePair& pair, int j, std::size_t i1, std::size_t i2,
                              double delta_t);

// |phi_{2,t1}(t2, phi_1(t1, z)) - phi_{1,t2}(t1, phi_2(t2, z))|.
double commutation_residual(const EnsemblePair& pair, std::size_t i1, std::size_t i2, Complex z);

// Capacity clock v(t) and mapped driving eta of side j seen through the
// first ik steps of the other side.
struct TimeChangedChain {
    std::vector<double> v;
    std::vector<double> eta;
};

TimeChangedChain time_changed_chain(const EnsemblePair& pair, int j, std::size_t ij,
                                    std::size_t ik);

}  // namespace slelab
