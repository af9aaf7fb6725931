#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "slelab/ensemble.hpp"
#include "slelab/loewner.hpp"
#include "slelab/mstar.hpp"

namespace slelab {

struct Observable {
    enum class Kind { MaxHeight, MidlineMinHeight, LineCrossLeftmost };
    Kind kind = Kind::MaxHeight;
    double y0 = 0.0;

    std::string name() const;
    // Evaluated on the trace polyline; +inf when a crossing observable has
    // no crossing.
    double operator()(std::span<const Complex> points, double x1, double x2) const;

    static Observable parse(const std::string& text);
};

using HullPair = std::pair<HullSpec, HullSpec>;

struct ExperimentConfig {
    double kappa = 8.0 / 3.0;
    double x1 = 0.0;
    double x2 = 1.0;
    double dt = -1.0;  // < 0: 1e-4 (x2 - x1)^2
    std::vector<HullPair> hull_pairs;
    std::size_t n_samples = 2000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::vector<Observable> observables;

    double alpha = 0.01;
    double stderr_mult = 3.0;
    double stderr_max = 0.05;
    double max_discard_rate = 0.05;
    double floor_guard = -1.0;

    // martingale: sample count for the stderr scaling check (0 disables)
    std::size_t scaling_samples = 500;
    // identities
    std::size_t identity_samples = 3;
    double identity_time = 0.01;
    double lemma_delta_t = 1e-3;
    std::size_t identity_grid = 20;
    double commutation_tol = 1e-3;
    double lemma_tol = 0.05;
    double integral_tol = 0.02;
    // coupling
    double min_effective_n = 300.0;
    // reversibility
    double reference_radius = 0.6;  // times (x2 - x1)

    double step() const { return dt > 0.0 ? dt : 1e-4 * (x2 - x1) * (x2 - x1); }
    // Throws ParameterError on invalid physical parameters or hull pairs.
    void validate() const;
};

ExperimentConfig default_config();

struct TestResult {
    std::string name;
    double estimate = 0.0;
    double std_error = 0.0;
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::size_t n = 0;
    std::size_t discards = 0;
};

struct SuiteReport {
    std::string suite;
    double kappa = 0.0;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::size_t discards = 0;
    double mean = 0.0;
    double std_error = 0.0;
    bool pass = false;
    bool aborted = false;
    std::string abort_reason;
    std::vector<TestResult> tests;
    double wall_seconds = 0.0;  // never serialized into the JSON payload

    // Per-sample table (header + rows) for optional CSV dumps.
    std::vector<std::string> sample_columns;
    std::vector<std::vector<double>> sample_rows;

    const TestResult* find(const std::string& name) const;
};

struct KsResult {
    double statistic = 0.0;
    double n_eff = 0.0;
    double m = 0.0;
    double critical = 0.0;
    double p_value = 1.0;
    bool pass = false;
};

// Sup distance between the weighted empirical CDF of xs and the empirical
// CDF of ys, compared with the asymptotic critical value at level alpha
// using the effective sample size of the weights.
KsResult weighted_ks(std::span<const double> xs, std::span<const double> ws,
                     std::span<const double> ys, double alpha = 0.01);
KsResult ks_two_sample(std::span<const double> xs, std::span<const double> ys,
                       double alpha = 0.01);
// Asymptotic Kolmogorov tail probability P(K > lambda).
double kolmogorov_q(double lambda);
double ks_critical_coefficient(double alpha);

// Runs fn(i) for i in [0, n) on `workers` threads; the first exception (by
// index) is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

// Default worker count: SLE_LAB_WORKERS if set, else 1.
unsigned default_workers();

SuiteReport run_martingale_test(const ExperimentConfig& cfg);
SuiteReport run_mstar_test(const ExperimentConfig& cfg);
SuiteReport run_identity_checks(const ExperimentConfig& cfg);
SuiteReport run_coupling_test(const ExperimentConfig& cfg);
SuiteReport run_reversibility_test(const ExperimentConfig& cfg);

std::string report_json(const SuiteReport& report);
std::string report_csv(const SuiteReport& report);
std::string samples_csv(const SuiteReport& report);

}  // namespace slelab
