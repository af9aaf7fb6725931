#include "slelab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace slelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Stream offset for ensembles that must be independent of the main samples.
constexpr std::uint64_t kIndependentStreams = std::uint64_t{1} << 40;

using Clock = std::chrono::steady_clock;

std::size_t horizon(double hcap_bound, double dt, double factor = 1.0)
{
    return static_cast<std::size_t>(std::ceil(factor * hcap_bound / (2.0 * dt))) + 2;
}

SdeOptions sde_options(const ExperimentConfig& cfg)
{
    SdeOptions o;
    o.floor_guard = cfg.floor_guard;
    return o;
}

struct MeanStats {
    double mean = 0.0;
    double se = 0.0;
};

MeanStats mean_stats(const std::vector<double>& v)
{
    MeanStats s;
    if (v.empty()) {
        return s;
    }
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) {
            ss += (x - s.mean) * (x - s.mean);
        }
        s.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return s;
}

bool check_discards(SuiteReport& r, std::size_t total, double max_rate)
{
    r.discards = total - r.n;
    if (total > 0 && static_cast<double>(r.discards) > max_rate * static_cast<double>(total)) {
        std::ostringstream msg;
        msg << r.discards << " of " << total << " samples discarded";
        r.aborted = true;
        r.abort_reason = msg.str();
        r.pass = false;
        return false;
    }
    return true;
}

TestResult ks_test(const std::string& name, const KsResult& ks, std::size_t n, std::size_t discards,
                   bool extra_ok = true)
{
    TestResult t;
    t.name = name;
    t.estimate = ks.n_eff;
    t.statistic = ks.statistic;
    t.threshold = ks.critical;
    t.std_error = ks.p_value;
    t.pass = ks.pass && extra_ok;
    t.n = n;
    t.discards = discards;
    return t;
}

bool all_pass(const std::vector<TestResult>& tests)
{
    return std::all_of(tests.begin(), tests.end(), [](const TestResult& t) { return t.pass; });
}

// Trace of one side up to its exit from `hull`; nullopt-like flag when the
// path ends first (guard stop or horizon).
struct SideRun {
    bool exited = false;
    std::size_t exit_index = 0;
    Trace trace;
};

SideRun run_side(const DrivingPath& path, const HullSpec& hull,
                 const std::function<Complex(Complex)>& pullback = {})
{
    SideRun out;
    ExitTime ex;
    out.trace = trace_until_exit(path, evolve(path), hull, ex, pullback);
    out.exited = ex.exited;
    out.exit_index = ex.index;
    return out;
}

// Exit indices of one side for several hulls; the trace runs until every hull
// has been left. Index 0 marks "never exited".
std::vector<std::size_t> exit_indices(const DrivingPath& path, const std::vector<HullSpec>& hulls)
{
    const MapComposition comp = evolve(path);
    std::vector<std::size_t> out(hulls.size(), 0);
    std::size_t remaining = hulls.size();
    for (std::size_t k = 1; k < path.size() && remaining > 0; ++k) {
        const Complex z = invert_apply(comp.prefix(k), {path.values[k - 1], 0.0});
        for (std::size_t m = 0; m < hulls.size(); ++m) {
            if (out[m] == 0 && !hulls[m].contains(z)) {
                out[m] = k;
                --remaining;
            }
        }
    }
    return out;
}

double snap_to_grid(double t, double dt) { return std::round(t / dt) * dt; }

nlohmann::ordered_json num(double v)
{
    if (!std::isfinite(v)) {
        return nullptr;
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------- observables

std::string Observable::name() const
{
    switch (kind) {
    case Kind::MaxHeight:
        return "MaxHeight";
    case Kind::MidlineMinHeight:
        return "MidlineMinHeight";
    case Kind::LineCrossLeftmost: {
        std::ostringstream s;
        s << "LineCrossLeftmost:" << y0;
        return s.str();
    }
    }
    return "?";
}

Observable Observable::parse(const std::string& text)
{
    Observable o;
    if (text == "MaxHeight") {
        o.kind = Kind::MaxHeight;
    } else if (text == "MidlineMinHeight") {
        o.kind = Kind::MidlineMinHeight;
    } else if (text.rfind("LineCrossLeftmost:", 0) == 0) {
        o.kind = Kind::LineCrossLeftmost;
        try {
            o.y0 = std::stod(text.substr(18));
        } catch (const std::exception&) {
            throw ConfigError("bad LineCrossLeftmost level: " + text);
        }
        if (!(o.y0 > 0.0)) {
            throw ConfigError("LineCrossLeftmost level must be positive");
        }
    } else {
        throw ConfigError("unknown observable: " + text);
    }
    return o;
}

double Observable::operator()(std::span<const Complex> pts, double x1, double x2) const
{
    if (kind == Kind::MaxHeight) {
        double h = 0.0;
        for (const Complex& z : pts) {
            h = std::max(h, z.imag());
        }
        return h;
    }
    // Crossing observables interpolate along the polyline.
    const bool vertical = kind == Kind::MidlineMinHeight;
    const double level = vertical ? 0.5 * (x1 + x2) : y0;
    double best = kInf;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const Complex a = pts[i - 1];
        const Complex b = pts[i];
        const double da = (vertical ? a.real() : a.imag()) - level;
        const double db = (vertical ? b.real() : b.imag()) - level;
        if (da * db > 0.0 || (da == 0.0 && db == 0.0 && i + 1 < pts.size())) {
            continue;
        }
        const double s = da == db ? 0.0 : da / (da - db);
        const Complex c = a + s * (b - a);
        best = std::min(best, vertical ? c.imag() : c.real());
    }
    return best;
}

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const
{
    if (!(kappa > 0.0) || !std::isfinite(kappa)) {
        throw ParameterError("kappa must be positive");
    }
    if (!(x1 < x2)) {
        throw ParameterError("x1 must be less than x2");
    }
    if (!(step() > 0.0)) {
        throw ParameterError("dt must be positive");
    }
    if (n_samples == 0) {
        throw ParameterError("samples must be positive");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ParameterError("alpha must lie in (0, 1)");
    }
    if (!(reference_radius > 0.0)) {
        throw ParameterError("reference radius must be positive");
    }
    for (const auto& [h1, h2] : hull_pairs) {
        validate_hull_pair(h1, h2, x1, x2);
    }
}

ExperimentConfig default_config()
{
    ExperimentConfig cfg;
    cfg.hull_pairs.push_back({HalfDisk{0.0, 0.3}, HalfDisk{1.0, 0.3}});
    cfg.observables = {Observable{Observable::Kind::MaxHeight},
                       Observable{Observable::Kind::MidlineMinHeight}};
    return cfg;
}

const TestResult* SuiteReport::find(const std::string& name) const
{
    for (const auto& t : tests) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

// ---------------------------------------------------------------- statistics

double kolmogorov_q(double lambda)
{
    if (lambda <= 0.0) {
        return 1.0;
    }
    if (lambda < 1.18) {
        // Theta-function form converges fast for small lambda.
        const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
        double cdf = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double odd = 2.0 * k - 1.0;
            cdf += std::exp(-odd * odd * c);
        }
        cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double q = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        q += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-17) {
            break;
        }
    }
    return std::clamp(q, 0.0, 1.0);
}

double ks_critical_coefficient(double alpha) { return std::sqrt(-0.5 * std::log(0.5 * alpha)); }

KsResult weighted_ks(std::span<const double> xs, std::span<const double> ws,
                     std::span<const double> ys, double alpha)
{
    if (xs.empty() || ys.empty() || xs.size() != ws.size()) {
        throw ParameterError("weighted KS needs nonempty samples and one weight per x");
    }
    double sw = 0.0;
    double sw2 = 0.0;
    for (double w : ws) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw ParameterError("weights must be positive and finite");
        }
        sw += w;
        sw2 += w * w;
    }
    KsResult r;
    r.n_eff = sw * sw / sw2;
    r.m = static_cast<double>(ys.size());
    if (r.n_eff < 30.0) {
        throw ParameterError("degenerate weights: effective sample size below 30");
    }

    std::vector<std::size_t> ix(xs.size());
    std::iota(ix.begin(), ix.end(), 0);
    std::sort(ix.begin(), ix.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ysorted(ys.begin(), ys.end());
    std::sort(ysorted.begin(), ysorted.end());

    double fx = 0.0;
    double d = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < ix.size() || j < ysorted.size()) {
        double v;
        if (j >= ysorted.size() || (i < ix.size() && xs[ix[i]] <= ysorted[j])) {
            v = xs[ix[i]];
        } else {
            v = ysorted[j];
        }
        while (i < ix.size() && xs[ix[i]] == v) {
            fx += ws[ix[i]];
            ++i;
        }
        while (j < ysorted.size() && ysorted[j] == v) {
            ++j;
        }
        d = std::max(d, std::abs(fx / sw - static_cast<double>(j) / r.m));
    }
    r.statistic = d;
    const double scale = std::sqrt((r.n_eff + r.m) / (r.n_eff * r.m));
    r.critical = ks_critical_coefficient(alpha) * scale;
    r.p_value = kolmogorov_q(d / scale);
    r.pass = d <= r.critical;
    return r;
}

KsResult ks_two_sample(std::span<const double> xs, std::span<const double> ys, double alpha)
{
    const std::vector<double> ones(xs.size(), 1.0);
    return weighted_ks(xs, ones, ys, alpha);
}

// ---------------------------------------------------------------- parallelism

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn)
{
    workers = std::max(1u, workers);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1 || n < 2) {
        body();
    } else {
        std::vector<std::thread> pool;
        const unsigned k = static_cast<unsigned>(std::min<std::size_t>(workers, n));
        for (unsigned w = 0; w < k; ++w) {
            pool.emplace_back(body);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

unsigned default_workers()
{
    if (const char* env = std::getenv("SLE_LAB_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) {
                return static_cast<unsigned>(v);
            }
        } catch (const std::exception&) {
        }
    }
    return 1;
}

// ---------------------------------------------------------------- martingale

SuiteReport run_martingale_test(const ExperimentConfig& cfg)
{
    cfg.validate();
    if (cfg.hull_pairs.empty()) {
        throw ParameterError("martingale test needs a hull pair");
    }
    const auto t0 = Clock::now();
    const double dt = cfg.step();
    const auto& [h1, h2] = cfg.hull_pairs.front();
    const std::size_t n1 = horizon(h1.hcap_upper_bound(), dt);
    const std::size_t n2 = horizon(h2.hcap_upper_bound(), dt);
    const Observable obs = cfg.observables.empty() ? Observable{} : cfg.observables.front();
    const SdeOptions opt = sde_options(cfg);

    struct Row {
        bool ok = false;
        double M = 0.0, t1 = 0.0, t2 = 0.0, value = 0.0;
        bool warn = false;
        bool indep_ok = false;
        double indep_value = 0.0;
    };
    std::vector<Row> rows(cfg.n_samples);
    parallel_for(cfg.n_samples, cfg.workers, [&](std::size_t i) {
        Row& row = rows[i];
        try {
            const PairDriver d = build_pair_driver(cfg.kappa, cfg.x1, cfg.x2, dt, std::max(n1, n2),
                                                   {cfg.seed, i}, opt);
            const SideRun s1 = run_side(d.side[0].xi.truncated(n1), h1);
            const SideRun s2 = run_side(d.side[1].xi.truncated(n2), h2);
            if (s1.exited && s2.exited) {
                const EnsemblePair pair = make_ensemble_pair(d, s1.exit_index, s2.exit_index);
                MartingaleField field(pair);
                const MartingaleRecord rec = field.record(s1.exit_index, s2.exit_index);
                if (rec.valid) {
                    row.ok = true;
                    row.M = rec.M;
                    row.t1 = rec.t1;
                    row.t2 = rec.t2;
                    row.warn = rec.quadrature_warning;
                    row.value = obs(s1.trace.points, cfg.x1, cfg.x2);
                }
            }
        } catch (const std::runtime_error&) {
        } catch (const std::domain_error&) {
        }
        try {
            const SideDriver s = sle_kr_driver(cfg.kappa, cfg.x1, cfg.x2, dt, n1,
                                               {cfg.seed, kIndependentStreams + i}, opt, 0);
            const SideRun run = run_side(s.xi, h1);
            if (run.exited) {
                row.indep_ok = true;
                row.indep_value = obs(run.trace.points, cfg.x1, cfg.x2);
            }
        } catch (const std::runtime_error&) {
        } catch (const std::domain_error&) {
        }
    });

    SuiteReport r;
    r.suite = "martingale";
    r.kappa = cfg.kappa;
    r.seed = cfg.seed;
    r.sample_columns = {"sample", "t1", "t2", "M", obs.name()};
    std::vector<double> Ms, weighted_x, indep;
    std::vector<double> first_block;
    std::size_t warnings = 0;
    std::size_t indep_discards = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        if (row.indep_ok) {
            indep.push_back(row.indep_value);
        } else {
            ++indep_discards;
        }
        if (!row.ok) {
            continue;
        }
        Ms.push_back(row.M);
        weighted_x.push_back(row.value);
        warnings += row.warn ? 1 : 0;
        if (i < cfg.scaling_samples) {
            first_block.push_back(row.M);
        }
        r.sample_rows.push_back({static_cast<double>(i), row.t1, row.t2, row.M, row.value});
    }
    r.n = Ms.size();
    if (!check_discards(r, cfg.n_samples, cfg.max_discard_rate)) {
        r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        return r;
    }
    const MeanStats st = mean_stats(Ms);
    r.mean = st.mean;
    r.std_error = st.se;

    TestResult mean_t{"martingale_mean", st.mean, st.se, std::abs(st.mean - 1.0),
                      cfg.stderr_mult * st.se, false, r.n, r.discards};
    mean_t.pass = mean_t.statistic <= mean_t.threshold;
    r.tests.push_back(mean_t);

    TestResult se_t{"stderr_bound", st.se, st.se, st.se, cfg.stderr_max, st.se <= cfg.stderr_max,
                    r.n, r.discards};
    r.tests.push_back(se_t);

    const auto [mn, mx] = std::minmax_element(Ms.begin(), Ms.end());
    const bool positive = std::all_of(Ms.begin(), Ms.end(),
                                      [](double m) { return m > 0.0 && std::isfinite(m); });
    r.tests.push_back({"positivity", *mn, 0.0, *mx, 0.0, positive, r.n, r.discards});

    if (cfg.scaling_samples > 1 && cfg.scaling_samples < cfg.n_samples && first_block.size() > 1) {
        const MeanStats small = mean_stats(first_block);
        const double expected =
            std::sqrt(static_cast<double>(r.n) / static_cast<double>(first_block.size()));
        const double ratio = small.se / st.se;
        TestResult sc{"stderr_scaling", ratio, 0.0, std::abs(ratio / expected - 1.0), 0.25, false,
                      r.n, r.discards};
        sc.pass = sc.statistic <= sc.threshold;
        r.tests.push_back(sc);
    }

    r.tests.push_back({"quadrature_warnings", static_cast<double>(warnings), 0.0,
                       static_cast<double>(warnings), static_cast<double>(r.n), true, r.n,
                       r.discards});

    if (indep.size() >= 30) {
        const KsResult ks = weighted_ks(weighted_x, Ms, indep, cfg.alpha);
        r.tests.push_back(ks_test("marginal_ks", ks, r.n, indep_discards));
    } else {
        r.tests.push_back({"marginal_ks", 0.0, 0.0, 1.0, 0.0, false, r.n, indep_discards});
    }
    r.pass = all_pass(r.tests);
    r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------- M*

SuiteReport run_mstar_test(const ExperimentConfig& cfg)
{
    cfg.validate();
    if (cfg.hull_pairs.empty()) {
        throw ParameterError("M* test needs at least one hull pair");
    }
    const auto t0 = Clock::now();
    const double dt = cfg.step();
    std::vector<HullSpec> side_hulls[2];
    double bound[2] = {0.0, 0.0};
    for (const auto& [a, b] : cfg.hull_pairs) {
        side_hulls[0].push_back(a);
        side_hulls[1].push_back(b);
        bound[0] = std::max(bound[0], a.hcap_upper_bound());
        bound[1] = std::max(bound[1], b.hcap_upper_bound());
    }
    const std::size_t nmax[2] = {horizon(bound[0], dt), horizon(bound[1], dt)};
    const SdeOptions opt = sde_options(cfg);

    struct Row {
        bool ok = false;
        double value = 0.0;
        bool boundary_ok = false;
        double agreement = 0.0;
        double consistency = 0.0;
        double lo = kInf, hi = 0.0;
        std::size_t retained = 0;
    };
    std::vector<Row> rows(cfg.n_samples);
    parallel_for(cfg.n_samples, cfg.workers, [&](std::size_t i) {
        Row& row = rows[i];
        try {
            const PairDriver d = build_pair_driver(cfg.kappa, cfg.x1, cfg.x2, dt,
                                                   std::max(nmax[0], nmax[1]), {cfg.seed, i}, opt);
            std::vector<std::size_t> e[2];
            for (int j = 0; j < 2; ++j) {
                e[j] = exit_indices(d.side[j].xi.truncated(nmax[j]), side_hulls[j]);
                if (std::find(e[j].begin(), e[j].end(), 0) != e[j].end()) {
                    return;
                }
            }
            std::vector<std::pair<double, double>> exits;
            for (std::size_t m = 0; m < e[0].size(); ++m) {
                exits.emplace_back(static_cast<double>(e[0][m]) * dt,
                                   static_cast<double>(e[1][m]) * dt);
            }
            const SpliceIndex idx = select_S(exits);
            const EnsemblePair pair =
                make_ensemble_pair(d, *std::max_element(e[0].begin(), e[0].end()),
                                   *std::max_element(e[1].begin(), e[1].end()));
            MartingaleField field(pair);
            const MEvaluator ev(field, idx);
            const MFunction M = [&](double a, double b) {
                const double v = ev(a, b);
                row.lo = std::min(row.lo, v);
                row.hi = std::max(row.hi, v);
                return v;
            };
            const double inf = 2.0 * idx.infinity;
            row.value = mstar_eval(inf, inf, idx, M);

            const std::size_t s = idx.size();
            row.boundary_ok = true;
            std::vector<double> probes = {inf};
            for (std::size_t k = 1; k <= s; ++k) {
                probes.push_back(idx.T1(k));
                probes.push_back(idx.T2(k));
            }
            for (double t : probes) {
                row.boundary_ok = row.boundary_ok && mstar_eval(t, 0.0, idx, M) == 1.0 &&
                                  mstar_eval(0.0, t, idx, M) == 1.0;
            }

            auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
            for (const auto& [a, b] : exits) {
                const double ha = snap_to_grid(0.5 * a, dt);
                const double hb = snap_to_grid(0.5 * b, dt);
                for (const auto& [p, q] : {std::pair{a, b}, std::pair{ha, hb}}) {
                    row.agreement = std::max(row.agreement, rel(mstar_eval(p, q, idx, M), M(p, q)));
                }
            }
            // Both neighbouring cells at every grid line T1^{sigma(k)} and T2^{sigma(k)}.
            for (std::size_t k = 1; k <= s; ++k) {
                for (std::size_t jj = 1; jj <= s; ++jj) {
                    const double t1 = idx.T1(k);
                    const double t2 = idx.T2(jj);
                    const auto [c1, c2] = locate_cells(idx, t1, t2);
                    (void)c1;
                    const double a = mstar_eval_cells(t1, t2, k, c2, idx, M);
                    const double b = mstar_eval_cells(t1, t2, k + 1, c2, idx, M);
                    row.consistency = std::max(row.consistency, rel(a, b));
                    const double u1 = idx.T1(jj);
                    const double u2 = idx.T2(k);
                    const auto [d1, d2] = locate_cells(idx, u1, u2);
                    (void)d2;
                    const double c = mstar_eval_cells(u1, u2, d1, k, idx, M);
                    const double g = mstar_eval_cells(u1, u2, d1, k - 1, idx, M);
                    row.consistency = std::max(row.consistency, rel(c, g));
                }
            }
            row.retained = s;
            row.ok = std::isfinite(row.value) && row.value > 0.0;
        } catch (const std::runtime_error&) {
        } catch (const std::domain_error&) {
        } catch (const std::invalid_argument&) {
        }
    });

    SuiteReport r;
    r.suite = "mstar";
    r.kappa = cfg.kappa;
    r.seed = cfg.seed;
    r.sample_columns = {"sample", "mstar", "retained", "agreement", "consistency"};
    std::vector<double> vals;
    bool boundary = true;
    double agreement = 0.0, consistency = 0.0, lo = kInf, hi = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        if (!row.ok) {
            continue;
        }
        vals.push_back(row.value);
        boundary = boundary && row.boundary_ok;
        agreement = std::max(agreement, row.agreement);
        consistency = std::max(consistency, row.consistency);
        lo = std::min(lo, row.lo);
        hi = std::max(hi, row.hi);
        r.sample_rows.push_back({static_cast<double>(i), row.value,
                                 static_cast<double>(row.retained), row.agreement,
                                 row.consistency});
    }
    r.n = vals.size();
    if (!check_discards(r, cfg.n_samples, cfg.max_discard_rate)) {
        r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        return r;
    }
    const MeanStats st = mean_stats(vals);
    r.mean = st.mean;
    r.std_error = st.se;
    TestResult mean_t{"mstar_mean", st.mean, st.se, std::abs(st.mean - 1.0),
                      cfg.stderr_mult * st.se, false, r.n, r.discards};
    mean_t.pass = mean_t.statistic <= mean_t.threshold;
    r.tests.push_back(mean_t);
    r.tests.push_back({"boundary_exact", boundary ? 1.0 : 0.0, 0.0, 0.0, 0.0, boundary, r.n,
                       r.discards});
    r.tests.push_back({"rectangle_agreement", agreement, 0.0, agreement, 1e-9, agreement <= 1e-9,
                       r.n, r.discards});
    r.tests.push_back({"cell_consistency", consistency, 0.0, consistency, 1e-9,
                       consistency <= 1e-9, r.n, r.discards});
    r.tests.push_back({"factor_range", lo, 0.0, hi, 0.0, lo > 0.0 && std::isfinite(hi), r.n,
                       r.discards});
    r.pass = all_pass(r.tests);
    r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------- identities

namespace {

struct IdentityResiduals {
    double commutation = 0.0;
    double lemma = 0.0;
    double integral = 0.0;
};

IdentityResiduals identity_residuals(const ExperimentConfig& cfg, const PairDriver& d,
                                     std::size_t i)
{
    const EnsemblePair pair = make_ensemble_pair(d, i, i);
    const double mid = 0.5 * (cfg.x1 + cfg.x2);
    const double w = cfg.x2 - cfg.x1;
    const Complex zs[5] = {{mid, 0.5 * w}, {mid, 2.0 * w}, {cfg.x1 - w, 0.3 * w},
                           {cfg.x2 + w, 0.3 * w}, {mid, 0.1 * w}};
    IdentityResiduals out;
    for (const Complex& z : zs) {
        out.commutation = std::max(out.commutation, commutation_residual(pair, i, i, z));
    }
    for (int j = 0; j < 2; ++j) {
        const LemmaResidual l = lemma_check(pair, j, i, i, cfg.lemma_delta_t);
        out.lemma = std::max({out.lemma, l.residual_value, l.residual_log});
    }
    MartingaleField field(pair, MartingaleOptions{cfg.identity_grid});
    const double I = field.integral_I(i, i);
    const double I2 = field.integral_I_2d(i, i, cfg.identity_grid);
    out.integral = std::abs(I - I2) / std::abs(I2);
    return out;
}

}  // namespace

SuiteReport run_identity_checks(const ExperimentConfig& cfg)
{
    cfg.validate();
    const auto t0 = Clock::now();
    const double dt = cfg.step();
    const auto steps = [&](double h) {
        return static_cast<std::size_t>(std::llround(cfg.identity_time / h));
    };
    const std::size_t n = cfg.identity_samples;
    SdeOptions noisy = sde_options(cfg);
    SdeOptions smooth = noisy;
    smooth.zero_noise = true;

    // Samples 0..n-1 carry Brownian noise; n and n+1 are the smooth run at
    // dt and dt/2.
    std::vector<IdentityResiduals> res(n + 2);
    std::vector<char> ok(n + 2, 0);
    parallel_for(n + 2, cfg.workers, [&](std::size_t s) {
        try {
            const double h = s == n + 1 ? 0.5 * dt : dt;
            const std::size_t i = steps(h);
            const PairDriver d = build_pair_driver(cfg.kappa, cfg.x1, cfg.x2, h, i + 2,
                                                   {cfg.seed, s}, s < n ? noisy : smooth);
            if (d.side[0].xi.steps() < i || d.side[1].xi.steps() < i) {
                return;
            }
            res[s] = identity_residuals(cfg, d, i);
            ok[s] = 1;
        } catch (const std::runtime_error&) {
        } catch (const std::domain_error&) {
        }
    });

    SuiteReport r;
    r.suite = "identities";
    r.kappa = cfg.kappa;
    r.seed = cfg.seed;
    r.sample_columns = {"sample", "zero_noise", "dt", "commutation", "lemma", "integral"};
    IdentityResiduals worst;
    for (std::size_t s = 0; s < n + 2; ++s) {
        if (!ok[s]) {
            continue;
        }
        ++r.n;
        worst.commutation = std::max(worst.commutation, res[s].commutation);
        worst.lemma = std::max(worst.lemma, res[s].lemma);
        worst.integral = std::max(worst.integral, res[s].integral);
        r.sample_rows.push_back({static_cast<double>(s), s >= n ? 1.0 : 0.0,
                                 s == n + 1 ? 0.5 * dt : dt, res[s].commutation, res[s].lemma,
                                 res[s].integral});
    }
    r.discards = n + 2 - r.n;
    r.tests.push_back({"commutation", worst.commutation, 0.0, worst.commutation,
                       cfg.commutation_tol, worst.commutation <= cfg.commutation_tol, r.n,
                       r.discards});
    r.tests.push_back({"lemma_residuals", worst.lemma, 0.0, worst.lemma, cfg.lemma_tol,
                       worst.lemma <= cfg.lemma_tol, r.n, r.discards});
    r.tests.push_back({"integral_identity", worst.integral, 0.0, worst.integral,
                       cfg.integral_tol, worst.integral <= cfg.integral_tol, r.n, r.discards});
    if (ok[n] && ok[n + 1]) {
        const double a = res[n].integral;
        const double b = res[n + 1].integral;
        r.tests.push_back({"integral_refinement", b, 0.0, b, a, b < a, 2, 0});
        const double c = res[n].commutation;
        const double e = res[n + 1].commutation;
        r.tests.push_back({"commutation_refinement", e, 0.0, e, c, e <= c, 2, 0});
    } else {
        r.tests.push_back({"integral_refinement", 0.0, 0.0, 0.0, 0.0, false, 0, 2});
    }

    // Zero-time edge cases: exact zeros and unit M on the axes.
    bool zeros = false;
    try {
        const std::size_t i = steps(dt);
        const PairDriver d = build_pair_driver(cfg.kappa, cfg.x1, cfg.x2, dt, i + 2,
                                               {cfg.seed, 0}, noisy);
        const EnsemblePair pair = make_ensemble_pair(d, i, i);
        MartingaleField field(pair);
        const LemmaResidual l = lemma_check(pair, 0, i, 0, cfg.lemma_delta_t);
        zeros = field.integral_I(0, i) == 0.0 && field.integral_I(i, 0) == 0.0 &&
                field.integral_I_2d(0, i) == 0.0 && l.lhs_value == 0.0 && l.rhs_value == 0.0 &&
                l.lhs_log == 0.0 && l.rhs_log == 0.0 && field.record(i, 0).M == 1.0 &&
                field.record(0, i).M == 1.0;
    } catch (const std::exception&) {
        zeros = false;
    }
    r.tests.push_back({"zero_time_edges", zeros ? 1.0 : 0.0, 0.0, 0.0, 0.0, zeros, 1, 0});
    r.mean = worst.integral;
    r.pass = r.n == n + 2 && all_pass(r.tests);
    r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------- coupling

SuiteReport run_coupling_test(const ExperimentConfig& cfg)
{
    cfg.validate();
    if (cfg.hull_pairs.empty()) {
        throw ParameterError("coupling test needs a hull pair");
    }
    if (cfg.kappa > 4.0) {
        throw ParameterError("coupling test requires kappa in (0, 4]");
    }
    const auto t0 = Clock::now();
    const double dt = cfg.step();
    const auto& [h1, h2] = cfg.hull_pairs.front();
    const std::size_t n1 = horizon(h1.hcap_upper_bound(), dt);
    const std::size_t n2 = horizon(h2.hcap_upper_bound(), dt);
    const std::size_t nb = horizon(h1.hcap_upper_bound(), dt, 1.5);
    const Observable obs = cfg.observables.empty() ? Observable{} : cfg.observables.front();
    const SdeOptions opt = sde_options(cfg);

    struct Row {
        bool a_ok = false, b_ok = false, null_ok = false;
        double weight = 0.0, a = 0.0, b = 0.0, null_b = 0.0;
    };
    std::vector<Row> rows(cfg.n_samples);

    auto conditional = [&](const PairDriver& d, const MapComposition& comp2, std::size_t tbar,
                           std::size_t i, std::uint32_t lane, double& out) {
        const StepSpan pre = comp2.prefix(tbar);
        const double start = compose_apply(pre, {cfg.x1, 0.0}).real();
        const double force = tbar == 0 ? cfg.x2 : d.side[1].xi.values[tbar - 1];
        const SideDriver s =
            sle_kr_driver(cfg.kappa, start, force, dt, nb, {cfg.seed, i}, opt, lane);
        const SideRun run = run_side(s.xi, h1, [pre](Complex z) {
            Complex w = invert_apply(pre, z);
            return w;
        });
        if (!run.exited) {
            return false;
        }
        out = obs(run.trace.points, cfg.x1, cfg.x2);
        return true;
    };

    parallel_for(cfg.n_samples, cfg.workers, [&](std::size_t i) {
        Row& row = rows[i];
        try {
            const PairDriver d = build_pair_driver(cfg.kappa, cfg.x1, cfg.x2, dt, std::max(n1, n2),
                                                   {cfg.seed, i}, opt);
            const SideRun s1 = run_side(d.side[0].xi.truncated(n1), h1);
            const SideRun s2 = run_side(d.side[1].xi.truncated(n2), h2);
            if (!s1.exited || !s2.exited) {
                return;
            }
            const EnsemblePair pair = make_ensemble_pair(d, s1.exit_index, s2.exit_index);
            MartingaleField field(pair);
            const MartingaleRecord rec = field.record(s1.exit_index, s2.exit_index);
            if (!rec.valid) {
                return;
            }
            row.weight = rec.M;
            row.a = obs(s1.trace.points, cfg.x1, cfg.x2);
            row.a_ok = true;
            row.b_ok = conditional(d, pair.comp[1], s2.exit_index, i, 2, row.b);
            row.null_ok = conditional(d, pair.comp[1], 0, i, 3, row.null_b);
        } catch (const std::runtime_error&) {
        } catch (const std::domain_error&) {
        }
    });

    SuiteReport r;
    r.suite = "coupling";
    r.kappa = cfg.kappa;
    r.seed = cfg.seed;
    r.sample_columns = {"sample", "weight", "reweighted", "direct", "null_direct"};
    std::vector<double> wa, xa, xb, nb_vals;
    std::size_t b_discards = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        if (!row.a_ok) {
            continue;
        }
        wa.push_back(row.weight);
        xa.push_back(row.a);
        if (row.b_ok) {
            xb.push_back(row.b);
        } else {
            ++b_discards;
        }
        if (row.null_ok) {
            nb_vals.push_back(row.null_b);
        }
        r.sample_rows.push_back({static_cast<double>(i), row.weight, row.a,
                                 row.b_ok ? row.b : kInf, row.null_ok ? row.null_b : kInf});
    }
    r.n = xa.size();
    if (!check_discards(r, cfg.n_samples, cfg.max_discard_rate) ||
        static_cast<double>(b_discards) > cfg.max_discard_rate * static_cast<double>(r.n)) {
        r.aborted = true;
        r.pass = false;
        if (r.abort_reason.empty()) {
            r.abort_reason = "too many direct-ensemble discards";
        }
        r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        return r;
    }
    const MeanStats st = mean_stats(wa);
    r.mean = st.mean;
    r.std_error = st.se;
    const auto [mn, mx] = std::minmax_element(wa.begin(), wa.end());
    r.tests.push_back({"weights_bounded", *mn, 0.0, *mx, 0.0,
                       *mn > 0.0 && std::isfinite(*mx), r.n, r.discards});
    const KsResult ks = weighted_ks(xa, wa, xb, cfg.alpha);
    r.tests.push_back(ks_test("coupling_ks", ks, r.n, b_discards, ks.n_eff >= cfg.min_effective_n));
    const KsResult null_ks = ks_two_sample(xa, nb_vals, cfg.alpha);
    r.tests.push_back(ks_test("null_ks", null_ks, r.n, r.n - nb_vals.size()));
    r.pass = all_pass(r.tests);
    r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------- reversibility

SuiteReport run_reversibility_test(const ExperimentConfig& cfg)
{
    cfg.validate();
    if (cfg.kappa > 4.0) {
        throw ParameterError("reversibility test requires kappa in (0, 4]");
    }
    const auto t0 = Clock::now();
    const double dt = cfg.step();
    const double width = cfg.x2 - cfg.x1;
    const HullSpec ref_f = HalfDisk{cfg.x1, cfg.reference_radius * width};
    const HullSpec ref_r = ref_f.mirrored(0.5 * (cfg.x1 + cfg.x2));
    // Capacity horizon t_max = hcap bound / 2 + dt: every trace leaves first.
    const std::size_t n = static_cast<std::size_t>(
                              std::ceil(ref_f.hcap_upper_bound() / (2.0 * dt))) + 1;
    std::vector<Observable> obs = cfg.observables;
    if (obs.empty()) {
        obs = default_config().observables;
    }
    const SdeOptions opt = sde_options(cfg);
    const std::size_t k = obs.size();

    struct Row {
        bool ok[3] = {false, false, false};
        std::vector<double> v[3];
    };
    std::vector<Row> rows(cfg.n_samples);
    parallel_for(cfg.n_samples, cfg.workers, [&](std::size_t i) {
        Row& row = rows[i];
        const struct {
            double start, force;
            RngSpec rng;
            std::uint32_t lane;
            const HullSpec* hull;
        } runs[3] = {{cfg.x1, cfg.x2, {cfg.seed, i}, 0, &ref_f},
                     {cfg.x2, cfg.x1, {cfg.seed, i}, 1, &ref_r},
                     {cfg.x1, cfg.x2, {cfg.seed, kIndependentStreams + i}, 0, &ref_f}};
        for (int e = 0; e < 3; ++e) {
            try {
                const SideDriver s = sle_kr_driver(cfg.kappa, runs[e].start, runs[e].force, dt, n,
                                                   runs[e].rng, opt, runs[e].lane);
                const SideRun run = run_side(s.xi, *runs[e].hull);
                if (!run.exited) {
                    continue;
                }
                for (const Observable& o : obs) {
                    row.v[e].push_back(o(run.trace.points, cfg.x1, cfg.x2));
                }
                row.ok[e] = true;
            } catch (const std::runtime_error&) {
            } catch (const std::domain_error&) {
            }
        }
    });

    SuiteReport r;
    r.suite = "reversibility";
    r.kappa = cfg.kappa;
    r.seed = cfg.seed;
    r.sample_columns = {"sample", "ensemble"};
    for (const Observable& o : obs) {
        r.sample_columns.push_back(o.name());
    }
    std::vector<std::vector<double>> cols[3];
    for (auto& c : cols) {
        c.assign(k, {});
    }
    std::size_t discards[3] = {0, 0, 0};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int e = 0; e < 3; ++e) {
            if (!rows[i].ok[e]) {
                ++discards[e];
                continue;
            }
            std::vector<double> line = {static_cast<double>(i), static_cast<double>(e)};
            for (std::size_t o = 0; o < k; ++o) {
                cols[e][o].push_back(rows[i].v[e][o]);
                line.push_back(rows[i].v[e][o]);
            }
            r.sample_rows.push_back(line);
        }
    }
    r.n = std::min(cols[0].empty() ? 0 : cols[0][0].size(), cols[1].empty() ? 0 : cols[1][0].size());
    const std::size_t worst = *std::max_element(discards, discards + 3);
    r.discards = worst;
    if (static_cast<double>(worst) > cfg.max_discard_rate * static_cast<double>(cfg.n_samples)) {
        r.aborted = true;
        r.pass = false;
        r.abort_reason = "too many traces failed to leave the reference hull";
        r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        return r;
    }
    double min_p = 1.0;
    for (std::size_t o = 0; o < k; ++o) {
        KsResult main = ks_two_sample(cols[0][o], cols[1][o], cfg.alpha);
        KsResult null = ks_two_sample(cols[0][o], cols[2][o], cfg.alpha);
        for (auto [label, ks] : {std::pair{"ks_", main}, std::pair{"null_", null}}) {
            TestResult t;
            t.name = std::string(label) + obs[o].name();
            t.estimate = ks.p_value;
            t.std_error = 0.0;
            t.statistic = ks.statistic;
            t.threshold = cfg.alpha;
            t.pass = ks.p_value >= cfg.alpha;
            t.n = static_cast<std::size_t>(ks.m);
            t.discards = worst;
            r.tests.push_back(t);
        }
        min_p = std::min(min_p, main.p_value);
    }
    r.mean = min_p;
    r.pass = all_pass(r.tests);
    r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------- output

std::string report_json(const SuiteReport& report)
{
    nlohmann::ordered_json j;
    j["suite"] = report.suite;
    j["kappa"] = num(report.kappa);
    j["seed"] = report.seed;
    j["n"] = report.n;
    j["discards"] = report.discards;
    j["mean"] = num(report.mean);
    j["stderr"] = num(report.std_error);
    j["pass"] = report.pass;
    j["aborted"] = report.aborted;
    if (report.aborted) {
        j["abort_reason"] = report.abort_reason;
    }
    j["tests"] = nlohmann::ordered_json::array();
    for (const auto& t : report.tests) {
        nlohmann::ordered_json e;
        e["name"] = t.name;
        e["estimate"] = num(t.estimate);
        e["stderr"] = num(t.std_error);
        e["statistic"] = num(t.statistic);
        e["threshold"] = num(t.threshold);
        e["pass"] = t.pass;
        e["n"] = t.n;
        e["discards"] = t.discards;
        j["tests"].push_back(e);
    }
    return j.dump(2) + "\n";
}

std::string report_csv(const SuiteReport& report)
{
    std::ostringstream out;
    out.precision(17);
    out << "suite,test,estimate,stderr,statistic,threshold,pass,n,discards\n";
    for (const auto& t : report.tests) {
        out << report.suite << ',' << t.name << ',' << t.estimate << ',' << t.std_error << ','
            << t.statistic << ',' << t.threshold << ',' << (t.pass ? 1 : 0) << ',' << t.n << ','
            << t.discards << '\n';
    }
    return out.str();
}

std::string samples_csv(const SuiteReport& report)
{
    std::ostringstream out;
    out.precision(17);
    for (std::size_t c = 0; c < report.sample_columns.size(); ++c) {
        out << (c ? "," : "") << report.sample_columns[c];
    }
    out << '\n';
    for (const auto& row : report.sample_rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << (c ? "," : "") << row[c];
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace slelab
