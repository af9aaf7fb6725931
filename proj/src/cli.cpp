#include "slelab/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace slelab {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty() || !std::isfinite(x)) {
        throw ConfigError("bad number for '" + key + "': " + v);
    }
    return x;
}

std::uint64_t to_count(const std::string& key, const std::string& v)
{
    const double x = to_double(key, v);
    if (x < 0.0 || x != std::floor(x) || x > 1e18) {
        throw ConfigError("'" + key + "' must be a nonnegative integer: " + v);
    }
    return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError("bad boolean for '" + key + "': " + v);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::string now_stamp()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot write " + path.string());
    }
    f << text;
}

// Sample 0 of a suite, for figures and grid export.
struct PreviewPair {
    PairDriver driver;
    std::size_t exit[2] = {0, 0};
    Trace traces[2];
};

PreviewPair preview_pair(const ExperimentConfig& cfg, const HullPair& hulls)
{
    PreviewPair p;
    const double dt = cfg.step();
    const HullSpec* h[2] = {&hulls.first, &hulls.second};
    std::size_t n = 0;
    for (const HullSpec* hull : h) {
        n = std::max(n, static_cast<std::size_t>(std::ceil(hull->hcap_upper_bound() / (2.0 * dt))) + 2);
    }
    SdeOptions opt;
    opt.floor_guard = cfg.floor_guard;
    p.driver = build_pair_driver(cfg.kappa, cfg.x1, cfg.x2, dt, n, {cfg.seed, 0}, opt);
    for (int j = 0; j < 2; ++j) {
        const DrivingPath& path = p.driver.side[j].xi;
        ExitTime ex;
        p.traces[j] = trace_until_exit(path, evolve(path), *h[j], ex);
        p.exit[j] = ex.exited ? ex.index : path.steps();
    }
    return p;
}

std::string svg_for_suite(const std::string& suite, const ExperimentConfig& cfg)
{
    std::vector<std::vector<Complex>> curves;
    std::vector<HullSpec> hulls;
    if (suite == "reversibility") {
        const HullSpec f = HalfDisk{cfg.x1, cfg.reference_radius * (cfg.x2 - cfg.x1)};
        const HullSpec r = f.mirrored(0.5 * (cfg.x1 + cfg.x2));
        const double dt = cfg.step();
        const std::size_t n =
            static_cast<std::size_t>(std::ceil(f.hcap_upper_bound() / (2.0 * dt))) + 1;
        SdeOptions opt;
        opt.floor_guard = cfg.floor_guard;
        const SideDriver a = sle_kr_driver(cfg.kappa, cfg.x1, cfg.x2, dt, n, {cfg.seed, 0}, opt, 0);
        const SideDriver b = sle_kr_driver(cfg.kappa, cfg.x2, cfg.x1, dt, n, {cfg.seed, 0}, opt, 1);
        ExitTime ex;
        curves.push_back(trace_until_exit(a.xi, evolve(a.xi), f, ex).points);
        curves.push_back(trace_until_exit(b.xi, evolve(b.xi), r, ex).points);
        hulls = {f, r};
    } else {
        for (const auto& [a, b] : cfg.hull_pairs) {
            hulls.push_back(a);
            hulls.push_back(b);
        }
        if (!cfg.hull_pairs.empty()) {
            const PreviewPair p = preview_pair(cfg, cfg.hull_pairs.front());
            curves.push_back(p.traces[0].points);
            curves.push_back(p.traces[1].points);
        }
    }
    return svg_figure(cfg.x1, cfg.x2, curves, hulls);
}

SuiteReport run_suite(const std::string& name, const ExperimentConfig& cfg)
{
    if (name == "martingale") {
        return run_martingale_test(cfg);
    }
    if (name == "mstar") {
        return run_mstar_test(cfg);
    }
    if (name == "identities") {
        return run_identity_checks(cfg);
    }
    if (name == "coupling") {
        return run_coupling_test(cfg);
    }
    return run_reversibility_test(cfg);
}

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples;
    std::optional<double> kappa;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<unsigned> workers;
    bool svg = false;
    bool dump_samples = false;
    bool grid = false;
};

int run_trace(const RunConfig& rc, std::ostream& out, const std::filesystem::path& dir)
{
    const ExperimentConfig& cfg = rc.experiment;
    const double dt = cfg.step();
    DrivingPath path;
    if (rc.driver == "chordal") {
        path = standard_sle_driver(cfg.kappa, dt, rc.n_steps, {cfg.seed, 0});
        for (double& v : path.values) {
            v += cfg.x1;
        }
    } else {
        SdeOptions opt;
        opt.floor_guard = cfg.floor_guard;
        path = sle_kr_driver(cfg.kappa, cfg.x1, cfg.x2, dt, rc.n_steps, {cfg.seed, 0}, opt, 0).xi;
    }
    const MapComposition comp = evolve(path);
    const Trace tr = trace(path, comp);
    double top = 0.0;
    for (const Complex& z : tr.points) {
        top = std::max(top, z.imag());
    }
    nlohmann::ordered_json j;
    j["suite"] = "trace";
    j["kappa"] = cfg.kappa;
    j["seed"] = cfg.seed;
    j["driver"] = rc.driver;
    j["n"] = path.steps();
    j["final_time"] = path.final_time();
    j["hcap"] = hcap(comp);
    j["max_height"] = top;
    j["pass"] = true;
    const std::string csv = trace_csv(tr);
    const std::string json = j.dump(2) + "\n";
    out << (rc.format == "csv" ? csv : json);
    if (!rc.out_dir.empty()) {
        write_file(dir / "trace.csv", csv);
        write_file(dir / "trace.json", json);
    }
    if (rc.svg) {
        write_file(dir / "trace.svg", svg_figure(cfg.x1, cfg.x2, {tr.points}, {}));
    }
    return 0;
}

}  // namespace

// ---------------------------------------------------------------- config

HullSpec parse_hull(const std::string& text)
{
    std::istringstream in(text);
    std::string kind;
    in >> kind;
    if (kind == "halfdisk") {
        std::string c, r, extra;
        if (!(in >> c >> r) || (in >> extra)) {
            throw ConfigError("halfdisk needs a center and a radius: " + text);
        }
        const double radius = to_double("radius", r);
        if (!(radius > 0.0)) {
            throw ConfigError("hull radius must be positive: " + text);
        }
        return HalfDisk{to_double("center", c), radius};
    }
    if (kind == "polygon") {
        Polygon poly;
        std::string v;
        while (in >> v) {
            const auto comma = v.find(',');
            if (comma == std::string::npos) {
                throw ConfigError("polygon vertices are x,y pairs: " + text);
            }
            poly.vertices.emplace_back(to_double("x", v.substr(0, comma)),
                                       to_double("y", v.substr(comma + 1)));
        }
        try {
            return HullSpec(std::move(poly));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    throw ConfigError("unknown hull kind: " + text);
}

HullPair parse_hull_pair(const std::string& text)
{
    const auto semi = text.find(';');
    if (semi == std::string::npos) {
        throw ConfigError("a hull pair is '<hull> ; <hull>': " + text);
    }
    return {parse_hull(trim(text.substr(0, semi))), parse_hull(trim(text.substr(semi + 1)))};
}

RunConfig parse_config(std::istream& in, RunConfig rc)
{
    ExperimentConfig& c = rc.experiment;
    bool pairs_seen = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string v = trim(line.substr(eq + 1));
        const std::map<std::string, double*> reals = {
            {"kappa", &c.kappa},
            {"x1", &c.x1},
            {"x2", &c.x2},
            {"dt", &c.dt},
            {"alpha", &c.alpha},
            {"stderr_mult", &c.stderr_mult},
            {"stderr_max", &c.stderr_max},
            {"max_discard_rate", &c.max_discard_rate},
            {"floor_guard", &c.floor_guard},
            {"identity_time", &c.identity_time},
            {"lemma_delta_t", &c.lemma_delta_t},
            {"commutation_tol", &c.commutation_tol},
            {"lemma_tol", &c.lemma_tol},
            {"integral_tol", &c.integral_tol},
            {"min_effective_n", &c.min_effective_n},
            {"reference_radius", &c.reference_radius},
        };
        const std::map<std::string, std::size_t*> counts = {
            {"samples", &c.n_samples},
            {"scaling_samples", &c.scaling_samples},
            {"identity_samples", &c.identity_samples},
            {"identity_grid", &c.identity_grid},
            {"n_steps", &rc.n_steps},
            {"grid_cells", &rc.grid_cells},
        };
        if (auto it = reals.find(key); it != reals.end()) {
            *it->second = to_double(key, v);
        } else if (auto ct = counts.find(key); ct != counts.end()) {
            *ct->second = static_cast<std::size_t>(to_count(key, v));
        } else if (key == "seed") {
            c.seed = to_count(key, v);
        } else if (key == "workers") {
            c.workers = static_cast<unsigned>(to_count(key, v));
        } else if (key == "pair") {
            if (!pairs_seen) {
                c.hull_pairs.clear();
                pairs_seen = true;
            }
            c.hull_pairs.push_back(parse_hull_pair(v));
        } else if (key == "observables") {
            c.observables.clear();
            for (const std::string& name : split(v, ',')) {
                c.observables.push_back(Observable::parse(name));
            }
        } else if (key == "out") {
            rc.out_dir = v;
        } else if (key == "format") {
            if (v != "json" && v != "csv") {
                throw ConfigError("format must be json or csv");
            }
            rc.format = v;
        } else if (key == "svg") {
            rc.svg = to_bool(key, v);
        } else if (key == "dump_samples") {
            rc.dump_samples = to_bool(key, v);
        } else if (key == "grid") {
            rc.grid = to_bool(key, v);
        } else if (key == "driver") {
            if (v != "kr" && v != "chordal") {
                throw ConfigError("driver must be kr or chordal");
            }
            rc.driver = v;
        } else {
            throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(lineno));
        }
    }
    return rc;
}

RunConfig load_config(const std::string& path, RunConfig base)
{
    std::ifstream f(path);
    if (!f) {
        throw ConfigError("cannot read config " + path);
    }
    return parse_config(f, std::move(base));
}

// ---------------------------------------------------------------- output

std::string trace_csv(const Trace& tr)
{
    std::ostringstream out;
    out.precision(17);
    out << "t,re,im\n";
    for (std::size_t k = 0; k < tr.points.size(); ++k) {
        out << tr.times[k] << ',' << tr.points[k].real() << ',' << tr.points[k].imag() << '\n';
    }
    return out.str();
}

std::string svg_figure(double x1, double x2, const std::vector<std::vector<Complex>>& curves,
                       const std::vector<HullSpec>& hulls)
{
    const double left = x1 - 1.0;
    const double width = x2 - x1 + 2.0;
    const double height = 2.0 * (x2 - x1);
    const double px = 800.0;
    const double scale = px / width;
    auto pt = [&](Complex z, std::ostringstream& s) {
        s << (z.real() - left) * scale << ',' << (height - z.imag()) * scale << ' ';
    };
    std::ostringstream s;
    s.precision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px << "\" height=\""
      << height * scale << "\" viewBox=\"0 0 " << px << ' ' << height * scale << "\">\n";
    s << "<line x1=\"0\" y1=\"" << height * scale << "\" x2=\"" << px << "\" y2=\""
      << height * scale << "\" stroke=\"black\"/>\n";
    for (const HullSpec& h : hulls) {
        s << "<polyline fill=\"none\" stroke=\"gray\" stroke-dasharray=\"4 3\" points=\"";
        for (const Complex& z : h.boundary(128)) {
            pt(z, s);
        }
        s << "\"/>\n";
    }
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (std::size_t i = 0; i < curves.size(); ++i) {
        s << "<polyline fill=\"none\" stroke=\"" << colors[i % 4] << "\" points=\"";
        for (const Complex& z : curves[i]) {
            pt(z, s);
        }
        s << "\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string martingale_grid_csv(MartingaleField& field, std::size_t n1, std::size_t n2,
                                std::size_t cells)
{
    std::ostringstream out;
    out.precision(17);
    out << "t1,t2,A10,A11,A12,A13,A20,A21,A22,A23,E,N,I,M,valid\n";
    for (std::size_t i1 : lattice(n1, cells)) {
        for (std::size_t i2 : lattice(n2, cells)) {
            MartingaleRecord r;
            try {
                r = field.record(i1, i2);
            } catch (const InvariantError&) {
                r.i1 = i1;
                r.i2 = i2;
                r.t1 = field.pair().time(i1);
                r.t2 = field.pair().time(i2);
                r.valid = false;
            }
            out << r.t1 << ',' << r.t2;
            for (const auto& side : r.A.a) {
                for (double a : side) {
                    out << ',' << a;
                }
            }
            out << ',' << r.E << ',' << r.N << ',' << r.I << ',' << r.M << ',' << (r.valid ? 1 : 0)
                << '\n';
        }
    }
    return out.str();
}

// ---------------------------------------------------------------- entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Numerical lab for two-sided chordal Loewner chains and SLE reversibility",
                 "sle_lab"};
    app.require_subcommand(1);
    Overrides ov;
    const std::vector<std::pair<std::string, std::string>> subs = {
        {"trace", "Simulate one trace and export it as CSV (t,re,im)"},
        {"martingale", "Expectation of M at the hull exit times"},
        {"mstar", "Spliced martingale M* over a hull family"},
        {"identities", "Commutation, finite-difference and integral identity checks"},
        {"coupling", "Reweighted pairs versus the direct conditional ensemble"},
        {"reversibility", "Forward versus reversed trace ensembles"},
    };
    for (const auto& [name, help] : subs) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", ov.config, "key=value config file");
        sub->add_option("--seed", ov.seed, "RNG seed");
        sub->add_option("--samples", ov.samples, "number of samples");
        sub->add_option("--kappa", ov.kappa, "SLE parameter");
        sub->add_option("--out", ov.out, "output directory");
        sub->add_option("--format", ov.format, "report format")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--workers", ov.workers, "worker threads (default $SLE_LAB_WORKERS or 1)");
        sub->add_flag("--svg", ov.svg, "emit trace figures as SVG");
        sub->add_flag("--dump-samples", ov.dump_samples, "write per-sample CSV");
        sub->add_flag("--grid", ov.grid, "martingale: export the M grid of sample 0");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = &app;
        for (const CLI::App* s : app.get_subcommands()) {
            target = s;
        }
        out << target->help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ExtrasError& e) {
        err << "ERROR: unknown flag: " << e.what() << "\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        err << "ERROR: usage: " << e.what() << "\n";
        return 2;
    }
    const std::string suite = app.get_subcommands().front()->get_name();

    const auto t0 = std::chrono::steady_clock::now();
    RunConfig rc;
    rc.experiment.workers = default_workers();
    try {
        if (!ov.config.empty()) {
            rc = load_config(ov.config, rc);
        }
        ExperimentConfig& c = rc.experiment;
        if (ov.seed) {
            c.seed = *ov.seed;
        }
        if (ov.samples) {
            c.n_samples = *ov.samples;
        }
        if (ov.kappa) {
            c.kappa = *ov.kappa;
        }
        if (ov.out) {
            rc.out_dir = *ov.out;
        }
        if (ov.format) {
            rc.format = *ov.format;
        }
        if (ov.workers) {
            c.workers = *ov.workers;
        }
        rc.svg = rc.svg || ov.svg;
        rc.dump_samples = rc.dump_samples || ov.dump_samples;
        rc.grid = rc.grid || ov.grid;
        c.validate();
    } catch (const ConfigError& e) {
        err << "ERROR: config: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "ERROR: config: " << e.what() << "\n";
        return 2;
    }

    const std::filesystem::path dir = rc.out_dir.empty() ? "." : rc.out_dir;
    int code = 0;
    std::string summary;
    try {
        std::filesystem::create_directories(dir);
        if (suite == "trace") {
            code = run_trace(rc, out, dir);
            summary = "trace written";
        } else {
            const SuiteReport r = run_suite(suite, rc.experiment);
            const std::string payload = rc.format == "csv" ? report_csv(r) : report_json(r);
            out << payload;
            if (!rc.out_dir.empty()) {
                write_file(dir / (suite + "." + rc.format), payload);
            }
            if (rc.dump_samples) {
                write_file(dir / (suite + "_samples.csv"), samples_csv(r));
            }
            if (rc.grid && suite == "martingale" && !rc.experiment.hull_pairs.empty()) {
                const PreviewPair p = preview_pair(rc.experiment, rc.experiment.hull_pairs.front());
                const EnsemblePair pair = make_ensemble_pair(p.driver, p.exit[0], p.exit[1]);
                MartingaleField field(pair);
                write_file(dir / "martingale_grid.csv",
                           martingale_grid_csv(field, p.exit[0], p.exit[1], rc.grid_cells));
            }
            if (rc.svg) {
                write_file(dir / (suite + ".svg"), svg_for_suite(suite, rc.experiment));
            }
            if (r.aborted) {
                err << "ERROR: numerical abort: " << r.abort_reason << "\n";
                code = 3;
            } else {
                code = r.pass ? 0 : 1;
            }
            summary = r.aborted ? "aborted" : (r.pass ? "pass" : "fail");
        }
    } catch (const ConfigError& e) {
        err << "ERROR: config: " << e.what() << "\n";
        return 2;
    } catch (const ParameterError& e) {
        err << "ERROR: config: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "ERROR: io: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "ERROR: numerical abort: " << e.what() << "\n";
        return 3;
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rc.out_dir.empty()) {
        return code;
    }
    std::ofstream log(dir / "run.log", std::ios::app);
    if (log) {
        log << now_stamp() << ' ' << suite << " seed=" << rc.experiment.seed
            << " samples=" << rc.experiment.n_samples << " workers=" << rc.experiment.workers
            << " wall_seconds=" << std::fixed << std::setprecision(3) << wall << ' ' << summary
            << '\n';
    }
    return code;
}

}  // namespace slelab
