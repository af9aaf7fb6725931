#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "slelab/experiments.hpp"

namespace slelab {

// Flat key=value run configuration: ExperimentConfig plus output switches.
struct RunConfig {
    ExperimentConfig experiment = default_config();
    std::string out_dir;         // empty: report to stdout only
    std::string format = "json";  // json | csv
    bool svg = false;
    bool dump_samples = false;
    bool grid = false;            // martingale: export the M grid of sample 0
    std::size_t grid_cells = 20;
    std::size_t n_steps = 1000;   // trace subcommand
    std::string driver = "kr";    // trace subcommand: kr | chordal
};

// "halfdisk C R" or "polygon x,y x,y ..."
HullSpec parse_hull(const std::string& text);
// "<hull> ; <hull>"
HullPair parse_hull_pair(const std::string& text);

// Applies the lines of `in` on top of `base`. Unknown keys and malformed
// values throw ConfigError; physical parameters are validated at the end.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

std::string trace_csv(const Trace& tr);
// Polylines in the fixed viewport [x1 - 1, x2 + 1] x [0, 2 (x2 - x1)].
std::string svg_figure(double x1, double x2, const std::vector<std::vector<Complex>>& curves,
                       const std::vector<HullSpec>& hulls);
// Martingale grid of one pair: t1,t2,A10..A23,E,N,I,M,valid.
std::string martingale_grid_csv(MartingaleField& field, std::size_t n1, std::size_t n2,
                                std::size_t cells);

// Exit codes: 0 pass, 1 statistical failure, 2 usage or config error,
// 3 numerical abort.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace slelab
