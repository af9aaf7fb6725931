#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace slelab {

class MartingaleField;

// Exit-time rectangles [0, T1^m] x [0, T2^m], m = 1..n, and the splice order.
struct SpliceIndex {
    std::vector<std::pair<double, double>> exits;  // exits[m - 1] = (T1^m, T2^m)
    std::vector<std::size_t> S;                    // retained indices (1-based), ascending
    std::vector<std::size_t> sigma;                // S sorted by T1 ascending
    double infinity = 0.0;                         // sentinel for t = +inf

    std::size_t size() const { return sigma.size(); }
    // T1^{sigma(k)}, T2^{sigma(k)} for k = 0..|S|+1 with the sentinels.
    double T1(std::size_t k) const;
    double T2(std::size_t k) const;
    // Whether (t1, t2) lies in one of the rectangles.
    bool covers(double t1, double t2) const;
};

inline constexpr double kSpliceTieTolerance = 1e-12;

SpliceIndex select_S(const std::vector<std::pair<double, double>>& exits);

// M on the admissible region; must return 1 on the axes.
using MFunction = std::function<double(double, double)>;

// Cells (k1, k2) containing (t1, t2) per the default location rule.
std::pair<std::size_t, std::size_t> locate_cells(const SpliceIndex& idx, double t1, double t2);

double mstar_eval(double t1, double t2, const SpliceIndex& idx, const MFunction& M);
// Evaluation with a caller-chosen cell pair; used for well-definedness checks
// on cell boundaries.
double mstar_eval_cells(double t1, double t2, std::size_t k1, std::size_t k2,
                        const SpliceIndex& idx, const MFunction& M);

// M evaluator on the time lattice of a MartingaleField, with bilinear
// interpolation between lattice nodes. Throws InvariantError outside the
// admissible region of `idx`.
class MEvaluator {
public:
    MEvaluator(MartingaleField& field, const SpliceIndex& idx);
    double operator()(double t1, double t2) const;
    MFunction function() const;

private:
    MartingaleField* field_;
    const SpliceIndex* idx_;
};

}  // namespace slelab
