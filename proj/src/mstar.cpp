#include "slelab/mstar.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "slelab/ensemble.hpp"

namespace slelab {

namespace {

bool tie(double a, double b) { return std::abs(a - b) < kSpliceTieTolerance; }
bool le(double a, double b) { return a <= b + kSpliceTieTolerance; }

}  // namespace

double SpliceIndex::T1(std::size_t k) const
{
    if (k == 0) {
        return 0.0;
    }
    if (k > sigma.size()) {
        return infinity;
    }
    return exits[sigma[k - 1] - 1].first;
}

double SpliceIndex::T2(std::size_t k) const
{
    if (k == 0) {
        return infinity;
    }
    if (k > sigma.size()) {
        return 0.0;
    }
    return exits[sigma[k - 1] - 1].second;
}

bool SpliceIndex::covers(double t1, double t2) const
{
    if (t1 <= 0.0 || t2 <= 0.0) {
        return true;
    }
    for (const auto& [a, b] : exits) {
        if (le(t1, a) && le(t2, b)) {
            return true;
        }
    }
    return false;
}

SpliceIndex select_S(const std::vector<std::pair<double, double>>& exits)
{
    SpliceIndex idx;
    idx.exits = exits;
    const std::size_t n = exits.size();
    double largest = 1.0;
    for (const auto& [a, b] : exits) {
        if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
            throw ParameterError("exit times must be finite and positive");
        }
        largest = std::max({largest, a, b});
    }
    idx.infinity = 1e6 * largest;

    for (std::size_t m = 0; m < n; ++m) {
        bool dominated = false;
        for (std::size_t k = 0; k < n && !dominated; ++k) {
            if (k == m) {
                continue;
            }
            const auto& [a1, a2] = exits[m];
            const auto& [b1, b2] = exits[k];
            if (le(a1, b1) && le(a2, b2)) {
                // Duplicates keep the smaller index.
                dominated = !(tie(a1, b1) && tie(a2, b2)) || k < m;
            }
        }
        if (!dominated) {
            idx.S.push_back(m + 1);
        }
    }
    idx.sigma = idx.S;
    std::sort(idx.sigma.begin(), idx.sigma.end(), [&](std::size_t a, std::size_t b) {
        return exits[a - 1].first < exits[b - 1].first;
    });
    for (std::size_t k = 1; k < idx.sigma.size(); ++k) {
        const auto& prev = exits[idx.sigma[k - 1] - 1];
        const auto& cur = exits[idx.sigma[k] - 1];
        if (tie(prev.first, cur.first) || tie(prev.second, cur.second) ||
            !(prev.second > cur.second)) {
            throw InvariantError("retained rectangles share a coordinate");
        }
    }
    return idx;
}

std::pair<std::size_t, std::size_t> locate_cells(const SpliceIndex& idx, double t1, double t2)
{
    const std::size_t s = idx.size();
    std::size_t k1 = s + 1;
    for (std::size_t k = 1; k <= s; ++k) {
        if (t1 <= idx.T1(k)) {
            k1 = k;
            break;
        }
    }
    std::size_t k2 = 0;
    for (std::size_t k = s; k >= 1; --k) {
        if (t2 <= idx.T2(k)) {
            k2 = k;
            break;
        }
    }
    return {k1, k2};
}

double mstar_eval_cells(double t1, double t2, std::size_t k1, std::size_t k2,
                        const SpliceIndex& idx, const MFunction& M)
{
    if (t1 <= 0.0 || t2 <= 0.0) {
        return 1.0;
    }
    // Saturate at the sentinel: M(t, 0) = M(0, t) = 1 covers the infinite ends.
    const double c1 = std::min(t1, idx.infinity);
    const double c2 = std::min(t2, idx.infinity);
    const std::size_t s = idx.size();
    if (k1 < 1 || k1 > s + 1 || k2 > s || !(le(idx.T1(k1 - 1), c1) && le(c1, idx.T1(k1))) ||
        !(le(idx.T2(k2 + 1), c2) && le(c2, idx.T2(k2)))) {
        std::ostringstream msg;
        msg << "cells (" << k1 << ", " << k2 << ") do not contain (" << t1 << ", " << t2 << ")";
        throw ParameterError(msg.str());
    }
    if (k1 <= k2) {
        return M(c1, c2);
    }
    auto axis_safe = [&](double a, double b) {
        return (a <= 0.0 || b <= 0.0) ? 1.0 : M(a, b);
    };
    double num = axis_safe(idx.T1(k2), c2) * axis_safe(c1, idx.T2(k1));
    for (std::size_t k = k2 + 1; k + 1 <= k1; ++k) {
        num *= axis_safe(idx.T1(k), idx.T2(k));
    }
    double den = 1.0;
    for (std::size_t k = k2; k + 1 <= k1; ++k) {
        den *= axis_safe(idx.T1(k), idx.T2(k + 1));
    }
    return num / den;
}

double mstar_eval(double t1, double t2, const SpliceIndex& idx, const MFunction& M)
{
    const auto [k1, k2] = locate_cells(idx, t1, t2);
    return mstar_eval_cells(t1, t2, k1, k2, idx, M);
}

MEvaluator::MEvaluator(MartingaleField& field, const SpliceIndex& idx) : field_(&field), idx_(&idx)
{
}

double MEvaluator::operator()(double t1, double t2) const
{
    if (t1 <= 0.0 || t2 <= 0.0) {
        return 1.0;
    }
    if (!idx_->covers(t1, t2)) {
        std::ostringstream msg;
        msg << "M requested outside the admissible region at (" << t1 << ", " << t2 << ")";
        throw InvariantError(msg.str());
    }
    const EnsemblePair& pair = field_->pair();
    const double u1 = t1 / pair.dt;
    const double u2 = t2 / pair.dt;
    // Snap values within rounding of a node.
    auto snap = [](double u) {
        const double r = std::round(u);
        return std::abs(u - r) < 1e-9 ? r : u;
    };
    const double v1 = std::min(snap(u1), static_cast<double>(pair.steps(0)));
    const double v2 = std::min(snap(u2), static_cast<double>(pair.steps(1)));
    const auto a1 = static_cast<std::size_t>(std::floor(v1));
    const auto a2 = static_cast<std::size_t>(std::floor(v2));
    const double f1 = v1 - static_cast<double>(a1);
    const double f2 = v2 - static_cast<double>(a2);
    const std::size_t b1 = f1 > 0.0 ? a1 + 1 : a1;
    const std::size_t b2 = f2 > 0.0 ? a2 + 1 : a2;
    if (f1 == 0.0 && f2 == 0.0) {
        return field_->M(a1, a2);
    }
    return (1.0 - f1) * (1.0 - f2) * field_->M(a1, a2) + f1 * (1.0 - f2) * field_->M(b1, a2) +
           (1.0 - f1) * f2 * field_->M(a1, b2) + f1 * f2 * field_->M(b1, b2);
}

MFunction MEvaluator::function() const
{
    return [this](double a, double b) { return (*this)(a, b); };
}

}  // namespace slelab
