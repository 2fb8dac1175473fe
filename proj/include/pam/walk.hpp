#pragma once
// Continuous-time simple random walk on Z^d with generator kappa*Delta:
// total jump rate 2*d*kappa, uniform neighbor choice, exponential holding
// times.  Paths are stored exactly (jump times + visited sites); all path
// functionals below are exact on the piecewise-constant trajectory.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pam/env_field.hpp"
#include "pam/lattice.hpp"
#include "pam/rng.hpp"
#include "pam/stats.hpp"

namespace pam {

struct WalkSpec {
    int d = 1;
    double kappa = 1.0;
    Site start{};

    void validate() const {
        if (d < 1 || d > 3) throw std::invalid_argument("walk: d must be 1, 2 or 3");
        if (!(kappa >= 0)) throw std::invalid_argument("walk: kappa must be >= 0");
    }
};

// Right-continuous path on [0, T]: positions[k] is the site after the k-th
// jump (positions[0] = start, before any jump).
struct PolymerPath {
    int d = 1;
    double T = 0;
    std::vector<double> jump_times;
    std::vector<Site> positions;

    const Site& position_at(double t) const {
        if (t < 0 || t > T) throw std::domain_error("position_at: t outside [0, T]");
        // number of jump times <= t
        std::size_t lo = 0, hi = jump_times.size();
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (jump_times[mid] <= t) lo = mid + 1; else hi = mid;
        }
        return positions[lo];
    }
};

inline PolymerPath sample_path(const WalkSpec& spec, double T, RngStream& rng) {
    spec.validate();
    if (!(T >= 0)) throw std::invalid_argument("sample_path: T must be >= 0");
    PolymerPath p;
    p.d = spec.d;
    p.T = T;
    p.positions.push_back(spec.start);
    double rate = 2.0 * spec.d * spec.kappa;
    if (rate == 0) return p; // frozen walk
    double t = rng.next_exponential(rate);
    while (t < T) {
        std::uint32_t c = rng.next_below(static_cast<std::uint32_t>(2 * spec.d));
        Site next = p.positions.back();
        next[static_cast<int>(c) / 2] += (c % 2 == 0) ? 1 : -1;
        p.jump_times.push_back(t);
        p.positions.push_back(next);
        t += rng.next_exponential(rate);
    }
    return p;
}

// Raised when a path functional touches a site outside an absorbing box.
struct OutOfBoxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// H_T(X) = sum_x int_0^T 1{X_s = x} dB^x_s: for the stored path this is the
// exact finite sum of per-site increments over the holding intervals.
// Throws OutOfBoxError if the path leaves an absorbing box (callers decide
// whether that means zero contribution).
template <class Field>
double hamiltonian(const PolymerPath& path, Field& field) {
    const LatticeSpec& lat = field.lattice();
    double acc = 0;
    double t0 = 0;
    for (std::size_t k = 0; k < path.positions.size(); ++k) {
        double t1 = (k < path.jump_times.size()) ? path.jump_times[k] : path.T;
        const Site& x = path.positions[k];
        if (lat.boundary == Boundary::absorbing && !lat.contains(x))
            throw OutOfBoxError("path left the box at site " + site_to_string(x, lat.d));
        if (t1 > t0) acc += field.increment(x, t0, t1);
        t0 = t1;
    }
    return acc;
}

// Lebesgue time the space-time graph (t, X_t) spends inside the region union.
inline double occupation_time(const PolymerPath& path, const std::vector<TiltRegion>& regions) {
    std::vector<std::unordered_set<std::uint64_t>> member;
    member.reserve(regions.size());
    for (const TiltRegion& r : regions) {
        member.emplace_back();
        for (const Site& s : r.sites) member.back().insert(pack_site(s, path.d));
    }
    double acc = 0;
    double t0 = 0;
    for (std::size_t k = 0; k < path.positions.size(); ++k) {
        double t1 = (k < path.jump_times.size()) ? path.jump_times[k] : path.T;
        std::uint64_t code = pack_site(path.positions[k], path.d);
        for (std::size_t i = 0; i < regions.size(); ++i) {
            if (member[i].count(code) == 0) continue;
            double lo = std::max(t0, regions[i].t0), hi = std::min(t1, regions[i].t1);
            if (hi > lo) acc += hi - lo;
        }
        t0 = t1;
    }
    return acc;
}

// Time two independent paths on the same horizon spend at the same site.
inline double coincidence_time(const PolymerPath& a, const PolymerPath& b) {
    if (a.T != b.T) throw std::invalid_argument("coincidence_time: paths have different horizons");
    double acc = 0;
    double t = 0;
    std::size_t ia = 0, ib = 0;
    while (t < a.T) {
        double na = (ia < a.jump_times.size()) ? a.jump_times[ia] : a.T;
        double nb = (ib < b.jump_times.size()) ? b.jump_times[ib] : b.T;
        double next = std::min(na, nb);
        if (a.positions[ia] == b.positions[ib]) acc += next - t;
        if (ia < a.jump_times.size() && na == next) ++ia;
        if (ib < b.jump_times.size() && nb == next) ++ib;
        t = next;
    }
    return acc;
}

inline double max_displacement(const PolymerPath& path, Norm norm) {
    double m = 0;
    for (const Site& s : path.positions) m = std::max(m, site_norm(s, path.d, norm));
    return m;
}

// P[ max_{t <= n} |X_t| > C sqrt(n) ] by Monte Carlo (start at the origin).
inline Estimate exit_probability(const WalkSpec& spec, double n, double C, long reps,
                                 std::uint64_t seed, Norm norm = Norm::euclidean) {
    spec.validate();
    if (reps < 1) throw std::invalid_argument("exit_probability: reps must be >= 1");
    double threshold = C * std::sqrt(n);
    Moments m;
    for (long r = 0; r < reps; ++r) {
        RngStream rng(derive_seed(seed, 0x45584954u /*EXIT*/, static_cast<std::uint64_t>(r)));
        PolymerPath p = sample_path(spec, n, rng);
        m.add(max_displacement(p, norm) > threshold ? 1.0 : 0.0);
    }
    Estimate e;
    e.value = m.mean;
    e.stderror = m.stderror();
    e.replicas = m.n;
    e.log_value = m.mean > 0 ? std::log(m.mean) : -std::numeric_limits<double>::infinity();
    e.seed = seed;
    return e;
}

} // namespace pam
