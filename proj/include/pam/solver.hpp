#pragma once
// Lattice stochastic heat equation dZ = kappa*Delta Z dt + beta Z dB, the
// Feynman-Kac dual of the polymer partition function: with a delta start,
// total mass at time T equals the in-box partition function Z_T.
//
// Schemes per dt step, with dB the exact Brownian increment of the cell:
//   exponential_euler:  u' = exp(beta dB - beta^2 dt/2) * (u + kappa dt Delta u)
//                       (positivity preserving; the noise factor has mean one
//                       exactly, so E[mass] is conserved on a periodic box)
//   explicit_euler:     u' = (1 + beta dB - beta^2 dt/2) * (u + kappa dt Delta u)
//                       (first-order textbook scheme; carries an O(dt)
//                       downward bias in the mean from the dropped quadratic
//                       term and requires dt * 2 d kappa < 1 for stability)
//
// Fields carry a running log scale so partition functions at exponential
// magnitudes never under/overflow.  Absorbing boxes lose the mass that the
// heat stencil pushes over the edge; the loss is tracked as a truncation
// diagnostic.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pam/env_field.hpp"
#include "pam/lattice.hpp"

namespace pam {

enum class Scheme { exponential_euler, explicit_euler };

inline double floor_pow2(double x) {
    if (!(x > 0)) throw std::invalid_argument("floor_pow2: need x > 0");
    return std::exp2(std::floor(std::log2(x)));
}

struct SolverSpec {
    LatticeSpec lattice;
    double beta = 0.5;
    double kappa = 1.0;
    double T = 1.0;
    double dt = 0; // 0 -> default_dt(*this)
    Scheme scheme = Scheme::exponential_euler;
    Site start{};

    // Largest power of two <= min(0.01, 0.1/(2 d kappa), 0.1/beta^2).
    // Power-of-two steps keep environment queries on the cheap dyadic grid.
    double default_dt() const {
        double raw = 0.01;
        if (kappa > 0) raw = std::min(raw, 0.1 / (2.0 * lattice.d * kappa));
        if (beta > 0) raw = std::min(raw, 0.1 / (beta * beta));
        return floor_pow2(raw);
    }

    double resolved_dt() const { return dt > 0 ? dt : default_dt(); }

    long steps() const {
        double h = resolved_dt();
        long n = std::lround(T / h);
        if (n < 0 || std::abs(static_cast<double>(n) * h - T) > 1e-9 * std::max(1.0, T))
            throw std::invalid_argument("solver: T must be an integer multiple of dt");
        return n;
    }

    void validate() const {
        lattice.validate();
        if (!(beta >= 0)) throw std::invalid_argument("solver: beta must be >= 0");
        if (!(kappa >= 0)) throw std::invalid_argument("solver: kappa must be >= 0");
        if (!(T >= 0)) throw std::invalid_argument("solver: T must be >= 0");
        if (dt < 0) throw std::invalid_argument("solver: dt must be > 0 (or 0 for default)");
        if (!lattice.contains(start))
            throw std::invalid_argument("solver: start site outside box");
        (void)steps();
        if (scheme == Scheme::explicit_euler &&
            resolved_dt() * 2.0 * lattice.d * kappa >= 1.0)
            throw std::invalid_argument(
                "solver: explicit_euler unstable, need dt * 2 d kappa < 1");
    }
};

struct LatticeField {
    LatticeSpec lattice;
    std::vector<double> v;
    double time = 0;
    double log_scale = 0; // physical field = v * exp(log_scale)
    double lost_acc = 0;  // absorbed mass in the current scale

    double mass() const {
        double m = 0;
        for (double x : v) m += x;
        return m;
    }
    double log_mass() const {
        double m = mass();
        return m > 0 ? log_scale + std::log(m)
                     : -std::numeric_limits<double>::infinity();
    }
    // Fraction of (kept + absorbed) mass that was absorbed at the boundary.
    double truncation_fraction() const {
        double m = mass();
        return (m + lost_acc) > 0 ? lost_acc / (m + lost_acc) : 0.0;
    }
};

inline LatticeField init_field(const LatticeSpec& lattice, const Site& start) {
    lattice.validate();
    if (!lattice.contains(start)) throw std::invalid_argument("init_field: start outside box");
    LatticeField f;
    f.lattice = lattice;
    f.v.assign(static_cast<std::size_t>(lattice.site_count()), 0.0);
    f.v[static_cast<std::size_t>(lattice.index(start))] = 1.0;
    return f;
}

// Precomputed heat stencil: per site, indices of the 2d neighbors (-1 when a
// neighbor falls outside an absorbing box) and the site itself.
struct HeatStencil {
    std::vector<Site> sites;
    std::vector<std::array<long, 6>> nbr;
    int deg = 0;

    explicit HeatStencil(const LatticeSpec& lat) {
        deg = 2 * lat.d;
        long n = lat.site_count();
        sites.reserve(static_cast<std::size_t>(n));
        nbr.reserve(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            Site s = lat.site_at(i);
            sites.push_back(s);
            std::array<long, 6> a{-1, -1, -1, -1, -1, -1};
            auto nb = lat.neighbors(s);
            for (std::size_t j = 0; j < nb.size(); ++j)
                a[j] = lat.contains(nb[j]) ? lat.index(nb[j]) : -1;
            nbr.push_back(a);
        }
    }
};

// One time step.  `env` may be an EnvironmentField or a TiltedField.
template <class Field>
void step(LatticeField& f, Field& env, const SolverSpec& spec, const HeatStencil& st,
          std::vector<double>& scratch) {
    double h = spec.resolved_dt();
    double kdt = spec.kappa * h;
    double b = spec.beta;
    double ito = 0.5 * b * b * h;
    scratch.resize(f.v.size());
    double lost = 0;
    for (std::size_t i = 0; i < f.v.size(); ++i) {
        const std::array<long, 6>& a = st.nbr[i];
        double nb_sum = 0;
        int outside = 0;
        for (int j = 0; j < st.deg; ++j) {
            if (a[static_cast<std::size_t>(j)] >= 0)
                nb_sum += f.v[static_cast<std::size_t>(a[static_cast<std::size_t>(j)])];
            else
                ++outside;
        }
        double heat = f.v[i] + kdt * (nb_sum - st.deg * f.v[i]);
        if (outside) lost += kdt * outside * f.v[i];
        double factor = 1.0;
        if (b > 0) {
            double db = env.increment(st.sites[i], f.time, f.time + h);
            factor = (spec.scheme == Scheme::exponential_euler)
                         ? std::exp(b * db - ito)
                         : 1.0 + b * db - ito;
        }
        scratch[i] = heat * factor;
    }
    f.v.swap(scratch);
    f.lost_acc += lost;
    f.time += h;
    double m = f.mass();
    if (m > 0 && (m > 1e100 || m < 1e-100)) {
        for (double& x : f.v) x /= m;
        f.lost_acc /= m;
        f.log_scale += std::log(m);
    }
}

// Convenience overload for tests: builds the stencil on the fly.
template <class Field>
void step(LatticeField& f, Field& env, const SolverSpec& spec) {
    HeatStencil st(f.lattice);
    std::vector<double> scratch;
    step(f, env, spec, st, scratch);
}

inline double partition_function(const LatticeField& f) { return std::exp(f.log_mass()); }

struct SolverResult {
    double log_Z = 0;
    double truncation_fraction = 0;
    long steps = 0;
    LatticeField field;
};

template <class Field>
SolverResult run(Field& env, const SolverSpec& spec) {
    spec.validate();
    LatticeField f = init_field(spec.lattice, spec.start);
    HeatStencil st(spec.lattice);
    std::vector<double> scratch;
    long n = spec.steps();
    for (long k = 0; k < n; ++k) step(f, env, spec, st, scratch);
    SolverResult r;
    r.log_Z = f.log_mass();
    r.truncation_fraction = f.truncation_fraction();
    r.steps = n;
    r.field = std::move(f);
    return r;
}

// Partition function restricted to corridor sequence (z_1..z_m): the field is
// projected onto the cube I_{z_i} = [z_i*root, (z_i+1)*root)^d at each time
// i*n_block.  Because every step is linear in the field and the projections
// tile the box, summing over all corridor sequences recovers the full
// partition function exactly.
template <class Field>
double restricted_log_partition(Field& env, const SolverSpec& spec,
                                const std::vector<std::array<int, 3>>& corridors,
                                double n_block, int root) {
    spec.validate();
    if (root < 1) throw std::invalid_argument("restricted: root must be >= 1");
    std::size_t m = corridors.size();
    if (m == 0) throw std::invalid_argument("restricted: empty corridor sequence");
    if (std::abs(static_cast<double>(m) * n_block - spec.T) > 1e-9 * std::max(1.0, spec.T))
        throw std::invalid_argument("restricted: need T = m * n_block");
    double h = spec.resolved_dt();
    long per_block = std::lround(n_block / h);
    if (std::abs(per_block * h - n_block) > 1e-12 * std::max(1.0, n_block))
        throw std::invalid_argument("restricted: n_block must be a multiple of dt");

    LatticeField f = init_field(spec.lattice, spec.start);
    HeatStencil st(spec.lattice);
    std::vector<double> scratch;
    for (std::size_t i = 0; i < m; ++i) {
        for (long k = 0; k < per_block; ++k) step(f, env, spec, st, scratch);
        for (std::size_t j = 0; j < f.v.size(); ++j) {
            if (corridor_of(st.sites[j], root, spec.lattice.d) != corridors[i]) f.v[j] = 0;
        }
    }
    return f.log_mass();
}

} // namespace pam
