#pragma once
// Coarse-graining machinery for the fractional-moment bound on the polymer
// partition function: sqrt(n)-corridor decomposition, per-block Girsanov
// tilts (d=1), the banded double Ito correlation functional and its
// penalty (d=2), and the certificate drivers that numerically instantiate
// every inequality of the change-of-measure chain on a concrete instance.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pam/env_field.hpp"
#include "pam/lattice.hpp"
#include "pam/stats.hpp"
#include "pam/walk.hpp"

namespace pam {

// ---------------------------------------------------------------------------
// Spec

struct CoarseGrainSpec {
    int d = 1;
    long n = 16;         // block duration; must be a perfect square
    int m = 2;           // number of blocks, horizon T = m*n
    double theta = 0.5;  // fractional-moment exponent
    double C1 = 4;       // d=1 block half-width in units of sqrt(n)
    double C2 = 1;       // d=1 free-energy constant (reporting only)
    double C3 = 2;       // d=2 block half-width in units of sqrt(n)
    double C4 = 2;       // kernel spatial scale
    double C5 = 1;       // d=2 free-energy constant (reporting only)
    double K = 1;        // penalty threshold parameter
    double delta = 0;    // d=1 tilt strength; 0 -> C1^{-1/2} n^{-3/4}
    int R = 3;           // corridor enumeration range per coordinate
    Norm norm = Norm::euclidean;

    // Smallest perfect square >= requested.
    static long square_above(long requested) {
        long r = static_cast<long>(std::ceil(std::sqrt(static_cast<double>(requested))));
        while (r * r < requested) ++r;
        return r * r;
    }

    int root() const { return static_cast<int>(std::llround(std::sqrt(static_cast<double>(n)))); }

    double resolved_delta() const {
        return delta != 0 ? delta
                          : 1.0 / (std::sqrt(C1) * std::pow(static_cast<double>(n), 0.75));
    }

    void validate() const {
        if (d < 1 || d > 2) throw std::invalid_argument("coarse_grain: d must be 1 or 2");
        if (n < 1 || m < 1) throw std::invalid_argument("coarse_grain: need n, m >= 1");
        long r = root();
        if (r * r != n) throw std::invalid_argument("coarse_grain: n must be a perfect square");
        if (!(theta > 0) || !(theta < 1))
            throw std::invalid_argument("coarse_grain: need 0 < theta < 1");
        if (!(C1 > 0) || !(C2 > 0) || !(C3 > 0) || !(C4 > 0) || !(C5 > 0) || !(K > 0))
            throw std::invalid_argument("coarse_grain: constants must be > 0");
        if (R < 0) throw std::invalid_argument("coarse_grain: R must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Corridors and blocks

// A corridor sequence stores z_1..z_m (z_0 = 0 is implicit): X_{i*n} must lie
// in the cube I_{z_i} = [z_i*root, (z_i+1)*root)^d.
using CorridorSequence = std::vector<std::array<int, 3>>;

// All sequences with per-coordinate steps |z_i - z_{i-1}| <= R.  Count is
// (2R+1)^(d*m); refuses above the enumeration cap (config error).
std::vector<CorridorSequence> enumerate_corridors(const CoarseGrainSpec& spec);
long corridor_count(const CoarseGrainSpec& spec);

// Space-time block k: time [k*n, (k+1)*n), sites within C*sqrt(n) of the
// corridor edge point z_k*root (z_0 = 0); C = C1 in d=1, C3 in d=2.
struct Block {
    int k = 0;
    double t0 = 0, t1 = 0;
    Site center;
    std::vector<Site> sites;
};

std::vector<Block> blocks_for(const CoarseGrainSpec& spec, const CorridorSequence& zs);

// Number of (site, unit time) cells covered by the blocks: sum_k n * |sites_k|.
double blocks_volume(const std::vector<Block>& blocks);

// d=1 change of measure: drift -delta on every block.
TiltSpec tilt_for(const CoarseGrainSpec& spec, const CorridorSequence& zs);

// Tilt of the environment toward a fixed path: drift +beta on the space-time
// graph of X over [0, t_max] (the polymer-weighted environment measure).
TiltSpec path_tilt(const PolymerPath& path, double beta, double t_max);

// ---------------------------------------------------------------------------
// Correlation kernel and the double Ito functional (d=2 machinery)

struct CorrelationKernel {
    double C3 = 2;
    double C4 = 2;
    double n = 9; // >= 3 so log n is comfortably positive
    Norm norm = Norm::euclidean;

    void validate() const {
        if (!(C3 > 0) || !(C4 > 0))
            throw std::invalid_argument("kernel: constants must be > 0");
        if (!(n >= 3)) throw std::invalid_argument("kernel: need n >= 3");
    }

    double coeff(double tau) const {
        return 1.0 / (100.0 * C3 * C4 * n * std::sqrt(std::log(n)) * (tau + 1.0));
    }
};

// V_{(s,x),(u,y)} = 1{|x-y| <= C4 sqrt(|s-u|)} / (100 C3 C4 n sqrt(log n) (|s-u|+1))
double kernel_value(const CorrelationKernel& kern, double s, const Site& x, double u,
                    const Site& y, int dim);

// R_k = sum_{x,y in block} int (int V dB^y_u) dB^x_s discretized on the grid
// t0 + j*dt with left-point (Ito) increments, strictly lower triangular in
// time.  Banded implementation (the indicator restricts |x-y| to a disc per
// time lag).  dt <= 0.25 enforced.
template <class Field>
double correlation_R(Field& env, const Block& block, const CorrelationKernel& kern, double dt,
                     int dim);

// Reference implementation: explicit quadruple loop.  Kept as the oracle for
// the banded fast path; only sensible on tiny blocks.
template <class Field>
double correlation_R_naive(Field& env, const Block& block, const CorrelationKernel& kern,
                           double dt, int dim);

// Continuum quadrature of Var_Q(R) = sum_{x,y} int int V^2 du ds over the
// block (exact closed form in the time pair, exact pair loop in space).
double variance_Q_R(const CorrelationKernel& kern, const Block& block, int dim);

// Variance of the *discrete* double Ito sum at step dt (exact formula).
double variance_Q_R_discrete(const CorrelationKernel& kern, const Block& block, double dt,
                             int dim);

// Full-scale variance bound: same quadrature on the complete sup-norm block
// {|y|_inf < C3 sqrt(n)}^d via closed-form displacement counts.  Upper bound
// for the Euclidean-ball block (fewer pairs), exact for the sup-norm block.
double variance_Q_R_square_block(const CorrelationKernel& kern, int dim);

// Penalty: f_K(x) = -K 1{x > exp(K^2)}; g = exp(sum_k f_K(R_k)).
inline double penalty_f(double x, double K) { return x > std::exp(K * K) ? -K : 0.0; }
double penalty_g(const std::vector<double>& r_values, double K);

// ---------------------------------------------------------------------------
// Path self-correlation functionals
//
// D_n  = (n sqrt(log n))^{-1} int_0^n int_0^s du ds / (s-u+1)
// Y(X) = same integrand restricted to {|X_s - X_u| <= C4 sqrt(s-u)}.
// Both evaluated exactly: D_n in closed form / reduced quadrature, Y by
// exact integration over the path's holding rectangles (so Y <= D_n holds
// pointwise by construction).

double dn_closed_form(double n);
double dn_quadrature(double n); // Gauss-Legendre on geometric panels
double path_overlap_Y(const PolymerPath& path, double n, double C4, Norm norm);

// ---------------------------------------------------------------------------
// Fractional moments

// Q[Z^theta] with log-domain accumulation: log_z_fn(replica) -> log Z.
template <class F>
Estimate fractional_moment(double theta, long reps, F&& log_z_fn) {
    if (!(theta > 0) || theta > 1)
        throw std::invalid_argument("fractional_moment: need 0 < theta <= 1");
    std::vector<double> logs(static_cast<std::size_t>(reps));
    for (long i = 0; i < reps; ++i)
        logs[static_cast<std::size_t>(i)] = theta * log_z_fn(i);
    return estimate_from_logs(logs);
}

// ---------------------------------------------------------------------------
// Certificates

struct CertificateLine {
    std::string name;
    double lhs = 0;
    double rhs = 0;
    bool pass = false;
    std::string note;
};

struct CertificateParams {
    double beta = 1.0;
    double kappa = 1.0;
    int L = 64;        // box half-width for the partition-function estimate
    long reps_z = 10000;     // solver replicas for Q[Z_T^theta]
    long reps_path = 10000;  // path samples per slice start
    long reps_env = 2000;    // environment replicas for R-based factors (d=2)
    double dt = 0;     // solver dt; 0 -> default
    double r_dt = 0.25; // grid step for the correlation functional (d=2)
    std::uint64_t seed = 1;
    int workers = 1;
};

struct D1Certificate {
    CoarseGrainSpec spec;
    CertificateParams params;
    double delta = 0;
    Estimate lhs;                  // Q[Z_T^theta]
    std::vector<int> slice_index;  // z = -R..R
    std::vector<double> slice;     // max_x P_x[e^{-beta delta T_J0} 1{X_n in I_z}]
    std::vector<double> slice_se;
    double tail = 0;               // sum_{|z|>R} max_x Phat[X_n in I_z]^theta
    double in_block_factor = 0;    // e^{-beta delta n}
    double first_factor_exact = 0; // exp(delta^2 theta |J|/(2(1-theta)))
    double first_factor_bound = 0; // e^m
    Estimate exit_prob;            // P[max_{[0,n]}|X| > (C1-1) sqrt(n)]
    double rhs = 0;
    double rhs_stderr = 0;
    double prescribed_n = 0;            // C1^2 C2 / beta^4
    std::vector<CertificateLine> lines;
    bool pass = false;
};

struct D2Certificate {
    CoarseGrainSpec spec;
    CertificateParams params;
    Estimate lhs;                // Q[Z_T^theta]
    double first_factor = 0;     // (Q[exp(-theta/(1-theta) f_K(R0))])^{m(1-theta)}
    double first_factor_se = 0;
    double first_factor_bound = 0; // 2^{m(1-theta)}
    double k_premise = 0;        // exp(theta K/(1-theta) - 2K^2), must be <= 1
    std::vector<std::array<int, 2>> slice_index;
    std::vector<double> slice;   // max_x P_x Qhat_X[e^{f_K(R0)} 1{X_n in I_z}]
    std::vector<double> slice_se;
    double tail = 0;
    Estimate threshold_prob;     // Q[R0 > e^{K^2}] vs e^{-2K^2}
    double mean_shift_analytic = 0; // beta^2 int int V along a fixed path
    Estimate mean_shift_mc;      // Qhat_X[R0] for the same path
    double var_qhat = 0;         // sample Var of R0 under Qhat_X
    double var_qhat_se = 0;
    Estimate exit_prob;          // P[max_{[0,n]}|X| > (C3-1) sqrt(n)]
    double three_term_bound = 0; // 2*exit + e^{-K} + 3 e^{-2K^2} (reported)
    double dn = 0;               // D_n at this n
    double mean_Y = 0;           // sample mean of Y
    double rhs = 0;
    double rhs_stderr = 0;
    double prescribed_n = 0;          // exp(C5 / beta^4)
    std::vector<CertificateLine> lines;
    bool pass = false;
};

D1Certificate d1_bound_certificate(const CoarseGrainSpec& spec, const CertificateParams& p);
D2Certificate d2_bound_certificate(const CoarseGrainSpec& spec, const CertificateParams& p);

// ---------------------------------------------------------------------------
// Template implementations

namespace detail {

// Squared lattice distance (exact in double for any realistic coordinate).
inline double site_distance2(const Site& a, const Site& b, int dim, Norm norm) {
    double acc = 0;
    for (int c = 0; c < dim; ++c) {
        double d = std::abs(static_cast<double>(a[c]) - static_cast<double>(b[c]));
        if (norm == Norm::supnorm)
            acc = std::max(acc, d * d);
        else
            acc += d * d;
    }
    return acc;
}

// The kernel indicator |x-y| <= C4 sqrt(tau), evaluated as
// dist^2 <= C4^2 tau so that every implementation (banded sums, naive loops,
// variance quadratures) resolves boundary ties identically.
inline bool kernel_hit(const CorrelationKernel& kern, double tau, const Site& x, const Site& y,
                       int dim) {
    return site_distance2(x, y, dim, kern.norm) <= kern.C4 * kern.C4 * tau;
}

// Largest integer k >= 0 with k^2 <= rr (floor of sqrt with exact
// integer-square comparisons; plain floor(sqrt(rr)) misrounds ties).
inline int isqrt_floor(double rr) {
    if (!(rr >= 0)) return -1;
    int k = static_cast<int>(std::floor(std::sqrt(rr)));
    while (static_cast<double>(k + 1) * static_cast<double>(k + 1) <= rr) ++k;
    while (k > 0 && static_cast<double>(k) * static_cast<double>(k) > rr) --k;
    return k;
}

// Exact pieces of the path-overlap integral (unit tested directly).
// triangle_integral: int over {0 < u < s < len, s-u >= tau0} of du ds/(s-u+1).
// rect_gap_integral:  int over {u in [a,b], s in [c,d], s-u >= tau0} of the
// same integrand, for b <= c (disjoint intervals).
double triangle_integral(double len, double tau0);
double rect_gap_integral(double a, double b, double c, double d, double tau0);

// Dense per-time increment grids over the block's bounding box, with
// row-prefix sums for O(rows) disc sums.
struct BlockGrid {
    int dim = 1;
    int x0 = 0, y0 = 0; // lower corner
    int wx = 0, wy = 0; // extents
    std::vector<char> in_block;        // mask, wx*wy
    std::vector<int> row_lo, row_hi;   // per row: [lo, hi) column range of block sites
    std::vector<Site> sites;           // sites in the block (mask order)
    std::vector<std::size_t> site_idx; // flat index of each site

    explicit BlockGrid(const Block& block, int d);
    std::size_t flat(int gx, int gy) const {
        return static_cast<std::size_t>(gy) * static_cast<std::size_t>(wx) +
               static_cast<std::size_t>(gx);
    }
};

} // namespace detail

template <class Field>
double correlation_R(Field& env, const Block& block, const CorrelationKernel& kern, double dt,
                     int dim) {
    kern.validate();
    if (!(dt > 0) || dt > 0.25)
        throw std::invalid_argument("correlation_R: need 0 < dt <= 0.25");
    double dur = block.t1 - block.t0;
    long steps = std::lround(dur / dt);
    if (steps < 1 || std::abs(steps * dt - dur) > 1e-9 * std::max(1.0, dur))
        throw std::invalid_argument("correlation_R: block duration must be a multiple of dt");
    if (dim > 2) throw std::invalid_argument("correlation_R: d must be 1 or 2");

    detail::BlockGrid g(block, dim);
    std::size_t cells = static_cast<std::size_t>(g.wx) * static_cast<std::size_t>(g.wy);

    // increments db[j][cell] and row prefix sums pre[j][row][col+1]
    std::vector<std::vector<double>> db(static_cast<std::size_t>(steps),
                                        std::vector<double>(cells, 0.0));
    std::vector<std::vector<double>> pre(
        static_cast<std::size_t>(steps),
        std::vector<double>(static_cast<std::size_t>(g.wy) * (static_cast<std::size_t>(g.wx) + 1),
                            0.0));
    for (long j = 0; j < steps; ++j) {
        double a = block.t0 + dt * static_cast<double>(j);
        double b = a + dt;
        auto& row = db[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < g.sites.size(); ++i)
            row[g.site_idx[i]] = env.increment(g.sites[i], a, b);
        auto& p = pre[static_cast<std::size_t>(j)];
        for (int gy = 0; gy < g.wy; ++gy) {
            std::size_t base = static_cast<std::size_t>(gy) * (static_cast<std::size_t>(g.wx) + 1);
            double acc = 0;
            for (int gx = 0; gx < g.wx; ++gx) {
                acc += row[g.flat(gx, gy)];
                p[base + static_cast<std::size_t>(gx) + 1] = acc;
            }
        }
    }

    bool sup = (kern.norm == Norm::supnorm);
    double total = 0;
    for (long s = 1; s < steps; ++s) {
        const auto& dbs = db[static_cast<std::size_t>(s)];
        for (long j = 0; j < s; ++j) {
            double tau = dt * static_cast<double>(s - j);
            double rr = kern.C4 * kern.C4 * tau; // squared radius, ties exact
            double c = kern.coeff(tau);
            const auto& p = pre[static_cast<std::size_t>(j)];
            int ri = detail::isqrt_floor(rr);
            double acc = 0;
            for (std::size_t i = 0; i < g.sites.size(); ++i) {
                double w = dbs[g.site_idx[i]];
                if (w == 0.0) continue;
                int gx = g.sites[i][0] - g.x0;
                int gy = (dim == 2) ? g.sites[i][1] - g.y0 : 0;
                double ssum = 0;
                int dy_lo = (dim == 2) ? std::max(-ri, -gy) : 0;
                int dy_hi = (dim == 2) ? std::min(ri, g.wy - 1 - gy) : 0;
                for (int dy = dy_lo; dy <= dy_hi; ++dy) {
                    // column half-width at this row offset
                    int w2 = sup ? ri
                                 : detail::isqrt_floor(rr - static_cast<double>(dy) * dy);
                    int row = gy + dy;
                    int lo = std::max(gx - w2, g.row_lo[static_cast<std::size_t>(row)]);
                    int hi = std::min(gx + w2, g.row_hi[static_cast<std::size_t>(row)] - 1);
                    if (lo > hi) continue;
                    std::size_t base =
                        static_cast<std::size_t>(row) * (static_cast<std::size_t>(g.wx) + 1);
                    ssum += p[base + static_cast<std::size_t>(hi) + 1] -
                            p[base + static_cast<std::size_t>(lo)];
                }
                acc += w * ssum;
            }
            total += c * acc;
        }
    }
    return total;
}

template <class Field>
double correlation_R_naive(Field& env, const Block& block, const CorrelationKernel& kern,
                           double dt, int dim) {
    kern.validate();
    if (!(dt > 0) || dt > 0.25)
        throw std::invalid_argument("correlation_R: need 0 < dt <= 0.25");
    double dur = block.t1 - block.t0;
    long steps = std::lround(dur / dt);
    std::vector<std::vector<double>> db(
        static_cast<std::size_t>(steps),
        std::vector<double>(block.sites.size(), 0.0));
    for (long j = 0; j < steps; ++j) {
        double a = block.t0 + dt * static_cast<double>(j);
        for (std::size_t i = 0; i < block.sites.size(); ++i)
            db[static_cast<std::size_t>(j)][i] = env.increment(block.sites[i], a, a + dt);
    }
    double total = 0;
    for (long s = 1; s < steps; ++s)
        for (long u = 0; u < s; ++u) {
            double tau = dt * static_cast<double>(s - u);
            double c = kern.coeff(tau);
            for (std::size_t ix = 0; ix < block.sites.size(); ++ix)
                for (std::size_t iy = 0; iy < block.sites.size(); ++iy)
                    if (detail::kernel_hit(kern, tau, block.sites[ix], block.sites[iy], dim))
                        total += c * db[static_cast<std::size_t>(s)][ix] *
                                 db[static_cast<std::size_t>(u)][iy];
        }
    return total;
}

} // namespace pam
