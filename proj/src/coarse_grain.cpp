#include "pam/coarse_grain.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "pam/parallel.hpp"
#include "pam/solver.hpp"

namespace pam {

// ---------------------------------------------------------------------------
// Corridors and blocks

long corridor_count(const CoarseGrainSpec& spec) {
    double width = 2.0 * spec.R + 1.0;
    double count = std::pow(width, spec.d * spec.m);
    return count > 2e18 ? std::numeric_limits<long>::max() : static_cast<long>(count);
}

std::vector<CorridorSequence> enumerate_corridors(const CoarseGrainSpec& spec) {
    spec.validate();
    long total = corridor_count(spec);
    if (total > 1000000)
        throw std::invalid_argument("enumerate_corridors: more than 1e6 sequences; "
                                    "reduce R or m");
    int width = 2 * spec.R + 1;
    int digits = spec.d * spec.m;
    std::vector<CorridorSequence> out;
    out.reserve(static_cast<std::size_t>(total));
    std::vector<int> counter(static_cast<std::size_t>(digits), 0);
    for (long idx = 0; idx < total; ++idx) {
        CorridorSequence zs(static_cast<std::size_t>(spec.m), {0, 0, 0});
        std::array<int, 3> z{0, 0, 0};
        for (int k = 0; k < spec.m; ++k) {
            for (int c = 0; c < spec.d; ++c)
                z[static_cast<std::size_t>(c)] +=
                    counter[static_cast<std::size_t>(k * spec.d + c)] - spec.R;
            zs[static_cast<std::size_t>(k)] = z;
        }
        out.push_back(std::move(zs));
        for (int j = 0; j < digits; ++j) {
            if (++counter[static_cast<std::size_t>(j)] < width) break;
            counter[static_cast<std::size_t>(j)] = 0;
        }
    }
    return out;
}

std::vector<Block> blocks_for(const CoarseGrainSpec& spec, const CorridorSequence& zs) {
    spec.validate();
    if (zs.size() != static_cast<std::size_t>(spec.m))
        throw std::invalid_argument("blocks_for: sequence length must equal m");
    double width = (spec.d == 1 ? spec.C1 : spec.C3) * spec.root();
    std::vector<Block> out;
    out.reserve(static_cast<std::size_t>(spec.m));
    for (int k = 0; k < spec.m; ++k) {
        Block b;
        b.k = k;
        b.t0 = static_cast<double>(spec.n) * k;
        b.t1 = static_cast<double>(spec.n) * (k + 1);
        std::array<int, 3> z = (k == 0) ? std::array<int, 3>{0, 0, 0}
                                        : zs[static_cast<std::size_t>(k - 1)];
        for (int c = 0; c < spec.d; ++c)
            b.center[c] = z[static_cast<std::size_t>(c)] * spec.root();
        b.sites = ball_sites(b.center, width, spec.d, spec.norm);
        out.push_back(std::move(b));
    }
    return out;
}

double blocks_volume(const std::vector<Block>& blocks) {
    double v = 0;
    for (const Block& b : blocks)
        v += (b.t1 - b.t0) * static_cast<double>(b.sites.size());
    return v;
}

TiltSpec tilt_for(const CoarseGrainSpec& spec, const CorridorSequence& zs) {
    double delta = spec.resolved_delta();
    TiltSpec tilt;
    for (const Block& b : blocks_for(spec, zs))
        tilt.regions.push_back(TiltRegion{b.t0, b.t1, b.sites, -delta});
    return tilt;
}

TiltSpec path_tilt(const PolymerPath& path, double beta, double t_max) {
    TiltSpec tilt;
    double t0 = 0;
    for (std::size_t k = 0; k < path.positions.size(); ++k) {
        double t1 = (k < path.jump_times.size()) ? path.jump_times[k] : path.T;
        double lo = std::max(0.0, t0), hi = std::min(t_max, t1);
        if (hi > lo)
            tilt.regions.push_back(TiltRegion{lo, hi, {path.positions[k]}, beta});
        t0 = t1;
        if (t0 >= t_max) break;
    }
    return tilt;
}

// ---------------------------------------------------------------------------
// Kernel

double kernel_value(const CorrelationKernel& kern, double s, const Site& x, double u,
                    const Site& y, int dim) {
    kern.validate();
    double tau = std::abs(s - u);
    return detail::kernel_hit(kern, tau, x, y, dim) ? kern.coeff(tau) : 0.0;
}

namespace detail {

BlockGrid::BlockGrid(const Block& block, int d) : dim(d) {
    if (block.sites.empty()) throw std::invalid_argument("BlockGrid: empty block");
    int x1 = block.sites[0][0], x2 = x1, y1 = 0, y2 = 0;
    if (d == 2) { y1 = block.sites[0][1]; y2 = y1; }
    for (const Site& s : block.sites) {
        x1 = std::min(x1, s[0]);
        x2 = std::max(x2, s[0]);
        if (d == 2) {
            y1 = std::min(y1, s[1]);
            y2 = std::max(y2, s[1]);
        }
    }
    x0 = x1;
    y0 = y1;
    wx = x2 - x1 + 1;
    wy = (d == 2) ? (y2 - y1 + 1) : 1;
    in_block.assign(static_cast<std::size_t>(wx) * static_cast<std::size_t>(wy), 0);
    row_lo.assign(static_cast<std::size_t>(wy), wx);
    row_hi.assign(static_cast<std::size_t>(wy), 0);
    sites = block.sites;
    site_idx.resize(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
        int gx = sites[i][0] - x0;
        int gy = (d == 2) ? sites[i][1] - y0 : 0;
        std::size_t f = flat(gx, gy);
        in_block[f] = 1;
        site_idx[i] = f;
        row_lo[static_cast<std::size_t>(gy)] = std::min(row_lo[static_cast<std::size_t>(gy)], gx);
        row_hi[static_cast<std::size_t>(gy)] =
            std::max(row_hi[static_cast<std::size_t>(gy)], gx + 1);
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Variance quadratures
//
// For one ordered site pair at distance rho, the time integral
//   int_{0 <= u < s <= S} V^2 du ds = unit^2 * G(tau0),
//   tau0 = (rho/C4)^2,  G(tau0) = (S+1)(1/(tau0+1) - 1/(S+1)) - ln((S+1)/(tau0+1))
// (zero when tau0 >= S), with unit = 1/(100 C3 C4 n sqrt(log n)).

namespace {

double pair_time_integral(double S, double tau0) {
    if (!(tau0 < S)) return 0.0;
    double a0 = tau0 + 1.0, a1 = S + 1.0;
    return a1 * (1.0 / a0 - 1.0 / a1) - std::log(a1 / a0);
}

} // namespace

double variance_Q_R(const CorrelationKernel& kern, const Block& block, int dim) {
    kern.validate();
    double S = block.t1 - block.t0;
    std::size_t ns = block.sites.size();
    if (ns * ns > 200000000)
        throw std::invalid_argument("variance_Q_R: block too large for the pair loop; "
                                    "use variance_Q_R_square_block");
    double unit = kern.coeff(0.0); // 1/(100 C3 C4 n sqrt(log n)), tau folded out below
    double acc = 0;
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < ns; ++j) {
            double d2 = detail::site_distance2(block.sites[i], block.sites[j], dim, kern.norm);
            acc += pair_time_integral(S, d2 / (kern.C4 * kern.C4));
        }
    return unit * unit * acc;
}

double variance_Q_R_discrete(const CorrelationKernel& kern, const Block& block, double dt,
                             int dim) {
    kern.validate();
    if (!(dt > 0)) throw std::invalid_argument("variance_Q_R_discrete: dt must be > 0");
    double S = block.t1 - block.t0;
    long steps = std::lround(S / dt);
    std::size_t ns = block.sites.size();
    if (ns * ns > 200000000)
        throw std::invalid_argument("variance_Q_R_discrete: block too large");
    std::vector<double> d2s;
    d2s.reserve(ns * ns);
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < ns; ++j)
            d2s.push_back(detail::site_distance2(block.sites[i], block.sites[j], dim, kern.norm));
    std::sort(d2s.begin(), d2s.end());
    double acc = 0;
    for (long l = 1; l < steps; ++l) {
        double tau = dt * static_cast<double>(l);
        double rr = kern.C4 * kern.C4 * tau;
        auto it = std::upper_bound(d2s.begin(), d2s.end(), rr);
        double npairs = static_cast<double>(it - d2s.begin());
        double c = kern.coeff(tau);
        acc += static_cast<double>(steps - l) * dt * dt * c * c * npairs;
    }
    return acc;
}

double variance_Q_R_square_block(const CorrelationKernel& kern, int dim) {
    kern.validate();
    if (dim < 1 || dim > 2)
        throw std::invalid_argument("variance_Q_R_square_block: d must be 1 or 2");
    double S = kern.n;
    long h = static_cast<long>(std::ceil(kern.C3 * std::sqrt(kern.n))) - 1;
    long W = 2 * h + 1;
    double unit = kern.coeff(0.0);
    double acc = 0;
    double c42 = kern.C4 * kern.C4;
    if (dim == 1) {
        for (long dx = -(W - 1); dx <= W - 1; ++dx) {
            double cnt = static_cast<double>(W - std::labs(dx));
            double d2 = static_cast<double>(dx * dx);
            acc += cnt * pair_time_integral(S, d2 / c42);
        }
    } else {
        for (long dx = -(W - 1); dx <= W - 1; ++dx)
            for (long dy = -(W - 1); dy <= W - 1; ++dy) {
                double cnt = static_cast<double>((W - std::labs(dx)) * (W - std::labs(dy)));
                double d2 = kern.norm == Norm::supnorm
                                ? static_cast<double>(std::max(dx * dx, dy * dy))
                                : static_cast<double>(dx * dx + dy * dy);
                acc += cnt * pair_time_integral(S, d2 / c42);
            }
    }
    return unit * unit * acc;
}

double penalty_g(const std::vector<double>& r_values, double K) {
    double s = 0;
    for (double r : r_values) s += penalty_f(r, K);
    return std::exp(s);
}

// ---------------------------------------------------------------------------
// Path self-correlation functionals

double dn_closed_form(double n) {
    if (!(n >= 3)) throw std::invalid_argument("dn: need n >= 3");
    return ((n + 1.0) * std::log(n + 1.0) - n) / (n * std::sqrt(std::log(n)));
}

namespace {

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGlNode[16] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.7554044083550030,
    -0.6178762444026438, -0.4580167776572274, -0.2816035507792589, -0.0950125098376374,
    0.0950125098376374,  0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,  0.9894009349916499};
constexpr double kGlWeight[16] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928, 0.1246289712555339,
    0.1495959888165767, 0.1691565193950025, 0.1826034150449236, 0.1894506104550685,
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

double gl16(double a, double b, double n) {
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0;
    for (int i = 0; i < 16; ++i) {
        double tau = mid + half * kGlNode[i];
        s += kGlWeight[i] * (n - tau) / (tau + 1.0);
    }
    return half * s;
}

} // namespace

double dn_quadrature(double n) {
    if (!(n >= 3)) throw std::invalid_argument("dn: need n >= 3");
    // Geometric panels [2^k - 1, 2^{k+1} - 1] keep the 1/(tau+1) factor smooth.
    double acc = 0;
    double a = 0;
    while (a < n) {
        double b = std::min(n, 2.0 * (a + 1.0) - 1.0);
        acc += gl16(a, b, n);
        a = b;
    }
    return acc / (n * std::sqrt(std::log(n)));
}

namespace detail {

double triangle_integral(double len, double tau0) {
    if (!(len > 0) || tau0 >= len) return 0.0;
    double t0 = std::max(0.0, tau0);
    // int_{t0}^{len} (len - tau)/(tau+1) dtau
    return (len + 1.0) * std::log((len + 1.0) / (t0 + 1.0)) - (len - t0);
}

namespace {

// int_{x0}^{x1} (alpha tau + gamma)/(tau+1) dtau
double linear_over_tau(double x0, double x1, double alpha, double gamma) {
    if (!(x1 > x0)) return 0.0;
    return alpha * (x1 - x0) + (gamma - alpha) * std::log((x1 + 1.0) / (x0 + 1.0));
}

} // namespace

double rect_gap_integral(double a, double b, double c, double d, double tau0) {
    if (!(b > a) || !(d > c)) return 0.0;
    if (b > c + 1e-12) throw std::invalid_argument("rect_gap_integral: need b <= c");
    // Overlap length of {u in [a,b]} with {s = u + tau in [c,d]} as a
    // function of tau: 0 at tau = c-b, rises with slope 1, plateaus at
    // min(b-a, d-c), falls to 0 at tau = d-a.
    double p = c - b;
    double q1 = std::min(c - a, d - b);
    double q2 = std::max(c - a, d - b);
    double r = d - a;
    double plateau = std::min(b - a, d - c);
    double lo = std::max(tau0, p);
    double acc = 0;
    // rising piece: len = tau - p
    acc += linear_over_tau(std::max(lo, p), std::min(q1, r), 1.0, -p);
    // plateau: len = plateau
    acc += linear_over_tau(std::max(lo, q1), std::min(q2, r), 0.0, plateau);
    // falling piece: len = r - tau
    acc += linear_over_tau(std::max(lo, q2), r, -1.0, r);
    return acc;
}

} // namespace detail

double path_overlap_Y(const PolymerPath& path, double n, double C4, Norm norm) {
    if (!(n >= 3)) throw std::invalid_argument("path_overlap_Y: need n >= 3");
    if (path.T < n) throw std::invalid_argument("path_overlap_Y: path shorter than n");
    // Holding intervals of the path clipped to [0, n].
    std::vector<double> lo, hi;
    std::vector<Site> pos;
    double t0 = 0;
    for (std::size_t k = 0; k < path.positions.size(); ++k) {
        double t1 = (k < path.jump_times.size()) ? path.jump_times[k] : path.T;
        double a = std::max(0.0, t0), b = std::min(n, t1);
        if (b > a) {
            lo.push_back(a);
            hi.push_back(b);
            pos.push_back(path.positions[k]);
        }
        t0 = t1;
        if (t0 >= n) break;
    }
    double acc = 0;
    for (std::size_t j = 0; j < lo.size(); ++j) {
        acc += detail::triangle_integral(hi[j] - lo[j], 0.0);
        for (std::size_t i = 0; i < j; ++i) {
            double rho = site_distance(pos[i], pos[j], path.d, norm);
            double tau0 = (rho / C4) * (rho / C4);
            if (tau0 >= hi[j] - lo[i]) continue;
            acc += detail::rect_gap_integral(lo[i], hi[i], lo[j], hi[j], tau0);
        }
    }
    return acc / (n * std::sqrt(std::log(n)));
}

// ---------------------------------------------------------------------------
// Certificate helpers

namespace {

constexpr std::uint64_t kPurposeLhs = 0x5A4C4853;   // "ZLHS"
constexpr std::uint64_t kPurposeSlice = 0x534C4943; // "SLIC"
constexpr std::uint64_t kPurposeEnvQ = 0x454E5651;  // "ENVQ"
constexpr std::uint64_t kPurposePath = 0x50415448;  // "PATH"
constexpr std::uint64_t kPurposeExit = 0x45584954;  // "EXIT"

struct CellKey {
    std::array<int, 3> z{};
    bool operator<(const CellKey& o) const { return z < o.z; }
};

// Weighted indicator tallies per arrival corridor, for one start site.
struct SliceTally {
    std::map<CellKey, double> sum_w, sum_w2;
    std::map<CellKey, long> count;
    long reps = 0;
};

// Q[Z_T^theta] via the lattice solver, one fresh environment per replica.
Estimate fractional_moment_solver(const CoarseGrainSpec& cg, const CertificateParams& p,
                                  double T) {
    LatticeSpec lat;
    lat.d = cg.d;
    lat.L = p.L;
    lat.boundary = Boundary::absorbing;
    SolverSpec ss;
    ss.lattice = lat;
    ss.beta = p.beta;
    ss.kappa = p.kappa;
    ss.T = T;
    ss.dt = p.dt;
    ss.scheme = Scheme::exponential_euler;
    ss.validate();
    std::vector<double> logs = parallel_map(
        p.reps_z, p.workers, [&](long r) {
            EnvironmentField env(derive_seed(p.seed, kPurposeLhs, static_cast<std::uint64_t>(r)),
                                 lat);
            return cg.theta * run(env, ss).log_Z;
        });
    return estimate_from_logs(logs);
}

double safe_pow(double x, double e) { return x > 0 ? std::pow(x, e) : 0.0; }

} // namespace

// ---------------------------------------------------------------------------
// d = 1 certificate

D1Certificate d1_bound_certificate(const CoarseGrainSpec& spec, const CertificateParams& p) {
    spec.validate();
    if (spec.d != 1) throw std::invalid_argument("d1_bound_certificate: spec.d must be 1");
    if (p.reps_z < 2 || p.reps_path < 2)
        throw std::invalid_argument("certificate: need at least 2 replicas");

    D1Certificate cert;
    cert.spec = spec;
    cert.params = p;
    cert.delta = spec.resolved_delta();
    int root = spec.root();
    double n = static_cast<double>(spec.n);
    double T = n * spec.m;
    double theta = spec.theta;

    // Girsanov first factor with exact site counts: the tilt occupies
    // |J| = m * n * |block sites| space-time volume, and the normalized
    // density of the drift-delta measure has
    // Q[dQtilde/dQ ^{theta/(1-theta)}]^{(1-theta)/theta} <= exp(delta^2
    // theta |J| / (2(1-theta))).  The default delta is tuned so this is at
    // most e^m for the C1-block geometry.
    CorridorSequence zeros(static_cast<std::size_t>(spec.m), {0, 0, 0});
    std::vector<Block> blocks = blocks_for(spec, zeros);
    double vol = blocks_volume(blocks);
    cert.first_factor_exact =
        std::exp(cert.delta * cert.delta * theta * vol / (2.0 * (1.0 - theta)));
    cert.first_factor_bound = std::exp(static_cast<double>(spec.m));

    // In-block decay: e^{-beta delta n} against e^{-C2eff^{1/4}} with
    // C2eff = beta^4 n / C1^2 (equality at the default delta).
    double c2eff = std::pow(p.beta, 4) * n / (spec.C1 * spec.C1);
    cert.in_block_factor = std::exp(-p.beta * cert.delta * n);
    double decay_target = std::exp(-std::pow(c2eff, 0.25));

    // Slice estimates: from each start x in I_0, Monte Carlo over paths of
    // e^{-beta delta T_J0} 1{X_n in I_z}.
    std::vector<TiltRegion> j0{TiltRegion{0.0, n, blocks[0].sites, 0.0}};
    WalkSpec ws;
    ws.d = 1;
    ws.kappa = p.kappa;
    std::vector<SliceTally> tallies(static_cast<std::size_t>(root));
    for (int sx = 0; sx < root; ++sx) {
        ws.start = Site(sx);
        SliceTally& tally = tallies[static_cast<std::size_t>(sx)];
        tally.reps = p.reps_path;
        for (long r = 0; r < p.reps_path; ++r) {
            RngStream rng(derive_seed(derive_seed(p.seed, kPurposeSlice,
                                                  static_cast<std::uint64_t>(sx)),
                                      kPurposePath, static_cast<std::uint64_t>(r)));
            PolymerPath path = sample_path(ws, n, rng);
            double tj = occupation_time(path, j0);
            double w = std::exp(-p.beta * cert.delta * tj);
            CellKey key{corridor_of(path.position_at(n), root, 1)};
            tally.sum_w[key] += w;
            tally.sum_w2[key] += w * w;
            tally.count[key] += 1;
        }
    }

    // Within |z| <= R: weighted slice, max over starts.  Beyond: unweighted
    // arrival probabilities feed the tail (the weight is at most 1).
    double sum_slice_theta = 0, var_slice_theta = 0;
    for (int z = -spec.R; z <= spec.R; ++z) {
        CellKey key{{z, 0, 0}};
        double best = 0, best_se = 0;
        for (const SliceTally& tally : tallies) {
            auto it = tally.sum_w.find(key);
            if (it == tally.sum_w.end()) continue;
            double reps = static_cast<double>(tally.reps);
            double mean = it->second / reps;
            double m2 = tally.sum_w2.at(key) / reps;
            double se = std::sqrt(std::max(0.0, m2 - mean * mean) / reps);
            if (mean > best) {
                best = mean;
                best_se = se;
            }
        }
        cert.slice_index.push_back(z);
        cert.slice.push_back(best);
        cert.slice_se.push_back(best_se);
        sum_slice_theta += safe_pow(best, theta);
        if (best > 0) {
            double dgdx = theta * safe_pow(best, theta - 1.0);
            var_slice_theta += dgdx * dgdx * best_se * best_se;
        }
    }
    double tail = 0;
    {
        std::map<CellKey, double> best_p;
        for (const SliceTally& tally : tallies)
            for (const auto& [key, cnt] : tally.count) {
                if (std::abs(key.z[0]) <= spec.R) continue;
                double ph = static_cast<double>(cnt) / static_cast<double>(tally.reps);
                best_p[key] = std::max(best_p[key], ph);
            }
        for (const auto& [key, ph] : best_p) tail += safe_pow(ph, theta);
    }
    cert.tail = tail;

    double inner = sum_slice_theta + tail;
    cert.rhs = cert.first_factor_bound * std::pow(inner, spec.m);
    cert.rhs_stderr = cert.first_factor_bound * spec.m *
                      std::pow(inner, spec.m - 1) * std::sqrt(var_slice_theta);

    cert.lhs = fractional_moment_solver(spec, p, T);
    ws.start = Site(0);
    cert.exit_prob = exit_probability(ws, n, spec.C1 - 1.0, p.reps_path,
                                      derive_seed(p.seed, kPurposeExit, 0), spec.norm);
    cert.prescribed_n = p.beta > 0 ? spec.C1 * spec.C1 * spec.C2 / std::pow(p.beta, 4) : 0.0;

    double chain_sigma = 3.0 * std::sqrt(cert.lhs.stderror * cert.lhs.stderror +
                                         cert.rhs_stderr * cert.rhs_stderr);
    cert.lines.push_back({"holder-premise", cert.first_factor_exact, cert.first_factor_bound,
                          cert.first_factor_exact <= cert.first_factor_bound * (1 + 1e-12),
                          "exp(delta^2 theta |J| / (2(1-theta))) <= e^m, exact site counts"});
    cert.lines.push_back({"in-block-decay", cert.in_block_factor, decay_target,
                          cert.in_block_factor <= decay_target * (1 + 1e-9),
                          "e^{-beta delta n} <= e^{-(beta^4 n / C1^2)^{1/4}}"});
    cert.lines.push_back({"chain", cert.lhs.value, cert.rhs + chain_sigma,
                          cert.lhs.value <= cert.rhs + chain_sigma,
                          "Q[Z_T^theta] <= e^m (sum_z s_z^theta + tail)^m + 3 sigma"});
    cert.lines.push_back({"exit-prob", cert.exit_prob.value, 1.0, true,
                          "P[max_{[0,n]}|X| > (C1-1) sqrt(n)], reported"});
    cert.pass = true;
    for (const CertificateLine& l : cert.lines) cert.pass = cert.pass && l.pass;
    return cert;
}

// ---------------------------------------------------------------------------
// d = 2 certificate

D2Certificate d2_bound_certificate(const CoarseGrainSpec& spec, const CertificateParams& p) {
    spec.validate();
    if (spec.d != 2) throw std::invalid_argument("d2_bound_certificate: spec.d must be 2");
    if (p.reps_z < 2 || p.reps_path < 2 || p.reps_env < 2)
        throw std::invalid_argument("certificate: need at least 2 replicas");

    D2Certificate cert;
    cert.spec = spec;
    cert.params = p;
    int root = spec.root();
    double n = static_cast<double>(spec.n);
    double T = n * spec.m;
    double theta = spec.theta;
    double K = spec.K;

    CorrelationKernel kern{spec.C3, spec.C4, n, spec.norm};
    CorridorSequence zeros(static_cast<std::size_t>(spec.m), {0, 0, 0});
    std::vector<Block> blocks = blocks_for(spec, zeros);
    const Block& j0 = blocks[0];

    // The block environment lives on a small box around J0 large enough for
    // every tilt the certificate applies.
    LatticeSpec env_lat;
    env_lat.d = 2;
    env_lat.L = p.L;
    env_lat.boundary = Boundary::absorbing;

    cert.k_premise = std::exp(theta * K / (1.0 - theta) - 2.0 * K * K);
    cert.first_factor_bound = std::pow(2.0, spec.m * (1.0 - theta));
    double thresh = std::exp(K * K);

    // --- Untilted environment: penalty factor and threshold probability.
    {
        Moments ff, over;
        std::vector<double> rvals = parallel_map(
            p.reps_env, p.workers, [&](long r) {
                EnvironmentField env(
                    derive_seed(p.seed, kPurposeEnvQ, static_cast<std::uint64_t>(r)), env_lat);
                return correlation_R(env, j0, kern, p.r_dt, 2);
            });
        for (double r0 : rvals) {
            ff.add(std::exp(-theta / (1.0 - theta) * penalty_f(r0, K)));
            over.add(r0 > thresh ? 1.0 : 0.0);
        }
        double expo = spec.m * (1.0 - theta);
        cert.first_factor = std::pow(ff.mean, expo);
        cert.first_factor_se = expo * std::pow(ff.mean, expo - 1.0) * ff.stderror();
        cert.threshold_prob = estimate_from(over);
    }

    // --- Path-tilted environment: mean shift (analytic vs MC) and variance.
    WalkSpec ws;
    ws.d = 2;
    ws.kappa = p.kappa;
    ws.start = Site(0, 0);
    PolymerPath ref_path;
    {
        RngStream rng(derive_seed(p.seed, kPurposePath, 0));
        ref_path = sample_path(ws, n, rng);
    }
    TiltSpec ref_tilt = path_tilt(ref_path, p.beta, n);

    // Analytic E_Qhat[R0]: increments gain mean beta * (time on site within
    // the grid cell); expectation of the double Ito sum is the kernel summed
    // against those occupation products, restricted to block sites.
    {
        long steps = std::lround((j0.t1 - j0.t0) / p.r_dt);
        std::unordered_set<std::uint64_t> in_block;
        for (const Site& s : j0.sites) in_block.insert(pack_site(s, 2));
        // occupation per grid cell: (site, duration) entries
        std::vector<std::vector<std::pair<Site, double>>> occ(
            static_cast<std::size_t>(steps));
        double t0 = 0;
        for (std::size_t k = 0; k < ref_path.positions.size(); ++k) {
            double t1 = (k < ref_path.jump_times.size()) ? ref_path.jump_times[k] : ref_path.T;
            const Site& x = ref_path.positions[k];
            if (in_block.count(pack_site(x, 2))) {
                long c0 = static_cast<long>(std::floor(t0 / p.r_dt));
                long c1 = static_cast<long>(std::ceil(std::min(t1, n) / p.r_dt));
                for (long c = std::max(0L, c0); c < std::min(steps, c1); ++c) {
                    double lo = std::max(t0, p.r_dt * static_cast<double>(c));
                    double hi = std::min({t1, n, p.r_dt * static_cast<double>(c + 1)});
                    if (hi > lo) occ[static_cast<std::size_t>(c)].push_back({x, hi - lo});
                }
            }
            t0 = t1;
            if (t0 >= n) break;
        }
        double acc = 0;
        for (long s = 1; s < steps; ++s)
            for (long u = 0; u < s; ++u) {
                double tau = p.r_dt * static_cast<double>(s - u);
                for (const auto& [xs, ds] : occ[static_cast<std::size_t>(s)])
                    for (const auto& [xu, du] : occ[static_cast<std::size_t>(u)])
                        if (detail::kernel_hit(kern, tau, xs, xu, 2))
                            acc += kern.coeff(tau) * ds * du;
            }
        cert.mean_shift_analytic = p.beta * p.beta * acc;
    }
    {
        std::vector<double> rvals = parallel_map(
            p.reps_env, p.workers, [&](long r) {
                EnvironmentField env(
                    derive_seed(p.seed, kPurposeEnvQ + 1, static_cast<std::uint64_t>(r)),
                    env_lat);
                TiltedField view(env, ref_tilt);
                return correlation_R(view, j0, kern, p.r_dt, 2);
            });
        Moments m;
        for (double v : rvals) m.add(v);
        cert.mean_shift_mc = estimate_from(m);
        // standard error of the sample variance from the fourth central moment
        double m4 = 0;
        for (double v : rvals) m4 += std::pow(v - m.mean, 4);
        m4 /= static_cast<double>(rvals.size());
        double s2 = m.variance();
        cert.var_qhat = s2;
        cert.var_qhat_se =
            std::sqrt(std::max(0.0, m4 - s2 * s2) / static_cast<double>(rvals.size()));
    }

    // --- Slices: start x in I_0, path + tilted environment, weight
    // e^{f_K(R0)}, binned by the corridor of X_n.
    std::vector<SliceTally> tallies(static_cast<std::size_t>(root * root));
    Moments y_stat;
    cert.dn = dn_closed_form(n);
    double max_y = 0;
    for (int sx = 0; sx < root; ++sx)
        for (int sy = 0; sy < root; ++sy) {
            ws.start = Site(sx, sy);
            std::size_t ti = static_cast<std::size_t>(sx * root + sy);
            tallies[ti].reps = p.reps_path;
            std::uint64_t base =
                derive_seed(p.seed, kPurposeSlice, static_cast<std::uint64_t>(sx * root + sy));
            std::vector<std::array<double, 4>> rows = parallel_map(
                p.reps_path, p.workers, [&](long r) {
                    RngStream rng(derive_seed(base, kPurposePath,
                                              static_cast<std::uint64_t>(r)));
                    PolymerPath path = sample_path(ws, n, rng);
                    EnvironmentField env(derive_seed(base, kPurposeEnvQ,
                                                     static_cast<std::uint64_t>(r)),
                                         env_lat);
                    TiltedField view(env, path_tilt(path, p.beta, n));
                    double r0 = correlation_R(view, j0, kern, p.r_dt, 2);
                    double w = std::exp(penalty_f(r0, K));
                    std::array<int, 3> z = corridor_of(path.position_at(n), root, 2);
                    double y = (r % 16 == 0)
                                   ? path_overlap_Y(path, n, spec.C4, spec.norm)
                                   : -1.0;
                    return std::array<double, 4>{w, static_cast<double>(z[0]),
                                                 static_cast<double>(z[1]), y};
                });
            for (const auto& row : rows) {
                CellKey key{{static_cast<int>(row[1]), static_cast<int>(row[2]), 0}};
                tallies[ti].sum_w[key] += row[0];
                tallies[ti].sum_w2[key] += row[0] * row[0];
                tallies[ti].count[key] += 1;
                if (row[3] >= 0) {
                    y_stat.add(row[3]);
                    max_y = std::max(max_y, row[3]);
                }
            }
        }
    cert.mean_Y = y_stat.mean;

    double sum_slice_theta = 0, var_slice_theta = 0;
    for (int zx = -spec.R; zx <= spec.R; ++zx)
        for (int zy = -spec.R; zy <= spec.R; ++zy) {
            CellKey key{{zx, zy, 0}};
            double best = 0, best_se = 0;
            for (const SliceTally& tally : tallies) {
                auto it = tally.sum_w.find(key);
                if (it == tally.sum_w.end()) continue;
                double reps = static_cast<double>(tally.reps);
                double mean = it->second / reps;
                double m2 = tally.sum_w2.at(key) / reps;
                double se = std::sqrt(std::max(0.0, m2 - mean * mean) / reps);
                if (mean > best) {
                    best = mean;
                    best_se = se;
                }
            }
            cert.slice_index.push_back({zx, zy});
            cert.slice.push_back(best);
            cert.slice_se.push_back(best_se);
            sum_slice_theta += safe_pow(best, theta);
            if (best > 0) {
                double dgdx = theta * safe_pow(best, theta - 1.0);
                var_slice_theta += dgdx * dgdx * best_se * best_se;
            }
        }
    double tail = 0;
    {
        std::map<CellKey, double> best_p;
        for (const SliceTally& tally : tallies)
            for (const auto& [key, cnt] : tally.count) {
                if (std::abs(key.z[0]) <= spec.R && std::abs(key.z[1]) <= spec.R) continue;
                double ph = static_cast<double>(cnt) / static_cast<double>(tally.reps);
                best_p[key] = std::max(best_p[key], ph);
            }
        for (const auto& [key, ph] : best_p) tail += safe_pow(ph, theta);
    }
    cert.tail = tail;

    double inner = sum_slice_theta + tail;
    cert.rhs = cert.first_factor * std::pow(inner, spec.m);
    double d_ff = std::pow(inner, spec.m) * cert.first_factor_se;
    double d_sl = cert.first_factor * spec.m * std::pow(inner, spec.m - 1) *
                  std::sqrt(var_slice_theta);
    cert.rhs_stderr = std::sqrt(d_ff * d_ff + d_sl * d_sl);

    cert.lhs = fractional_moment_solver(spec, p, T);
    ws.start = Site(0, 0);
    cert.exit_prob = exit_probability(ws, n, spec.C3 - 1.0, p.reps_path,
                                      derive_seed(p.seed, kPurposeExit, 0), spec.norm);
    cert.three_term_bound = 2.0 * cert.exit_prob.value + std::exp(-K) +
                            3.0 * std::exp(-2.0 * K * K);
    cert.prescribed_n = p.beta > 0 ? std::exp(spec.C5 / std::pow(p.beta, 4)) : 0.0;

    double chain_sigma = 3.0 * std::sqrt(cert.lhs.stderror * cert.lhs.stderror +
                                         cert.rhs_stderr * cert.rhs_stderr);
    cert.lines.push_back({"k-premise", cert.k_premise, 1.0, cert.k_premise <= 1.0,
                          "exp(theta K/(1-theta) - 2K^2) <= 1"});
    cert.lines.push_back(
        {"first-factor", cert.first_factor,
         cert.first_factor_bound + 3.0 * cert.first_factor_se,
         cert.first_factor <= cert.first_factor_bound + 3.0 * cert.first_factor_se,
         "Q[e^{-theta/(1-theta) f_K(R0)}]^{m(1-theta)} <= 2^{m(1-theta)} + 3 sigma"});
    cert.lines.push_back(
        {"mean-shift", cert.mean_shift_mc.value, cert.mean_shift_analytic,
         std::abs(cert.mean_shift_mc.value - cert.mean_shift_analytic) <=
             3.0 * cert.mean_shift_mc.stderror,
         "Qhat_X[R0] matches beta^2 sum V over the path graph within 3 sigma"});
    cert.lines.push_back({"qhat-variance", cert.var_qhat, 2.0 + 3.0 * cert.var_qhat_se,
                          cert.var_qhat <= 2.0 + 3.0 * cert.var_qhat_se,
                          "Var_Qhat(R0) <= 2 + 3 sigma"});
    cert.lines.push_back(
        {"threshold-prob", cert.threshold_prob.value,
         std::exp(-2.0 * K * K) + 3.0 * cert.threshold_prob.stderror,
         cert.threshold_prob.value <=
             std::exp(-2.0 * K * K) + 3.0 * cert.threshold_prob.stderror,
         "Q[R0 > e^{K^2}] <= e^{-2K^2} + 3 sigma"});
    cert.lines.push_back({"y-bound", max_y, cert.dn, max_y <= cert.dn * (1 + 1e-9),
                          "max sampled Y <= D_n (exact rectangle integration)"});
    cert.lines.push_back({"chain", cert.lhs.value, cert.rhs + chain_sigma,
                          cert.lhs.value <= cert.rhs + chain_sigma,
                          "Q[Z_T^theta] <= first factor * (sum_z s_z^theta + tail)^m + 3 sigma"});
    cert.lines.push_back({"three-term", cert.three_term_bound, 1.0, true,
                          "2 P[exit] + e^{-K} + 3 e^{-2K^2}, reported"});
    cert.pass = true;
    for (const CertificateLine& l : cert.lines) cert.pass = cert.pass && l.pass;
    return cert;
}

} // namespace pam
