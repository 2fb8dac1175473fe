#include "pam/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "pam/parallel.hpp"

namespace pam {

namespace {

constexpr std::uint64_t kPurposeFree = 0x4652454E;  // "FREN"
constexpr std::uint64_t kPurposeOverlap = 0x4F56524C; // "OVRL"
constexpr std::uint64_t kPurposePathMc = 0x504D4358; // "PMCX"
constexpr std::uint64_t kPurposePoint = 0x42345054;  // "B4PT"
constexpr std::uint64_t kPurposeIdent = 0x4C485349;  // "LHSI"
constexpr std::uint64_t kPurposeRescale = 0x52455343; // "RESC"

} // namespace

// ---------------------------------------------------------------------------
// Free energy

SolverSpec FreeEnergySpec::solver() const {
    SolverSpec ss;
    ss.lattice.d = d;
    ss.lattice.L = L;
    ss.lattice.boundary = boundary;
    ss.beta = beta;
    ss.kappa = kappa;
    ss.T = T;
    ss.dt = dt;
    ss.scheme = scheme;
    return ss;
}

void FreeEnergySpec::validate() const {
    solver().validate();
    if (reps < 1) throw std::invalid_argument("free_energy: reps must be >= 1");
    if (workers < 1) throw std::invalid_argument("free_energy: workers must be >= 1");
}

FreeEnergyResult free_energy(const FreeEnergySpec& spec) {
    spec.validate();
    FreeEnergyResult out;
    if (spec.beta == 0.0) {
        out.psi.value = 0.0;
        out.psi.stderror = 0.0;
        out.psi.replicas = 0; // analytic, no sampling
        out.psi.log_value = -std::numeric_limits<double>::infinity();
        out.median_psi = 0.0;
        return out;
    }
    SolverSpec ss = spec.solver();
    auto rows = parallel_map(spec.reps, spec.workers, [&](long r) {
        EnvironmentField env(derive_seed(spec.seed, kPurposeFree, static_cast<std::uint64_t>(r)),
                             ss.lattice);
        SolverResult res = run(env, ss);
        return std::array<double, 2>{res.log_Z, res.truncation_fraction};
    });
    Moments m;
    std::vector<double> vals;
    vals.reserve(rows.size());
    for (const auto& row : rows) {
        out.max_truncation = std::max(out.max_truncation, row[1]);
        if (!std::isfinite(row[0])) {
            ++out.degenerate;
            continue;
        }
        double psi = row[0] / spec.T;
        m.add(psi);
        vals.push_back(psi);
    }
    if (vals.empty()) throw std::runtime_error("free_energy: every replica degenerated");
    out.psi = estimate_from(m);
    out.psi.seed = spec.seed;
    out.median_psi = median_of(vals);
    return out;
}

double log_z_path_mc(EnvironmentField& env, const WalkSpec& walk, double beta, double T,
                     long n_paths, std::uint64_t seed) {
    walk.validate();
    if (n_paths < 1) throw std::invalid_argument("log_z_path_mc: n_paths must be >= 1");
    std::vector<double> logs(static_cast<std::size_t>(n_paths));
    for (long i = 0; i < n_paths; ++i) {
        RngStream rng(derive_seed(seed, kPurposePathMc, static_cast<std::uint64_t>(i)));
        PolymerPath path = sample_path(walk, T, rng);
        logs[static_cast<std::size_t>(i)] =
            beta * hamiltonian(path, env) - T * beta * beta / 2.0;
    }
    Estimate e = estimate_from_logs(logs);
    return e.log_value;
}

// ---------------------------------------------------------------------------
// Replica overlap

void OverlapSpec::validate() const {
    if (d < 1 || d > 3) throw std::invalid_argument("overlap: d must be 1..3");
    if (!(T > 0)) throw std::invalid_argument("overlap: T must be > 0");
    if (!(beta >= 0)) throw std::invalid_argument("overlap: beta must be >= 0");
    if (!(kappa >= 0)) throw std::invalid_argument("overlap: kappa must be >= 0");
    if (n_paths < 2 || n_envs < 2)
        throw std::invalid_argument("overlap: need n_paths >= 2 and n_envs >= 2");
    double spread = 4.0 * std::sqrt(2.0 * d * kappa * T) + 1.0;
    if (L < spread)
        throw std::invalid_argument("overlap: box too small for the horizon; "
                                    "need L >= 4 sqrt(2 d kappa T) + 1");
}

OverlapResult replica_overlap(const OverlapSpec& spec) {
    spec.validate();
    LatticeSpec lat;
    lat.d = spec.d;
    lat.L = spec.L;
    lat.boundary = Boundary::absorbing;
    WalkSpec ws;
    ws.d = spec.d;
    ws.kappa = spec.kappa;
    auto rows = parallel_map(spec.n_envs, spec.workers, [&](long e) {
        std::uint64_t env_seed =
            derive_seed(spec.seed, kPurposeOverlap, static_cast<std::uint64_t>(e));
        EnvironmentField env(env_seed, lat);
        std::size_t P = static_cast<std::size_t>(spec.n_paths);
        std::vector<PolymerPath> paths;
        paths.reserve(P);
        std::vector<double> logw(P);
        for (std::size_t i = 0; i < P; ++i) {
            RngStream rng(derive_seed(env_seed, kPurposePathMc, i));
            paths.push_back(sample_path(ws, spec.T, rng));
            logw[i] = spec.beta * hamiltonian(paths.back(), env);
        }
        double shift = *std::max_element(logw.begin(), logw.end());
        double sw = 0, sw2 = 0;
        std::vector<double> w(P);
        for (std::size_t i = 0; i < P; ++i) {
            w[i] = std::exp(logw[i] - shift);
            sw += w[i];
            sw2 += w[i] * w[i];
        }
        double num = 0, den = 0;
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t j = i + 1; j < P; ++j) {
                double ww = w[i] * w[j];
                num += ww * coincidence_time(paths[i], paths[j]) / spec.T;
                den += ww;
            }
        double value = den > 0 ? num / den : 0.0;
        double ess = sw * sw / sw2;
        return std::array<double, 2>{value, ess};
    });
    OverlapResult out;
    Moments m;
    out.min_ess = 1.0;
    for (const auto& row : rows) {
        m.add(row[0]);
        double frac = row[1] / static_cast<double>(spec.n_paths);
        out.min_ess = std::min(out.min_ess, frac);
        if (frac < 0.01) ++out.flagged_envs;
    }
    out.overlap = estimate_from(m);
    out.overlap.seed = spec.seed;
    return out;
}

OverlapIdentityResult overlap_identity_check(const OverlapSpec& spec, int grid_points) {
    spec.validate();
    if (grid_points < 2)
        throw std::invalid_argument("overlap_identity_check: need >= 2 grid points");
    OverlapIdentityResult out;

    FreeEnergySpec fe;
    fe.d = spec.d;
    fe.L = spec.L;
    fe.beta = spec.beta;
    fe.kappa = spec.kappa;
    fe.T = spec.T;
    fe.reps = spec.n_envs;
    fe.seed = derive_seed(spec.seed, kPurposeIdent, 0);
    fe.workers = spec.workers;
    FreeEnergyResult lhs = free_energy(fe);
    out.lhs = lhs.psi.value * spec.T;
    out.lhs_se = lhs.psi.stderror * spec.T;

    // Trapezoid for -T int_0^beta b * Q[overlap(b)] db.
    double h = spec.beta / grid_points;
    for (int k = 0; k <= grid_points; ++k) {
        OverlapSpec pt = spec;
        pt.beta = h * k;
        pt.seed = derive_seed(spec.seed, kPurposePoint, static_cast<std::uint64_t>(k));
        OverlapResult r = replica_overlap(pt);
        out.grid.push_back(pt.beta);
        out.overlaps.push_back(r.overlap);
        double coeff = (k == 0 || k == grid_points) ? 0.5 : 1.0;
        out.rhs += -spec.T * h * coeff * pt.beta * r.overlap.value;
        double term = spec.T * h * coeff * pt.beta * r.overlap.stderror;
        out.rhs_se += term * term;
    }
    out.rhs_se = std::sqrt(out.rhs_se);
    double denom = std::sqrt(out.lhs_se * out.lhs_se + out.rhs_se * out.rhs_se);
    out.z = denom > 0 ? (out.lhs - out.rhs) / denom : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Decay-rate fits

DecayFit beta4_slope(const FreeEnergySpec& base, const std::vector<double>& betas) {
    if (betas.size() < 2) throw std::invalid_argument("beta4_slope: need >= 2 betas");
    DecayFit out;
    std::vector<double> sigmas;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        if (!(betas[i] > 0)) throw std::invalid_argument("beta4_slope: betas must be > 0");
        FreeEnergySpec fe = base;
        fe.beta = betas[i];
        fe.seed = derive_seed(base.seed, kPurposePoint, i);
        FreeEnergyResult r = free_energy(fe);
        // keep only points that are negative beyond noise; log(-psi) of a
        // sign-ambiguous estimate carries no information
        if (!(r.psi.value < -3.0 * r.psi.stderror)) {
            ++out.points_dropped;
            continue;
        }
        double rel = r.psi.stderror / std::abs(r.psi.value); // se of log(-psi)
        out.xs.push_back(std::log(betas[i]));
        out.ys.push_back(std::log(-r.psi.value));
        out.ws.push_back(1.0 / (rel * rel));
        sigmas.push_back(rel);
        ++out.points_used;
    }
    if (out.points_used < 2)
        throw std::runtime_error("beta4_slope: fewer than 2 usable points "
                                 "(psi not resolved from zero)");
    out.fit = weighted_line_fit(out.xs, out.ys, sigmas);
    return out;
}

FractionalDecay fractional_decay(const FreeEnergySpec& base, double theta,
                                 const std::vector<double>& horizons) {
    if (!(theta > 0) || !(theta < 1))
        throw std::invalid_argument("fractional_decay: need 0 < theta < 1");
    if (horizons.size() < 2)
        throw std::invalid_argument("fractional_decay: need >= 2 horizons");
    FractionalDecay out;
    std::vector<double> sigmas;
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        FreeEnergySpec fe = base;
        fe.T = horizons[i];
        fe.validate();
        SolverSpec ss = fe.solver();
        std::uint64_t seed = derive_seed(base.seed, kPurposePoint, i);
        std::vector<double> logs = parallel_map(fe.reps, fe.workers, [&](long r) {
            EnvironmentField env(derive_seed(seed, kPurposeFree, static_cast<std::uint64_t>(r)),
                                 ss.lattice);
            return theta * run(env, ss).log_Z;
        });
        Estimate est = estimate_from_logs(logs);
        est.seed = seed;
        out.moments.push_back(est);
        if (!(est.value > 0) || !std::isfinite(est.log_value)) {
            ++out.fit.points_dropped;
            continue;
        }
        double se_log = est.stderror / est.value;
        out.fit.xs.push_back(horizons[i]);
        out.fit.ys.push_back(est.log_value);
        out.fit.ws.push_back(1.0 / (se_log * se_log));
        sigmas.push_back(se_log);
        ++out.fit.points_used;
    }
    if (out.fit.points_used < 2)
        throw std::runtime_error("fractional_decay: fewer than 2 usable points");
    out.fit.fit = weighted_line_fit(out.fit.xs, out.fit.ys, sigmas);
    return out;
}

// ---------------------------------------------------------------------------
// Diffusive rescaling

RescaleCheck kappa_rescale_check(const FreeEnergySpec& spec) {
    spec.validate();
    if (!(spec.kappa > 0))
        throw std::invalid_argument("kappa_rescale_check: kappa must be > 0");
    RescaleCheck out;
    out.original = free_energy(spec);

    FreeEnergySpec b = spec;
    b.kappa = 1.0;
    b.beta = spec.beta / std::sqrt(spec.kappa);
    b.T = spec.kappa * spec.T;
    b.dt = spec.kappa * spec.solver().resolved_dt();
    // at kappa = 1 the two runs coincide; keeping the seed makes the check
    // exact instead of statistical
    b.seed = spec.kappa == 1.0 ? spec.seed : derive_seed(spec.seed, kPurposeRescale, 0);
    out.rescaled = free_energy(b);

    out.scaled_psi = spec.kappa * out.rescaled.psi.value;
    out.scaled_se = spec.kappa * out.rescaled.psi.stderror;
    double denom = std::sqrt(out.original.psi.stderror * out.original.psi.stderror +
                             out.scaled_se * out.scaled_se);
    out.z = denom > 0 ? (out.original.psi.value - out.scaled_psi) / denom : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Strong-disorder profile

double fit_alpha_sq(const std::vector<double>& xs, const std::vector<double>& ratios) {
    if (xs.size() != ratios.size() || xs.empty())
        throw std::invalid_argument("fit_alpha_sq: mismatched or empty inputs");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += xs[i] * (0.5 - ratios[i]);
        den += xs[i] * xs[i];
    }
    if (den == 0) throw std::invalid_argument("fit_alpha_sq: all x are zero");
    return num / den;
}

LargeBetaProfile large_beta_profile(const FreeEnergySpec& base,
                                    const std::vector<double>& betas) {
    if (betas.size() < 2) throw std::invalid_argument("large_beta_profile: need >= 2 betas");
    LargeBetaProfile out;
    std::vector<double> xs, ratios;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        double beta = betas[i];
        if (!(beta * beta > 1.0))
            throw std::invalid_argument("large_beta_profile: need beta^2 > 1 "
                                        "(x = 1/(4 log beta^2) must be positive)");
        FreeEnergySpec fe = base;
        fe.beta = beta;
        fe.seed = derive_seed(base.seed, kPurposePoint, i);
        FreeEnergyResult r = free_energy(fe);
        LargeBetaPoint pt;
        pt.beta = beta;
        pt.psi = r.psi;
        pt.ratio = r.psi.value / (beta * beta);
        pt.x = 1.0 / (4.0 * std::log(beta * beta));
        if (!(pt.ratio + 3.0 * r.psi.stderror / (beta * beta) < 0.5)) out.below_half = false;
        if (!out.points.empty() && pt.ratio > out.points.back().ratio + 1e-12)
            out.monotone = false;
        out.points.push_back(pt);
        xs.push_back(pt.x);
        ratios.push_back(pt.ratio);
    }
    out.alpha_sq = fit_alpha_sq(xs, ratios);
    return out;
}

} // namespace pam
