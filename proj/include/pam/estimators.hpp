#pragma once
// Monte Carlo estimators built on the lattice solver and the path sampler:
// quenched free energy, replica overlap, decay-rate fits, and the
// diffusive-rescaling consistency check.

#include <cstdint>
#include <vector>

#include "pam/env_field.hpp"
#include "pam/solver.hpp"
#include "pam/stats.hpp"
#include "pam/walk.hpp"

namespace pam {

// ---------------------------------------------------------------------------
// Free energy

struct FreeEnergySpec {
    int d = 1;
    int L = 64;
    Boundary boundary = Boundary::absorbing;
    double beta = 0.5;
    double kappa = 1.0;
    double T = 8.0;
    double dt = 0; // 0 -> solver default
    Scheme scheme = Scheme::exponential_euler;
    long reps = 200;
    std::uint64_t seed = 1;
    int workers = 1;

    SolverSpec solver() const;
    void validate() const;
};

struct FreeEnergyResult {
    Estimate psi;            // mean of (1/T) log Z over replicas
    double median_psi = 0;   // robustness diagnostic
    double max_truncation = 0; // worst boundary-absorbed mass fraction
    long degenerate = 0;     // replicas with log Z = -inf (excluded, flagged)
};

// At beta = 0 the heat semigroup conserves mass on the full lattice, so the
// free energy is exactly 0; the function short-circuits (a boxed estimate
// would only add boundary bias).
FreeEnergyResult free_energy(const FreeEnergySpec& spec);

// log Z under a fixed environment by path Monte Carlo:
// log mean_i exp(beta H(X_i) - T beta^2 / 2).  Cross-check backend for the
// solver; throws OutOfBoxError if a sampled path leaves the box.
double log_z_path_mc(EnvironmentField& env, const WalkSpec& walk, double beta, double T,
                     long n_paths, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Replica overlap

struct OverlapSpec {
    int d = 1;
    int L = 48;         // box for the environment; paths must stay inside
    double beta = 0.5;
    double kappa = 1.0;
    double T = 4.0;
    long n_paths = 128; // paths per environment
    long n_envs = 200;
    std::uint64_t seed = 1;
    int workers = 1;

    void validate() const;
};

struct OverlapResult {
    Estimate overlap;      // Q-mean of the per-environment U-statistic of
                           // coincidence_time / T under the polymer weights
    double min_ess = 0;    // smallest effective sample size fraction seen
    long flagged_envs = 0; // environments with ESS below 1% of n_paths
};

OverlapResult replica_overlap(const OverlapSpec& spec);

// Gaussian integration by parts links free energy and overlap:
//   Q[log Z_T(beta)] = -T * int_0^beta b * Q[overlap(b)] db.
// Evaluates both sides (trapezoid in b) and reports the z-score.
struct OverlapIdentityResult {
    double lhs = 0, lhs_se = 0;   // Q[log Z_T(beta)]
    double rhs = 0, rhs_se = 0;   // -T int b Q[overlap] db
    double z = 0;
    std::vector<double> grid;     // b values
    std::vector<Estimate> overlaps;
};

OverlapIdentityResult overlap_identity_check(const OverlapSpec& spec, int grid_points);

// ---------------------------------------------------------------------------
// Decay-rate fits

struct DecayFit {
    LineFit fit;
    std::vector<double> xs, ys, ws; // fitted coordinates and weights
    long points_used = 0;
    long points_dropped = 0;
};

// Weighted least squares of log(-psi_hat) on log(beta).  Points whose psi_hat
// is not negative by at least 3 standard errors are dropped (their log is
// noise-dominated); the fit records how many survive.
DecayFit beta4_slope(const FreeEnergySpec& base, const std::vector<double>& betas);

// log Q[Z_T^theta] against T: slope of the weighted least-squares line.
// Negative slope = fractional-moment decay.
struct FractionalDecay {
    DecayFit fit;
    std::vector<Estimate> moments; // Q[Z_T^theta] per horizon
};

FractionalDecay fractional_decay(const FreeEnergySpec& base, double theta,
                                 const std::vector<double>& horizons);

// ---------------------------------------------------------------------------
// Diffusive rescaling

// Z^{kappa,beta}_T and Z^{1,beta/sqrt(kappa)}_{kappa T} agree in law; with
// dt scaled by kappa the discrete chains agree in law exactly, so the free
// energies satisfy psi_A = kappa * psi_B.  Reports both estimates and the
// z-score of the difference (0 by construction at kappa = 1).
struct RescaleCheck {
    FreeEnergyResult original;   // (kappa, beta, T)
    FreeEnergyResult rescaled;   // (1, beta/sqrt(kappa), kappa T), psi scaled
    double scaled_psi = 0;       // kappa * rescaled psi
    double scaled_se = 0;
    double z = 0;
};

RescaleCheck kappa_rescale_check(const FreeEnergySpec& spec);

// ---------------------------------------------------------------------------
// Strong-disorder profile

// Points of psi/beta^2 against x = 1/(4 log beta^2), plus the least-squares
// recovery of alpha^2 in the profile psi/beta^2 = 1/2 - alpha^2 x.
struct LargeBetaPoint {
    double beta = 0;
    Estimate psi;
    double ratio = 0; // psi / beta^2
    double x = 0;     // 1 / (4 log beta^2)
};

struct LargeBetaProfile {
    std::vector<LargeBetaPoint> points;
    double alpha_sq = 0;    // LS fit of (1/2 - ratio)/x
    bool below_half = true; // every ratio < 1/2
    bool monotone = true;   // ratio non-increasing in beta (reported)
};

LargeBetaProfile large_beta_profile(const FreeEnergySpec& base,
                                    const std::vector<double>& betas);

// Pure fit used by the profile (exposed for synthetic-recovery tests):
// given (x_i, ratio_i), least squares for alpha^2 in ratio = 1/2 - alpha^2 x.
double fit_alpha_sq(const std::vector<double>& xs, const std::vector<double>& ratios);

} // namespace pam
