#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "pam/estimators.hpp"
#include "pam/stats.hpp"

using namespace pam;

namespace {
FreeEnergySpec d1_spec(double beta, double T, int L, long reps) {
    FreeEnergySpec s;
    s.d = 1;
    s.L = L;
    s.beta = beta;
    s.T = T;
    s.reps = reps;
    s.seed = 5;
    s.workers = 2;
    return s;
}
} // namespace

TEST_CASE("free energy is exactly zero without disorder") {
    FreeEnergySpec s = d1_spec(0.0, 4.0, 16, 50);
    FreeEnergyResult r = free_energy(s);
    CHECK(r.psi.value == 0.0);
    CHECK(r.psi.stderror == 0.0);
    CHECK(r.degenerate == 0);
}

TEST_CASE("free energy estimate is negative with margin in strong disorder") {
    FreeEnergySpec s = d1_spec(1.0, 10.0, 28, 100);
    FreeEnergyResult r = free_energy(s);
    CHECK(r.psi.replicas == 100);
    CHECK(r.psi.value + 3.0 * r.psi.stderror < 0.0);
    CHECK(r.median_psi < 0.0);
    CHECK(r.max_truncation < 1e-6);
    CHECK(std::isfinite(r.psi.value));
}

TEST_CASE("free energy is identical for any worker count") {
    FreeEnergySpec a = d1_spec(0.8, 2.0, 16, 40);
    a.workers = 1;
    FreeEnergySpec b = a;
    b.workers = 4;
    FreeEnergyResult ra = free_energy(a);
    FreeEnergyResult rb = free_energy(b);
    CHECK(ra.psi.value == rb.psi.value); // bitwise: scheduling-free
    CHECK(ra.psi.stderror == rb.psi.stderror);
    CHECK(ra.median_psi == rb.median_psi);
}

TEST_CASE("spec validation") {
    FreeEnergySpec s = d1_spec(0.5, 1.0, 8, 10);
    s.d = 5;
    CHECK_THROWS_AS(free_energy(s), std::invalid_argument);
    FreeEnergySpec r = d1_spec(0.5, 1.0, 8, 0);
    CHECK_THROWS_AS(free_energy(r), std::invalid_argument);

    OverlapSpec o;
    o.L = 4; // too small for the diffusive scale
    CHECK_THROWS_AS(o.validate(), std::invalid_argument);
}

TEST_CASE("path Monte Carlo raises when paths can leave an absorbing box") {
    LatticeSpec tiny(1, 2, Boundary::absorbing);
    EnvironmentField env(3, tiny);
    WalkSpec ws;
    CHECK_THROWS_AS(log_z_path_mc(env, ws, 0.5, 6.0, 4000, 9), OutOfBoxError);
}

TEST_CASE("replica overlap is a valid fraction and reproducible") {
    OverlapSpec s;
    s.L = 16;
    s.beta = 0.8;
    s.T = 2.0;
    s.n_paths = 48;
    s.n_envs = 60;
    s.seed = 31;
    s.workers = 2;
    OverlapResult r = replica_overlap(s);
    CHECK(r.overlap.value >= 0.0);
    CHECK(r.overlap.value <= 1.0);
    CHECK(r.overlap.stderror > 0.0);
    CHECK(r.min_ess > 0.0);
    CHECK(r.min_ess <= 1.0);
    CHECK(r.flagged_envs >= 0);

    OverlapResult again = replica_overlap(s);
    CHECK(again.overlap.value == r.overlap.value);

    // stronger disorder concentrates the endpoint measure: overlap grows
    OverlapSpec weak = s;
    weak.beta = 0.1;
    OverlapResult rw = replica_overlap(weak);
    CHECK(rw.overlap.value < r.overlap.value);
}

TEST_CASE("free energy equals the integrated overlap identity within noise") {
    OverlapSpec s;
    s.L = 16;
    s.beta = 0.5;
    s.T = 2.0;
    s.n_paths = 64;
    s.n_envs = 100;
    s.seed = 17;
    s.workers = 2;
    OverlapIdentityResult r = overlap_identity_check(s, 4);
    REQUIRE(r.grid.size() == 5);
    CHECK(r.grid.front() == 0.0);
    CHECK(r.grid.back() == doctest::Approx(0.5));
    CHECK(r.lhs < 0.0);                 // log Z has negative mean
    CHECK(r.rhs < 0.0);                 // negative integral of positive overlap
    CHECK(std::abs(r.z) < 3.0);
}

TEST_CASE("fractional moments decay in the horizon") {
    FreeEnergySpec base = d1_spec(1.5, 2.0, 28, 300); // T is overridden per horizon
    FractionalDecay r = fractional_decay(base, 0.5, {2.0, 6.0, 10.0});
    REQUIRE(r.moments.size() == 3);
    for (const Estimate& m : r.moments) CHECK(std::isfinite(m.log_value));
    CHECK(r.moments[2].log_value < r.moments[0].log_value);
    CHECK(r.fit.fit.slope + 3.0 * r.fit.fit.slope_stderr < 0.0);
    CHECK(r.fit.points_used == 3);
}

TEST_CASE("decay-rate fit drops noise-dominated points") {
    FreeEnergySpec base = d1_spec(0.0, 6.0, 32, 60);
    // beta <= 0 is rejected outright (log beta is the fit abscissa)
    CHECK_THROWS_AS(beta4_slope(base, {0.0, 1.0}), std::invalid_argument);
    // near-zero betas give psi estimates indistinguishable from 0: every
    // point is dropped and the fit must refuse rather than fit noise
    CHECK_THROWS_AS(beta4_slope(base, {0.05, 0.08}), std::runtime_error);

    DecayFit fit = beta4_slope(base, {0.7, 1.0, 1.4});
    CHECK(fit.points_used >= 2);
    CHECK(fit.points_used + fit.points_dropped == 3);
    CHECK(std::isfinite(fit.fit.slope));
}

TEST_CASE("diffusive rescaling: kappa = 1 dedups to the identical computation") {
    FreeEnergySpec s = d1_spec(0.9, 2.0, 20, 50);
    s.kappa = 1.0;
    RescaleCheck r = kappa_rescale_check(s);
    CHECK(r.scaled_psi == r.original.psi.value); // same seeds, same law, same bits
    CHECK(r.z == 0.0);
}

TEST_CASE("diffusive rescaling holds across kappa within noise") {
    FreeEnergySpec s = d1_spec(0.9, 1.0, 24, 120);
    s.kappa = 4.0;
    RescaleCheck r = kappa_rescale_check(s);
    CHECK(r.rescaled.psi.replicas == 120);
    CHECK(std::abs(r.z) < 3.5);
    // the rescaled run really used kappa 1 at horizon kappa*T
    CHECK(r.scaled_psi == doctest::Approx(4.0 * r.rescaled.psi.value).epsilon(1e-15));
}

TEST_CASE("strong-disorder profile sits below one half") {
    FreeEnergySpec s = d1_spec(0.0, 2.0, 48, 60);
    LargeBetaProfile prof = large_beta_profile(s, {2.0, 4.0});
    REQUIRE(prof.points.size() == 2);
    for (const LargeBetaPoint& pt : prof.points) {
        CHECK(pt.ratio < 0.5);
        CHECK(pt.x == doctest::Approx(1.0 / (4.0 * std::log(pt.beta * pt.beta))));
    }
    CHECK(prof.below_half);
    CHECK(std::isfinite(prof.alpha_sq));
    CHECK(prof.alpha_sq > 0.0);

    CHECK_THROWS_AS(large_beta_profile(s, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("profile fit recovers a synthetic alpha squared exactly") {
    std::vector<double> xs{0.1, 0.2, 0.4};
    std::vector<double> ratios;
    for (double x : xs) ratios.push_back(0.5 - 1.7 * x);
    CHECK(fit_alpha_sq(xs, ratios) == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("weighted line fit recovers exact synthetic coefficients") {
    std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    std::vector<double> y, s;
    for (double xi : x) {
        y.push_back(3.0 - 4.0 * xi);
        s.push_back(0.5 + 0.1 * xi);
    }
    LineFit f = weighted_line_fit(x, y, s);
    CHECK(f.slope == doctest::Approx(-4.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f.points == 4);
}
