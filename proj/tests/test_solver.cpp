#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "pam/env_field.hpp"
#include "pam/estimators.hpp"
#include "pam/solver.hpp"
#include "pam/stats.hpp"
#include "pam/walk.hpp"

using namespace pam;

namespace {
SolverSpec base_spec(int L, Boundary b, double beta, double T) {
    SolverSpec s;
    s.lattice = LatticeSpec(1, L, b);
    s.beta = beta;
    s.T = T;
    return s;
}
} // namespace

TEST_CASE("spec validation") {
    SolverSpec s = base_spec(4, Boundary::absorbing, 0.5, 1.0);
    CHECK_NOTHROW(s.validate());

    SolverSpec bad = s;
    bad.scheme = Scheme::explicit_euler;
    bad.dt = 0.5; // dt * 2 d kappa = 1: unstable
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.dt = 0.125;
    CHECK_NOTHROW(bad.validate());

    SolverSpec frac = s;
    frac.dt = 0.375; // T not an integer multiple
    CHECK_THROWS_AS(frac.validate(), std::invalid_argument);

    SolverSpec out = s;
    out.start = Site(9);
    CHECK_THROWS_AS(out.validate(), std::invalid_argument);

    // default dt: largest power of two <= min(0.01, 0.1/(2 d kappa), 0.1/beta^2)
    CHECK(s.default_dt() == 1.0 / 128.0);
    SolverSpec hot = s;
    hot.beta = 2.0; // 0.1/4 = 0.025 -> still floor_pow2(0.01) ... no: min is 0.01? 0.025 > 0.01
    CHECK(hot.default_dt() == 1.0 / 128.0);
    hot.kappa = 20.0; // 0.1/40 = 0.0025 -> 2^-9
    CHECK(hot.default_dt() == 1.0 / 512.0);
}

TEST_CASE("zero-noise periodic run conserves mass exactly") {
    SolverSpec s = base_spec(5, Boundary::periodic, 0.0, 1.0);
    EnvironmentField env(3, s.lattice);
    SolverResult r = run(env, s);
    CHECK(std::abs(r.log_Z) < 1e-10);
    CHECK(r.truncation_fraction == 0.0);
    CHECK(r.steps == 128);
}

TEST_CASE("zero-noise absorbing run converges to the exact survival probability") {
    // beta = 0 reduces the scheme to explicit Euler for the master equation;
    // the error against the exact semigroup halves with dt.
    double exact = testutil::survival_probability_d1(3, 1.0, 1.0);
    auto mass_at = [&](double dt) {
        SolverSpec s = base_spec(3, Boundary::absorbing, 0.0, 1.0);
        s.dt = dt;
        EnvironmentField env(3, s.lattice);
        return std::exp(run(env, s).log_Z);
    };
    double e1 = std::abs(mass_at(1.0 / 256.0) - exact);
    double e2 = std::abs(mass_at(1.0 / 512.0) - exact);
    double e3 = std::abs(mass_at(1.0 / 1024.0) - exact);
    CHECK(e1 < 5e-3);
    CHECK(e2 < e1);
    CHECK(e3 < e2);
    CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.15)); // first order in dt
}

TEST_CASE("partition function is a mean-one martingale on a periodic box") {
    // the exponential factor has mean exactly one per step, so E[Z] = 1 holds
    // at any dt on a periodic box
    SolverSpec s = base_spec(4, Boundary::periodic, 0.8, 1.0);
    s.dt = 1.0 / 32.0; // deliberately coarse: mean-one is exact per step
    Moments m;
    for (int i = 0; i < 600; ++i) {
        EnvironmentField env(derive_seed(11, 0x5A4D4D31, static_cast<std::uint64_t>(i)),
                             s.lattice);
        m.add(std::exp(run(env, s).log_Z));
    }
    CHECK(std::abs(m.mean - 1.0) < 4.0 * m.stderror());
}

TEST_CASE("second moment matches the two-replica coincidence formula") {
    // E[Z_T^2] = E[exp(beta^2 * coincidence time of two independent walks)]
    double beta = 0.4, T = 1.0;
    SolverSpec s = base_spec(10, Boundary::periodic, beta, T);
    Moments z2;
    for (int i = 0; i < 2500; ++i) {
        EnvironmentField env(derive_seed(12, 0x5A325A32, static_cast<std::uint64_t>(i)),
                             s.lattice);
        z2.add(std::exp(2.0 * run(env, s).log_Z));
    }
    WalkSpec ws;
    Moments cf;
    for (int i = 0; i < 20000; ++i) {
        RngStream ra(derive_seed(13, 0xC01CA11, static_cast<std::uint64_t>(2 * i)));
        RngStream rb(derive_seed(13, 0xC01CA11, static_cast<std::uint64_t>(2 * i + 1)));
        PolymerPath a = sample_path(ws, T, ra);
        PolymerPath b = sample_path(ws, T, rb);
        cf.add(std::exp(beta * beta * coincidence_time(a, b)));
    }
    double z = z_mean_difference(z2.mean, z2.stderror(), cf.mean, cf.stderror());
    CHECK(std::abs(z) < 4.0);
}

TEST_CASE("solver and path Monte Carlo agree on a fixed environment") {
    double beta = 0.3, T = 1.0;
    SolverSpec s = base_spec(10, Boundary::periodic, beta, T);
    s.dt = 1.0 / 256.0;
    EnvironmentField env(77, s.lattice);
    double solver_log_z = run(env, s).log_Z;
    WalkSpec ws;
    double mc_log_z = log_z_path_mc(env, ws, beta, T, 40000, 555);
    // path side standard error ~ 2e-3; solver dt bias is far below that
    CHECK(std::abs(solver_log_z - mc_log_z) < 0.02);
}

TEST_CASE("restricted partition functions sum to the full one") {
    // projecting onto corridor cells at each block end tiles the box, so the
    // sum over all corridor sequences is an exact linear decomposition
    SolverSpec s = base_spec(6, Boundary::absorbing, 0.5, 2.0);
    s.dt = 1.0 / 64.0;
    EnvironmentField env(91, s.lattice);
    double full = run(env, s).log_Z;

    int root = 2;
    std::vector<double> logs;
    for (int z1 = -3; z1 <= 3; ++z1)
        for (int z2 = -3; z2 <= 3; ++z2) {
            std::vector<std::array<int, 3>> seq{{z1, 0, 0}, {z2, 0, 0}};
            logs.push_back(restricted_log_partition(env, s, seq, 1.0, root));
        }
    Estimate total = estimate_from_logs(logs);
    // estimate_from_logs returns the mean of exp; undo the 1/N
    double log_sum = total.log_value + std::log(static_cast<double>(logs.size()));
    CHECK(std::exp(log_sum) == doctest::Approx(std::exp(full)).epsilon(1e-10));

    std::vector<std::array<int, 3>> bad{{0, 0, 0}};
    CHECK_THROWS_AS(restricted_log_partition(env, s, bad, 1.5, root), std::invalid_argument);
}

TEST_CASE("absorbing boundaries report truncation, periodic never does") {
    SolverSpec s = base_spec(2, Boundary::absorbing, 0.0, 2.0);
    EnvironmentField env(5, s.lattice);
    SolverResult r = run(env, s);
    CHECK(r.truncation_fraction > 0.1);
    CHECK(r.truncation_fraction < 1.0);

    SolverSpec p = base_spec(2, Boundary::periodic, 0.7, 2.0);
    EnvironmentField env2(5, p.lattice);
    CHECK(run(env2, p).truncation_fraction == 0.0);
}

TEST_CASE("running log scale keeps extreme runs finite") {
    SolverSpec s = base_spec(4, Boundary::absorbing, 6.0, 1.0);
    EnvironmentField env(17, s.lattice);
    SolverResult r = run(env, s);
    CHECK(std::isfinite(r.log_Z));
    CHECK(r.truncation_fraction >= 0.0);
    CHECK(r.truncation_fraction <= 1.0);
}
