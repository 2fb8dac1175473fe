#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "pam/coarse_grain.hpp"
#include "pam/env_field.hpp"
#include "pam/parallel.hpp"
#include "pam/stats.hpp"
#include "pam/walk.hpp"

using namespace pam;

namespace {
CoarseGrainSpec d2_spec(long n, int m, int R) {
    CoarseGrainSpec s;
    s.d = 2;
    s.n = n;
    s.m = m;
    s.R = R;
    return s;
}
} // namespace

TEST_CASE("square_above rounds up to the next perfect square") {
    CHECK(CoarseGrainSpec::square_above(1) == 1);
    CHECK(CoarseGrainSpec::square_above(2) == 4);
    CHECK(CoarseGrainSpec::square_above(4) == 4);
    CHECK(CoarseGrainSpec::square_above(5) == 9);
    CHECK(CoarseGrainSpec::square_above(10) == 16);
    CHECK(CoarseGrainSpec::square_above(16) == 16);
    CHECK(CoarseGrainSpec::square_above(17) == 25);
}

TEST_CASE("spec validation and derived quantities") {
    CoarseGrainSpec s;
    CHECK_NOTHROW(s.validate());
    CHECK(s.root() == 4);
    CHECK(s.resolved_delta() == doctest::Approx(0.0625).epsilon(1e-15)); // 4^-1/2 16^-3/4

    CoarseGrainSpec odd = s;
    odd.n = 15;
    CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
    CoarseGrainSpec d3 = s;
    d3.d = 3;
    CHECK_THROWS_AS(d3.validate(), std::invalid_argument);
    CoarseGrainSpec th = s;
    th.theta = 1.0;
    CHECK_THROWS_AS(th.validate(), std::invalid_argument);

    CoarseGrainSpec own = s;
    own.delta = 0.25;
    CHECK(own.resolved_delta() == 0.25);
}

TEST_CASE("corridor enumeration counts and cap") {
    CoarseGrainSpec s; // d=1
    s.m = 2;
    s.R = 3;
    CHECK(corridor_count(s) == 49);
    CHECK(enumerate_corridors(s).size() == 49);

    CoarseGrainSpec q = d2_spec(9, 1, 2);
    CHECK(corridor_count(q) == 25);
    CHECK(enumerate_corridors(q).size() == 25);
    // steps are per coordinate relative to the previous corridor
    for (const CorridorSequence& zs : enumerate_corridors(q)) {
        REQUIRE(zs.size() == 1);
        CHECK(std::abs(zs[0][0]) <= 2);
        CHECK(std::abs(zs[0][1]) <= 2);
    }

    CoarseGrainSpec big = d2_spec(9, 3, 5); // (11^2)^3 > 1e6
    CHECK_THROWS_AS(enumerate_corridors(big), std::invalid_argument);
}

TEST_CASE("blocks cover open balls around the corridor anchor points") {
    CoarseGrainSpec s; // d=1, n=16, C1=4, root=4
    s.m = 2;
    CorridorSequence zs{{2, 0, 0}, {1, 0, 0}};
    std::vector<Block> blocks = blocks_for(s, zs);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0].t0 == 0.0);
    CHECK(blocks[0].t1 == 16.0);
    CHECK(blocks[0].center == Site(0));      // z_0 = 0 always
    CHECK(blocks[1].center == Site(2 * 4));  // z_1 * root
    CHECK(blocks[1].t0 == 16.0);
    CHECK(blocks[1].t1 == 32.0);
    // open ball |x| < C1 sqrt(n) = 16 around 0: sites -15..15
    CHECK(blocks[0].sites.size() == 31);
    CHECK(blocks_volume(blocks) == doctest::Approx(2 * 16.0 * 31.0));

    TiltSpec tilt = tilt_for(s, zs);
    REQUIRE(tilt.regions.size() == 2);
    CHECK(tilt.regions[0].drift == doctest::Approx(-s.resolved_delta()));
    CHECK(tilt.regions[1].t0 == 16.0);
    CHECK(tilt.regions[1].sites.size() == blocks[1].sites.size());

    CHECK_THROWS_AS(blocks_for(s, CorridorSequence{{0, 0, 0}}), std::invalid_argument);
}

TEST_CASE("path tilt follows the space-time graph") {
    PolymerPath p;
    p.d = 1;
    p.T = 3.0;
    p.jump_times = {1.0, 2.5};
    p.positions = {Site(0), Site(1), Site(0)};
    TiltSpec tilt = path_tilt(p, 0.7, 2.0); // truncated before the second jump
    REQUIRE(tilt.regions.size() == 2);
    CHECK(tilt.regions[0].t0 == 0.0);
    CHECK(tilt.regions[0].t1 == 1.0);
    CHECK(tilt.regions[0].sites == std::vector<Site>{Site(0)});
    CHECK(tilt.regions[0].drift == 0.7);
    CHECK(tilt.regions[1].t1 == 2.0);
    CHECK(tilt.regions[1].sites == std::vector<Site>{Site(1)});
}

TEST_CASE("kernel indicator resolves boundary ties by squared distance") {
    CorrelationKernel kern; // C3=2 C4=2 n=9 euclidean
    CHECK_THROWS_AS([] { CorrelationKernel k; k.n = 2; k.validate(); }(),
                    std::invalid_argument);
    double c1 = kern.coeff(1.0);
    CHECK(c1 == doctest::Approx(1.0 / (100.0 * 2 * 2 * 9 * std::sqrt(std::log(9.0)) * 2.0))
                    .epsilon(1e-14));
    // dist^2 = 4 equals C4^2 tau = 4 at tau = 1: on the boundary counts as hit
    CHECK(kernel_value(kern, 2.0, Site(0, 0), 1.0, Site(2, 0), 2) == doctest::Approx(c1));
    CHECK(kernel_value(kern, 2.0, Site(0, 0), 1.0, Site(2, 1), 2) == 0.0); // d2 = 5 > 4
    // symmetric in time order
    CHECK(kernel_value(kern, 1.0, Site(0, 0), 2.0, Site(2, 0), 2) == doctest::Approx(c1));
}

TEST_CASE("banded correlation functional equals the naive quadruple loop") {
    CoarseGrainSpec s = d2_spec(4, 2, 1);
    CorrelationKernel kern;
    kern.C3 = s.C3;
    kern.C4 = s.C4;
    kern.n = static_cast<double>(s.n);

    for (int variant = 0; variant < 2; ++variant) {
        kern.norm = variant ? Norm::supnorm : Norm::euclidean;
        CoarseGrainSpec sv = s;
        sv.norm = kern.norm;
        CorridorSequence zs{{1, -1, 0}, {0, 0, 0}};
        std::vector<Block> blocks = blocks_for(sv, zs);
        for (const Block& b : blocks) {
            EnvironmentField e1(1234 + variant, LatticeSpec(2, 40, Boundary::absorbing));
            EnvironmentField e2(1234 + variant, LatticeSpec(2, 40, Boundary::absorbing));
            double fast = correlation_R(e1, b, kern, 0.25, 2);
            double slow = correlation_R_naive(e2, b, kern, 0.25, 2);
            CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
        }
    }

    EnvironmentField env(5, LatticeSpec(2, 40, Boundary::absorbing));
    Block b0 = blocks_for(s, CorridorSequence{{0, 0, 0}, {0, 0, 0}})[0];
    CHECK_THROWS_AS(correlation_R(env, b0, kern, 0.5, 2), std::invalid_argument);
    CHECK_THROWS_AS(correlation_R(env, b0, kern, 0.3, 2), std::invalid_argument);
}

TEST_CASE("discrete variance formula matches Monte Carlo") {
    // E[R^2] = sum V^2 dt^2 exactly for the discrete double Ito sum
    CoarseGrainSpec s = d2_spec(4, 1, 1);
    CorrelationKernel kern;
    kern.n = 4.0;
    Block b = blocks_for(s, CorridorSequence{{0, 0, 0}})[0];
    double dt = 0.25;
    double exact = variance_Q_R_discrete(kern, b, dt, 2);

    const long reps = 3000;
    std::vector<double> vals = parallel_map(reps, 2, [&](long i) {
        EnvironmentField env(derive_seed(9, 0x52764D43, static_cast<std::uint64_t>(i)),
                             LatticeSpec(2, 30, Boundary::absorbing));
        return correlation_R(env, b, kern, dt, 2);
    });
    Moments m, m4;
    for (double v : vals) m.add(v);
    for (double v : vals) {
        double c = v - m.mean;
        m4.add(c * c * c * c);
    }
    // R is a leptokurtic quadratic form: use the kurtosis-aware stderr of the
    // sample variance, se^2 = (m4 - var^2) / reps
    double var = m.variance();
    double se = std::sqrt(std::max(0.0, m4.mean - var * var) / static_cast<double>(reps));
    CHECK(std::abs(m.mean) < 5.0 * m.stderror()); // mean zero under Q
    CHECK(std::abs(var - exact) < 5.0 * se);
}

TEST_CASE("discrete variance converges to the continuum quadrature") {
    CoarseGrainSpec s = d2_spec(9, 1, 1);
    CorrelationKernel kern;
    Block b = blocks_for(s, CorridorSequence{{0, 0, 0}})[0];
    double cont = variance_Q_R(kern, b, 2);
    double e1 = std::abs(variance_Q_R_discrete(kern, b, 0.25, 2) - cont);
    double e2 = std::abs(variance_Q_R_discrete(kern, b, 0.125, 2) - cont);
    double e3 = std::abs(variance_Q_R_discrete(kern, b, 0.0625, 2) - cont);
    CHECK(e2 < e1);
    CHECK(e3 < e2);
    CHECK(e3 < 0.05 * cont);
}

TEST_CASE("square-block variance equals the explicit pair loop") {
    for (int dim = 1; dim <= 2; ++dim) {
        for (Norm norm : {Norm::euclidean, Norm::supnorm}) {
            CorrelationKernel kern;
            kern.norm = norm;
            kern.n = 9.0;
            kern.C3 = 2.0;
            long h = static_cast<long>(std::ceil(kern.C3 * std::sqrt(kern.n))) - 1;
            Block b;
            b.t0 = 0;
            b.t1 = kern.n;
            for (int x = -static_cast<int>(h); x <= h; ++x) {
                if (dim == 1) {
                    b.sites.push_back(Site(x));
                    continue;
                }
                for (int y = -static_cast<int>(h); y <= h; ++y)
                    b.sites.push_back(Site(x, y));
            }
            double direct = variance_Q_R(kern, b, dim);
            double closed = variance_Q_R_square_block(kern, dim);
            CHECK(closed == doctest::Approx(direct).epsilon(1e-12));
        }
    }
    // full-scale constants stay far below 1 (no pair loop involved)
    CorrelationKernel full;
    full.C3 = 10.0;
    full.C4 = 10.0;
    full.n = 100.0;
    CHECK(variance_Q_R_square_block(full, 2) < 1e-2);
}

TEST_CASE("penalty is flat below the threshold and -K above") {
    CHECK(penalty_f(1.0, 1.0) == 0.0);
    CHECK(penalty_f(std::exp(1.0), 1.0) == 0.0); // boundary: not strictly above
    CHECK(penalty_f(std::exp(1.0) + 1e-9, 1.0) == -1.0);
    CHECK(penalty_g({0.0, 10.0, 10.0}, 1.0) == doctest::Approx(std::exp(-2.0)));
    CHECK(penalty_g({}, 1.0) == 1.0);
}

TEST_CASE("overlap normalizer: closed form equals quadrature") {
    for (double n : {9.0, 100.0, 10000.0}) {
        CHECK(dn_closed_form(n) == doctest::Approx(dn_quadrature(n)).epsilon(1e-6));
    }
    CHECK(dn_closed_form(9.0) == doctest::Approx(1.0513552444548).epsilon(1e-9));
}

TEST_CASE("exact rectangle integrals against numeric quadrature") {
    // triangle: int_{tau0}^{len} (len - tau)/(tau + 1) dtau
    for (double tau0 : {0.0, 0.5, 2.0}) {
        double len = 7.0;
        double exact = detail::triangle_integral(len, tau0);
        double numeric = testutil::simpson(
            [&](double tau) { return (len - tau) / (tau + 1.0); }, tau0, len, 4000);
        CHECK(exact == doctest::Approx(numeric).epsilon(1e-9));
    }
    // rectangle pair: u in [a,b], s in [c,d], s - u >= tau0
    struct Case { double a, b, c, d, tau0; };
    for (const Case& k : {Case{0.0, 2.0, 3.0, 8.0, 0.0}, Case{0.0, 2.0, 3.0, 8.0, 2.5},
                          Case{1.0, 4.0, 4.0, 5.0, 0.0}, Case{0.0, 1.0, 1.0, 9.0, 4.0}}) {
        double exact = detail::rect_gap_integral(k.a, k.b, k.c, k.d, k.tau0);
        double lo = std::max(k.tau0, k.c - k.b);
        double hi = k.d - k.a;
        double numeric = lo >= hi ? 0.0
                                  : testutil::simpson(
                                        [&](double tau) {
                                            double len = std::min(k.b, k.d - tau) -
                                                         std::max(k.a, k.c - tau);
                                            return std::max(0.0, len) / (tau + 1.0);
                                        },
                                        lo, hi, 4000);
        CHECK(exact == doctest::Approx(numeric).epsilon(1e-8));
    }
    CHECK_THROWS_AS(detail::rect_gap_integral(0.0, 3.0, 2.0, 5.0, 0.0), std::invalid_argument);
}

TEST_CASE("path overlap functional is exact and dominated by the normalizer") {
    double n = 9.0, C4 = 2.0;
    double dn = dn_closed_form(n);

    // frozen path: indicator always on, so Y = D_n exactly
    PolymerPath frozen;
    frozen.d = 2;
    frozen.T = n;
    frozen.positions = {Site(0, 0)};
    CHECK(path_overlap_Y(frozen, n, C4, Norm::euclidean) == doctest::Approx(dn).epsilon(1e-12));

    // random paths: 0 <= Y <= D_n by construction
    WalkSpec ws;
    ws.d = 2;
    double max_y = 0;
    for (int i = 0; i < 200; ++i) {
        RngStream rng(derive_seed(3, 0x59504154, static_cast<std::uint64_t>(i)));
        PolymerPath p = sample_path(ws, n, rng);
        double y = path_overlap_Y(p, n, C4, Norm::euclidean);
        CHECK(y >= 0.0);
        CHECK(y <= dn * (1.0 + 1e-12));
        max_y = std::max(max_y, y);
    }
    CHECK(max_y > 0.2 * dn); // sanity: the functional is not trivially zero
}

TEST_CASE("fractional moment accumulates in the log domain") {
    Estimate e = fractional_moment(0.5, 2, [](long i) { return i == 0 ? 0.0 : std::log(4.0); });
    CHECK(e.value == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(e.log_value == doctest::Approx(std::log(1.5)).epsilon(1e-14));
    CHECK(e.stderror == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(e.replicas == 2);
    CHECK_THROWS_AS(fractional_moment(0.0, 2, [](long) { return 0.0; }),
                    std::invalid_argument);

    // deep log domain: values that would underflow as doubles
    Estimate tiny = fractional_moment(0.5, 3, [](long) { return -2000.0; });
    CHECK(tiny.log_value == doctest::Approx(-1000.0).epsilon(1e-12));
}

TEST_CASE("d1 certificate passes at a small instance and is worker-independent") {
    CoarseGrainSpec s;
    s.n = 4;
    s.m = 2;
    s.R = 2;
    CertificateParams p;
    p.beta = 1.0;
    p.L = 28;
    p.reps_z = 60;
    p.reps_path = 400;
    p.dt = 1.0 / 32.0;
    p.seed = 11;
    p.workers = 2;
    D1Certificate cert = d1_bound_certificate(s, p);
    CHECK(cert.pass);
    REQUIRE(cert.lines.size() == 4);
    for (const CertificateLine& l : cert.lines) CHECK(l.pass);
    CHECK(cert.delta == doctest::Approx(0.5 * std::pow(4.0, -0.75))
                            .epsilon(1e-12)); // 4^-1/2 * 4^-3/4
    CHECK(cert.first_factor_exact <= cert.first_factor_bound * (1 + 1e-12));
    CHECK(cert.lhs.value < cert.rhs + 3.0 * cert.rhs_stderr);
    CHECK(cert.slice.size() == 5); // z = -R..R
    CHECK(cert.prescribed_n == doctest::Approx(16.0)); // C1^2 C2 / beta^4

    CertificateParams p1 = p;
    p1.workers = 1;
    D1Certificate again = d1_bound_certificate(s, p1);
    CHECK(again.lhs.value == cert.lhs.value); // bit-identical scheduling
    CHECK(again.rhs == cert.rhs);

    // flipping the tilt sign breaks the in-block decay inequality
    CoarseGrainSpec flipped = s;
    flipped.delta = -cert.delta;
    D1Certificate bad = d1_bound_certificate(flipped, p);
    CHECK_FALSE(bad.pass);
}

TEST_CASE("d2 certificate passes at a small instance") {
    CoarseGrainSpec s = d2_spec(4, 2, 1);
    CertificateParams p;
    p.beta = 0.7;
    p.L = 10;
    p.reps_z = 50;
    p.reps_path = 240;
    p.reps_env = 120;
    p.dt = 1.0 / 32.0;
    p.r_dt = 0.25;
    p.seed = 21;
    p.workers = 2;
    D2Certificate cert = d2_bound_certificate(s, p);
    CHECK(cert.pass);
    REQUIRE(cert.lines.size() == 8);
    for (const CertificateLine& l : cert.lines) CHECK(l.pass);
    CHECK(cert.k_premise == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(cert.first_factor_bound == doctest::Approx(std::pow(2.0, 1.0)).epsilon(1e-12));
    CHECK(cert.var_qhat < 2.0);
    CHECK(cert.threshold_prob.value <= std::exp(-2.0) + 3.0 * cert.threshold_prob.stderror);
    CHECK(cert.dn == doctest::Approx(dn_closed_form(4.0)).epsilon(1e-12));
    CHECK(cert.slice.size() == 9); // (2R+1)^2 corridors
    CHECK(cert.prescribed_n == doctest::Approx(std::exp(1.0 / std::pow(0.7, 4))));
}
