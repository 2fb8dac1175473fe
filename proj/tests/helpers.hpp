#pragma once
// Shared test oracles.

#include <cmath>
#include <cstddef>
#include <vector>

#include "pam/lattice.hpp"

namespace testutil {

// Exact survival probability of the rate-kappa continuous-time walk on the
// d=1 segment {-L..L} with absorbing exits, started at the origin, horizon t.
// Uniformization: e^{tQ} = e^{-lambda t} sum_k (lambda t)^k / k! P^k with
// lambda = 2 kappa and P the half/half jump matrix (mass leaving the segment
// is dropped).  The series is summed until the Poisson tail is < 1e-14.
inline double survival_probability_d1(int L, double kappa, double t) {
    std::size_t n = static_cast<std::size_t>(2 * L + 1);
    std::vector<double> v(n, 0.0), w(n, 0.0);
    v[static_cast<std::size_t>(L)] = 1.0; // origin
    double lambda = 2.0 * kappa;
    double lt = lambda * t;
    double pois = std::exp(-lt); // Poisson(lt) pmf at k = 0
    double acc = pois * 1.0;     // k = 0 term: total mass still 1
    double mass = 1.0;
    double tail = 1.0 - pois;
    for (int k = 1; tail > 1e-14; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            double left = (i > 0) ? v[i - 1] : 0.0;
            double right = (i + 1 < n) ? v[i + 1] : 0.0;
            w[i] = 0.5 * (left + right);
        }
        v.swap(w);
        mass = 0.0;
        for (double x : v) mass += x;
        pois *= lt / static_cast<double>(k);
        acc += pois * mass;
        tail -= pois;
        if (k > 1000000) break;
    }
    return acc;
}

// Simpson quadrature for the test-side numeric integrals.
template <class F>
double simpson(F&& f, double a, double b, int panels) {
    double h = (b - a) / (2.0 * panels);
    double acc = f(a) + f(b);
    for (int i = 1; i < 2 * panels; ++i) acc += f(a + h * i) * ((i % 2) ? 4.0 : 2.0);
    return acc * h / 3.0;
}

} // namespace testutil
