#pragma once
// Finite lattice boxes {-L..L}^d (d = 1,2,3) with absorbing or periodic
// boundary, plus the little geometry helpers everything else shares:
// site packing for hash keys, neighbor enumeration, norms, and the
// sqrt(n)-corridor index used by the coarse-graining machinery.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pam {

struct Site {
    std::array<int, 3> c{0, 0, 0};

    Site() = default;
    explicit Site(int x) : c{x, 0, 0} {}
    Site(int x, int y) : c{x, y, 0} {}
    Site(int x, int y, int z) : c{x, y, z} {}

    int& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    int operator[](int i) const { return c[static_cast<std::size_t>(i)]; }
    bool operator==(const Site& o) const { return c == o.c; }
    bool operator!=(const Site& o) const { return c != o.c; }
};

enum class Boundary { absorbing, periodic };

enum class Norm { euclidean, supnorm };

inline double site_norm(const Site& s, int dim, Norm norm) {
    if (norm == Norm::supnorm) {
        int m = 0;
        for (int i = 0; i < dim; ++i) m = std::max(m, std::abs(s[i]));
        return static_cast<double>(m);
    }
    double q = 0;
    for (int i = 0; i < dim; ++i) q += static_cast<double>(s[i]) * s[i];
    return std::sqrt(q);
}

inline double site_distance(const Site& a, const Site& b, int dim, Norm norm) {
    Site d;
    for (int i = 0; i < dim; ++i) d[i] = a[i] - b[i];
    return site_norm(d, dim, norm);
}

// Pack signed coordinates (|x| < 2^20) into one integer for RNG keys and
// hash maps.  Stable across runs; independent of box size.
inline std::uint64_t pack_site(const Site& s, int dim) {
    std::uint64_t code = 0;
    for (int i = 0; i < dim; ++i) {
        code = (code << 21) | static_cast<std::uint64_t>(s[i] + (1 << 20));
    }
    return (code << 2) | static_cast<std::uint64_t>(dim);
}

struct LatticeSpec {
    int d = 1;
    int L = 10; // box is {-L..L}^d
    Boundary boundary = Boundary::absorbing;

    LatticeSpec() = default;
    LatticeSpec(int d_, int L_, Boundary b_) : d(d_), L(L_), boundary(b_) { validate(); }

    void validate() const {
        if (d < 1 || d > 3) throw std::invalid_argument("lattice: d must be 1, 2 or 3");
        if (L < 1) throw std::invalid_argument("lattice: L must be >= 1");
        if (L >= (1 << 19)) throw std::invalid_argument("lattice: L too large for site packing");
    }

    int side() const { return 2 * L + 1; }

    long site_count() const {
        long n = 1;
        for (int i = 0; i < d; ++i) n *= side();
        return n;
    }

    bool contains(const Site& s) const {
        for (int i = 0; i < d; ++i)
            if (s[i] < -L || s[i] > L) return false;
        return true;
    }

    // Canonical representative under the boundary: periodic wraps into the
    // box, absorbing returns the site unchanged (caller checks contains()).
    Site canonical(const Site& s) const {
        if (boundary == Boundary::absorbing) return s;
        Site w = s;
        int m = side();
        for (int i = 0; i < d; ++i) {
            int v = (w[i] + L) % m;
            if (v < 0) v += m;
            w[i] = v - L;
        }
        return w;
    }

    // Dense index in [0, site_count).
    long index(const Site& s) const {
        long idx = 0;
        for (int i = 0; i < d; ++i) idx = idx * side() + (s[i] + L);
        return idx;
    }

    Site site_at(long idx) const {
        Site s;
        for (int i = d - 1; i >= 0; --i) {
            s[i] = static_cast<int>(idx % side()) - L;
            idx /= side();
        }
        return s;
    }

    // 2d neighbors of s (x +- e_i); periodic wraps, absorbing may return
    // sites outside the box (callers treat those as zero mass / forbidden).
    std::vector<Site> neighbors(const Site& s) const {
        std::vector<Site> out;
        out.reserve(static_cast<std::size_t>(2 * d));
        for (int i = 0; i < d; ++i) {
            for (int dir = -1; dir <= 1; dir += 2) {
                Site t = s;
                t[i] += dir;
                out.push_back(canonical(t));
            }
        }
        return out;
    }
};

// Corridor index: which cube I_z = [z*root, (z+1)*root)^d a site lies in.
inline std::array<int, 3> corridor_of(const Site& s, int root, int dim) {
    std::array<int, 3> z{0, 0, 0};
    for (int i = 0; i < dim; ++i) {
        int v = s[i];
        z[static_cast<std::size_t>(i)] = (v >= 0) ? v / root : -(((-v) + root - 1) / root);
    }
    return z;
}

// All sites of the box {-L..L}^d within distance < radius of center (open
// ball in the given norm); used for tilt blocks and corridor windows.
inline std::vector<Site> ball_sites(const Site& center, double radius, int dim, Norm norm) {
    std::vector<Site> out;
    int r = static_cast<int>(std::ceil(radius));
    Site s;
    int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
    for (int i = 0; i < dim; ++i) { lo[i] = center[i] - r; hi[i] = center[i] + r; }
    for (int x = lo[0]; x <= hi[0]; ++x) {
        s[0] = x;
        if (dim == 1) {
            if (site_distance(s, center, dim, norm) < radius) out.push_back(s);
            continue;
        }
        for (int y = lo[1]; y <= hi[1]; ++y) {
            s[1] = y;
            if (dim == 2) {
                if (site_distance(s, center, dim, norm) < radius) out.push_back(s);
                continue;
            }
            for (int z = lo[2]; z <= hi[2]; ++z) {
                s[2] = z;
                if (site_distance(s, center, dim, norm) < radius) out.push_back(s);
            }
        }
    }
    return out;
}

inline std::string site_to_string(const Site& s, int dim) {
    std::string out = "(";
    for (int i = 0; i < dim; ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

} // namespace pam
