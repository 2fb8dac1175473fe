#pragma once
// The disorder: one standard Brownian motion B^x per lattice site, sampled
// lazily and deterministically.
//
// Determinism contract: B^x(t) is a pure function of (master seed, site, t).
// Construction is the Levy dyadic scheme — values at integer times come from
// a per-site counter stream (unit increments), and values inside a unit cell
// come from midpoint bisection, each midpoint normal keyed by the absolute
// dyadic tick of the node.  Query times are snapped to a 2^-32 grid; on that
// grid the family has exactly the Brownian finite-dimensional laws, and any
// permutation of the same query multiset produces identical values because
// the cache is pure memoization.  Distinct times closer than 2^-32 (~2.3e-10)
// alias to the same point; that is the documented resolution limit.
//
// Concurrency: a field instance is not internally synchronized.  Workers
// either own distinct instances (same seed => identical values, so cheap
// duplication is exact) or take turns.  Instances are movable.

#include <cstdint>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pam/lattice.hpp"
#include "pam/rng.hpp"

namespace pam {

namespace detail {

// Minimal open-addressing map: uint64 key -> double, key 0 reserved empty.
// Bridge-node ticks always have a nonzero sub-unit offset, so 0 never occurs.
class TickMap {
public:
    TickMap() { rehash(64); }

    double* find(std::uint64_t key) {
        std::size_t mask = slots_.size() - 1;
        std::size_t i = static_cast<std::size_t>(splitmix64(key)) & mask;
        while (slots_[i].key != 0) {
            if (slots_[i].key == key) return &slots_[i].val;
            i = (i + 1) & mask;
        }
        return nullptr;
    }

    void insert(std::uint64_t key, double val) {
        if ((size_ + 1) * 10 >= slots_.size() * 7) rehash(slots_.size() * 2);
        insert_nogrow(key, val);
    }

    void insert_or_assign(std::uint64_t key, double val) {
        if (double* p = find(key)) { *p = val; return; }
        insert(key, val);
    }

    std::size_t size() const { return size_; }

private:
    struct Slot { std::uint64_t key = 0; double val = 0; };
    std::vector<Slot> slots_;
    std::size_t size_ = 0;

    void insert_nogrow(std::uint64_t key, double val) {
        std::size_t mask = slots_.size() - 1;
        std::size_t i = static_cast<std::size_t>(splitmix64(key)) & mask;
        while (slots_[i].key != 0) {
            if (slots_[i].key == key) { slots_[i].val = val; return; }
            i = (i + 1) & mask;
        }
        slots_[i] = {key, val};
        ++size_;
    }

    void rehash(std::size_t n) {
        std::vector<Slot> old = std::move(slots_);
        slots_.assign(n, Slot{});
        size_ = 0;
        for (const Slot& s : old)
            if (s.key != 0) insert_nogrow(s.key, s.val);
    }
};

} // namespace detail

// Time resolution: 2^-32 of a unit interval.
inline constexpr double kTick = 1.0 / 4294967296.0;

inline std::uint64_t snap_ticks(double t) {
    if (!(t >= 0.0)) throw std::domain_error("env_field: time must be >= 0");
    if (t > 2.0e6) throw std::domain_error("env_field: time too large (limit 2e6)");
    return static_cast<std::uint64_t>(std::llround(t * 4294967296.0));
}

class EnvironmentField {
public:
    EnvironmentField(std::uint64_t master_seed, const LatticeSpec& lattice)
        : seed_(master_seed), lattice_(lattice) {
        lattice_.validate();
    }

    const LatticeSpec& lattice() const { return lattice_; }
    std::uint64_t seed() const { return seed_; }

    struct SiteCache {
        std::uint64_t key = 0;            // RNG key for this site
        std::vector<double> anchors;      // B(0), B(1), ...
        detail::TickMap bridge;           // sub-unit dyadic nodes
    };

    // Opaque per-site handle for hot loops (skips the site hash lookup).
    SiteCache* site_handle(const Site& s) {
        Site c = lattice_.canonical(s);
        if (!lattice_.contains(c))
            throw std::domain_error("env_field: site outside box " + site_to_string(s, lattice_.d));
        std::uint64_t code = pack_site(c, lattice_.d);
        auto it = sites_.find(code);
        if (it == sites_.end()) {
            it = sites_.emplace(code, SiteCache{}).first;
            it->second.key = mix64(seed_, code);
            it->second.anchors.push_back(0.0); // B(0) = 0
        }
        return &it->second;
    }

    double value_at(const Site& s, double t) { return value_ticks(*site_handle(s), snap_ticks(t)); }

    double increment(const Site& s, double t0, double t1) {
        SiteCache& sc = *site_handle(s);
        return value_ticks(sc, snap_ticks(t1)) - value_ticks(sc, snap_ticks(t0));
    }

    double value_ticks(SiteCache& sc, std::uint64_t ticks) {
        std::uint32_t off = static_cast<std::uint32_t>(ticks & 0xffffffffULL);
        if (off == 0) return anchor(sc, ticks >> 32);
        if (double* p = sc.bridge.find(ticks)) return *p;
        std::uint64_t b = ticks & (~ticks + 1); // lowest set bit; < 2^32 here
        double lo = value_ticks(sc, ticks - b);
        double hi = value_ticks(sc, ticks + b);
        // midpoint of a bracket of width 2b ticks: mean of endpoints plus
        // N(0, width/4)
        double sd = 0.5 * std::sqrt(2.0 * static_cast<double>(b) * kTick);
        double v = 0.5 * (lo + hi) + sd * keyed_normal(sc.key, ticks);
        sc.bridge.insert(ticks, v);
        return v;
    }

    // Conditioning / test hook: pin B(site, t) to a value.  Affects only draws
    // made after the call (the construction conditions on cached nodes).
    void force_value(const Site& s, double t, double v) {
        SiteCache& sc = *site_handle(s);
        std::uint64_t ticks = snap_ticks(t);
        if ((ticks & 0xffffffffULL) == 0) {
            anchor(sc, ticks >> 32); // materialize chain up to k
            sc.anchors[static_cast<std::size_t>(ticks >> 32)] = v;
        } else {
            sc.bridge.insert_or_assign(ticks, v);
        }
    }

private:
    std::uint64_t seed_;
    LatticeSpec lattice_;
    std::unordered_map<std::uint64_t, SiteCache> sites_;

    double anchor(SiteCache& sc, std::uint64_t k) {
        while (sc.anchors.size() <= k) {
            std::uint64_t j = sc.anchors.size();
            sc.anchors.push_back(sc.anchors.back() + keyed_normal(sc.key, j << 32));
        }
        return sc.anchors[static_cast<std::size_t>(k)];
    }
};

// ---------------------------------------------------------------------------
// Girsanov tilts: piecewise-constant drifts on (time interval x site set).

struct TiltRegion {
    double t0 = 0;
    double t1 = 0;
    std::vector<Site> sites;
    double drift = 0;
};

struct TiltSpec {
    std::vector<TiltRegion> regions;

    void validate() const {
        for (const TiltRegion& r : regions) {
            if (!(r.t0 >= 0) || !(r.t1 >= r.t0))
                throw std::invalid_argument("tilt: need 0 <= t0 <= t1");
            if (!std::isfinite(r.drift)) throw std::invalid_argument("tilt: drift must be finite");
        }
    }
};

// View of a base field under a tilt: value_at gains drift * (time the region
// covers [0,t] at that site).  Regions must not overlap on the same
// (site, time) — true for all uses here (time-disjoint blocks; path graphs).
class TiltedField {
public:
    TiltedField(EnvironmentField& base, TiltSpec tilt)
        : base_(&base), tilt_(std::move(tilt)) {
        tilt_.validate();
        for (const TiltRegion& r : tilt_.regions) {
            member_.emplace_back();
            for (const Site& s : r.sites)
                member_.back().insert(pack_site(base.lattice().canonical(s), base.lattice().d));
        }
    }

    const LatticeSpec& lattice() const { return base_->lattice(); }
    const TiltSpec& tilt() const { return tilt_; }
    EnvironmentField& base() { return *base_; }

    double drift_offset(const Site& s, double t) const {
        std::uint64_t code = pack_site(base_->lattice().canonical(s), base_->lattice().d);
        double off = 0;
        for (std::size_t i = 0; i < tilt_.regions.size(); ++i) {
            const TiltRegion& r = tilt_.regions[i];
            if (t <= r.t0 || r.drift == 0) continue;
            if (member_[i].count(code) == 0) continue;
            off += r.drift * (std::min(t, r.t1) - r.t0);
        }
        return off;
    }

    double value_at(const Site& s, double t) {
        return base_->value_at(s, t) + drift_offset(s, t);
    }

    double increment(const Site& s, double t0, double t1) {
        return base_->increment(s, t0, t1) + drift_offset(s, t1) - drift_offset(s, t0);
    }

private:
    EnvironmentField* base_;
    TiltSpec tilt_;
    std::vector<std::unordered_set<std::uint64_t>> member_;
};

inline TiltedField apply_tilt(EnvironmentField& base, const TiltSpec& tilt) {
    return TiltedField(base, tilt);
}

// log dQ~/dQ evaluated on the base field's path: sum over regions and sites
// of drift*(B_t1 - B_t0) (minus drift^2*(t1-t0)/2 when normalized, making
// exp(log density) mean one).  The unnormalized variant matches the bare
// exponential-of-increments form used in the change-of-measure chain.
inline double girsanov_log_density(EnvironmentField& env, const TiltSpec& tilt,
                                   bool normalized = true) {
    tilt.validate();
    double acc = 0;
    for (const TiltRegion& r : tilt.regions) {
        for (const Site& s : r.sites) {
            acc += r.drift * env.increment(s, r.t0, r.t1);
            if (normalized) acc -= 0.5 * r.drift * r.drift * (r.t1 - r.t0);
        }
    }
    return acc;
}

// Discretized pair of iterated cross-integrals between two site motions:
//   sum_{u != s on the dt-grid} dB^x_s dB^y_u
// computed with running prefix sums.  For x != y this telescopes to
// B^x_T B^y_T minus the diagonal sum_s dB^x_s dB^y_s (the discrete cross
// variation, which vanishes as dt -> 0).
inline double correlation_rho(EnvironmentField& env, const Site& x, const Site& y,
                              double T, double dt) {
    if (!(dt > 0) || !(T >= 0)) throw std::invalid_argument("correlation_rho: need T >= 0, dt > 0");
    long steps = std::lround(T / dt);
    if (std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T))
        throw std::invalid_argument("correlation_rho: T must be a multiple of dt");
    EnvironmentField::SiteCache* hx = env.site_handle(x);
    EnvironmentField::SiteCache* hy = env.site_handle(y);
    double bx = 0, by = 0, acc = 0;
    double px = env.value_ticks(*hx, snap_ticks(0.0));
    double py = env.value_ticks(*hy, snap_ticks(0.0));
    for (long k = 0; k < steps; ++k) {
        double t1 = dt * static_cast<double>(k + 1);
        double nx = env.value_ticks(*hx, snap_ticks(t1));
        double ny = env.value_ticks(*hy, snap_ticks(t1));
        double dbx = nx - px, dby = ny - py;
        acc += dbx * by + dby * bx;
        bx += dbx;
        by += dby;
        px = nx;
        py = ny;
    }
    return acc;
}

} // namespace pam
