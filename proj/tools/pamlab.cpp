// pamlab: command-line laboratory for the lattice polymer in a Brownian
// environment.  Subcommands estimate the quenched free energy and replica
// overlap, check exact identities (martingale property, overlap/free-energy
// link, diffusive rescaling), fit decay rates, and run the d=1 / d=2
// coarse-graining certificates.
//
// Every run writes three artifacts into --out:
//   <label>.results.csv    one row per result, numbers in %.17g
//   <label>.report.json    full structured results + parameter digest
//   <label>.manifest.json  run metadata (digest, outputs, wall time)
// The digest covers semantic parameters only (never workers/out/label or
// timing), so identical configurations produce identical results files
// regardless of worker count.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 numeric check
// failed (or runtime numeric error), 4 certificate inequality failed.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pam/coarse_grain.hpp"
#include "pam/estimators.hpp"
#include "pam/parallel.hpp"
#include "pam/run_io.hpp"

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

struct Common {
    std::string config;
    std::string out = "runs";
    std::string label;
    int workers = 1;
    std::uint64_t seed = 1;
};

json load_config_section(const std::string& path, const std::string& section) {
    if (path.empty()) return json::object();
    std::string text;
    try {
        text = pam::read_file(path);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    json root = json::parse(text); // throws on bad JSON
    if (!root.is_object())
        throw std::invalid_argument("config: top level must be a JSON object");
    json merged = json::object();
    for (auto& [k, v] : root.items())
        if (!v.is_object() && !v.is_array()) merged[k] = v; // global scalars
    if (root.contains(section)) {
        const json& sec = root.at(section);
        if (!sec.is_object())
            throw std::invalid_argument("config: section '" + section +
                                        "' must be a JSON object");
        for (auto& [k, v] : sec.items()) merged[k] = v;
    }
    // arrays are allowed inside sections only; copy top-level arrays too
    for (auto& [k, v] : root.items())
        if (v.is_array()) merged[k] = v;
    return merged;
}

// CLI flags beat config values beat built-in defaults.
template <class T>
void fill(const json& sec, const CLI::Option* opt, const char* key, T& var) {
    if (opt->count() == 0 && sec.contains(key)) var = sec.at(key).get<T>();
}

pam::Scheme parse_scheme(const std::string& s) {
    if (s == "exponential") return pam::Scheme::exponential_euler;
    if (s == "explicit") return pam::Scheme::explicit_euler;
    throw std::invalid_argument("scheme must be 'exponential' or 'explicit'");
}

pam::Boundary parse_boundary(const std::string& s) {
    if (s == "absorbing") return pam::Boundary::absorbing;
    if (s == "periodic") return pam::Boundary::periodic;
    throw std::invalid_argument("boundary must be 'absorbing' or 'periodic'");
}

pam::Norm parse_norm(const std::string& s) {
    if (s == "euclidean") return pam::Norm::euclidean;
    if (s == "supnorm") return pam::Norm::supnorm;
    throw std::invalid_argument("norm must be 'euclidean' or 'supnorm'");
}

json est_json(const pam::Estimate& e) {
    json j;
    j["value"] = e.value;
    j["stderror"] = e.stderror;
    j["replicas"] = e.replicas;
    j["log_value"] = std::isfinite(e.log_value) ? json(e.log_value) : json();
    return j;
}

int finish_run(const Common& c, const std::string& cmd, const json& params,
               const std::string& csv, json report, double wall_seconds, int code) {
    std::string label = c.label.empty() ? cmd : c.label;
    std::string digest = pam::config_digest(params);
    report["command"] = cmd;
    report["digest"] = digest;
    report["params"] = pam::strip_nonsemantic(params);
    pam::RunPaths paths = pam::run_paths(c.out, label);
    pam::write_file(paths.results_csv, csv);
    pam::write_file(paths.report_json, report.dump(2) + "\n");
    json manifest;
    manifest["command"] = cmd;
    manifest["label"] = label;
    manifest["digest"] = digest;
    manifest["params"] = pam::strip_nonsemantic(params);
    manifest["workers"] = c.workers;
    manifest["wall_seconds"] = wall_seconds;
    manifest["outputs"] = {{"results", paths.results_csv}, {"report", paths.report_json}};
    pam::write_file(paths.manifest_json, manifest.dump(2) + "\n");
    std::printf("%s: digest=%s results=%s exit=%d (%.1fs)\n", cmd.c_str(), digest.c_str(),
                paths.results_csv.c_str(), code, wall_seconds);
    return code;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// ---------------------------------------------------------------------------
// free-energy

struct FreeEnergyCli {
    int d = 1, L = 64;
    std::string boundary = "absorbing", scheme = "exponential";
    double beta = 0.5, kappa = 1.0, T = 8.0, dt = 0;
    long reps = 200;
};

pam::FreeEnergySpec to_spec(const FreeEnergyCli& o, const Common& c) {
    pam::FreeEnergySpec fe;
    fe.d = o.d;
    fe.L = o.L;
    fe.boundary = parse_boundary(o.boundary);
    fe.scheme = parse_scheme(o.scheme);
    fe.beta = o.beta;
    fe.kappa = o.kappa;
    fe.T = o.T;
    fe.dt = o.dt;
    fe.reps = o.reps;
    fe.seed = c.seed;
    fe.workers = c.workers;
    return fe;
}

json params_json(const FreeEnergyCli& o, const Common& c) {
    json p;
    p["d"] = o.d;
    p["L"] = o.L;
    p["boundary"] = o.boundary;
    p["scheme"] = o.scheme;
    p["beta"] = o.beta;
    p["kappa"] = o.kappa;
    p["T"] = o.T;
    p["dt"] = o.dt;
    p["reps"] = o.reps;
    p["seed"] = c.seed;
    return p;
}

int run_free_energy(const FreeEnergyCli& o, const Common& c) {
    Timer timer;
    pam::FreeEnergySpec fe = to_spec(o, c);
    pam::FreeEnergyResult r = pam::free_energy(fe);
    pam::CsvWriter csv({"beta", "kappa", "T", "psi", "psi_se", "psi_median",
                        "max_truncation", "degenerate"});
    csv.add(o.beta).add(o.kappa).add(o.T).add(r.psi.value).add(r.psi.stderror)
        .add(r.median_psi).add(r.max_truncation).add(r.degenerate);
    csv.end_row();
    json rep;
    rep["psi"] = est_json(r.psi);
    rep["psi_median"] = r.median_psi;
    rep["max_truncation"] = r.max_truncation;
    rep["degenerate"] = r.degenerate;
    return finish_run(c, "free-energy", params_json(o, c), csv.str(), rep,
                      timer.seconds(), 0);
}

// ---------------------------------------------------------------------------
// martingale-check

int run_martingale(const FreeEnergyCli& o, const std::vector<double>& betas,
                   const Common& c) {
    Timer timer;
    pam::CsvWriter csv({"beta", "mean_Z", "se", "z", "pass"});
    json points = json::array();
    bool all_pass = true;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        FreeEnergyCli oi = o;
        oi.beta = betas[i];
        pam::FreeEnergySpec fe = to_spec(oi, c);
        fe.seed = pam::derive_seed(c.seed, 0x4D415254 /*MART*/, i);
        fe.validate();
        pam::SolverSpec ss = fe.solver();
        std::vector<double> zs = pam::parallel_map(fe.reps, fe.workers, [&](long r) {
            pam::EnvironmentField env(
                pam::derive_seed(fe.seed, 0x4652454E, static_cast<std::uint64_t>(r)),
                ss.lattice);
            return std::exp(pam::run(env, ss).log_Z);
        });
        pam::Estimate est = pam::estimate_from(zs);
        double z = est.stderror > 0 ? (est.value - 1.0) / est.stderror : 0.0;
        bool pass = std::abs(z) <= 3.0;
        all_pass = all_pass && pass;
        csv.add(betas[i]).add(est.value).add(est.stderror).add(z).add(pass);
        csv.end_row();
        json pt;
        pt["beta"] = betas[i];
        pt["mean_Z"] = est_json(est);
        pt["z"] = z;
        pt["pass"] = pass;
        points.push_back(pt);
    }
    json rep;
    rep["points"] = points;
    rep["pass"] = all_pass;
    json params = params_json(o, c);
    params.erase("beta");
    params["betas"] = betas;
    return finish_run(c, "martingale-check", params, csv.str(), rep, timer.seconds(),
                      all_pass ? 0 : 3);
}

// ---------------------------------------------------------------------------
// overlap and the overlap identity

struct OverlapCli {
    int d = 1, L = 48;
    double beta = 0.5, kappa = 1.0, T = 4.0;
    long n_paths = 128, n_envs = 200;
};

pam::OverlapSpec to_spec(const OverlapCli& o, const Common& c) {
    pam::OverlapSpec os;
    os.d = o.d;
    os.L = o.L;
    os.beta = o.beta;
    os.kappa = o.kappa;
    os.T = o.T;
    os.n_paths = o.n_paths;
    os.n_envs = o.n_envs;
    os.seed = c.seed;
    os.workers = c.workers;
    return os;
}

json params_json(const OverlapCli& o, const Common& c) {
    json p;
    p["d"] = o.d;
    p["L"] = o.L;
    p["beta"] = o.beta;
    p["kappa"] = o.kappa;
    p["T"] = o.T;
    p["n_paths"] = o.n_paths;
    p["n_envs"] = o.n_envs;
    p["seed"] = c.seed;
    return p;
}

int run_overlap(const OverlapCli& o, const Common& c) {
    Timer timer;
    pam::OverlapResult r = pam::replica_overlap(to_spec(o, c));
    pam::CsvWriter csv({"beta", "kappa", "T", "overlap", "se", "min_ess", "flagged_envs"});
    csv.add(o.beta).add(o.kappa).add(o.T).add(r.overlap.value).add(r.overlap.stderror)
        .add(r.min_ess).add(r.flagged_envs);
    csv.end_row();
    json rep;
    rep["overlap"] = est_json(r.overlap);
    rep["min_ess"] = r.min_ess;
    rep["flagged_envs"] = r.flagged_envs;
    return finish_run(c, "overlap", params_json(o, c), csv.str(), rep, timer.seconds(), 0);
}

int run_overlap_identity(const OverlapCli& o, int grid_points, const Common& c) {
    Timer timer;
    pam::OverlapIdentityResult r = pam::overlap_identity_check(to_spec(o, c), grid_points);
    pam::CsvWriter csv({"row", "x", "value", "se"});
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
        csv.add(std::string("overlap")).add(r.grid[k]).add(r.overlaps[k].value)
            .add(r.overlaps[k].stderror);
        csv.end_row();
    }
    csv.add(std::string("lhs_logZ")).add(o.beta).add(r.lhs).add(r.lhs_se);
    csv.end_row();
    csv.add(std::string("rhs_integral")).add(o.beta).add(r.rhs).add(r.rhs_se);
    csv.end_row();
    csv.add(std::string("z")).add(o.beta).add(r.z).add(0.0);
    csv.end_row();
    json rep;
    rep["lhs"] = r.lhs;
    rep["lhs_se"] = r.lhs_se;
    rep["rhs"] = r.rhs;
    rep["rhs_se"] = r.rhs_se;
    rep["z"] = r.z;
    json grid = json::array();
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
        json g;
        g["b"] = r.grid[k];
        g["overlap"] = est_json(r.overlaps[k]);
        grid.push_back(g);
    }
    rep["grid"] = grid;
    bool pass = std::abs(r.z) <= 3.0;
    rep["pass"] = pass;
    json params = params_json(o, c);
    params["grid_points"] = grid_points;
    return finish_run(c, "overlap-identity", params, csv.str(), rep, timer.seconds(),
                      pass ? 0 : 3);
}

// ---------------------------------------------------------------------------
// decay fits

int run_fractional_decay(const FreeEnergyCli& o, double theta,
                         const std::vector<double>& horizons, const Common& c) {
    Timer timer;
    pam::FreeEnergySpec base = to_spec(o, c);
    pam::FractionalDecay r = pam::fractional_decay(base, theta, horizons);
    pam::CsvWriter csv({"row", "x", "value", "se"});
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        const pam::Estimate& m = r.moments[i];
        csv.add(std::string("log_moment")).add(horizons[i]).add(m.log_value)
            .add(m.value > 0 ? m.stderror / m.value : 0.0);
        csv.end_row();
    }
    csv.add(std::string("slope")).add(theta).add(r.fit.fit.slope).add(r.fit.fit.slope_stderr);
    csv.end_row();
    json rep;
    rep["slope"] = r.fit.fit.slope;
    rep["slope_se"] = r.fit.fit.slope_stderr;
    rep["intercept"] = r.fit.fit.intercept;
    rep["points_used"] = r.fit.points_used;
    rep["points_dropped"] = r.fit.points_dropped;
    json pts = json::array();
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        json pt;
        pt["T"] = horizons[i];
        pt["moment"] = est_json(r.moments[i]);
        pts.push_back(pt);
    }
    rep["points"] = pts;
    bool pass = r.fit.fit.slope + 3.0 * r.fit.fit.slope_stderr < 0.0;
    rep["pass"] = pass;
    json params = params_json(o, c);
    params.erase("T");
    params["theta"] = theta;
    params["horizons"] = horizons;
    return finish_run(c, "fractional-decay", params, csv.str(), rep, timer.seconds(),
                      pass ? 0 : 3);
}

int run_beta4_fit(const FreeEnergyCli& o, const std::vector<double>& betas,
                  const Common& c) {
    Timer timer;
    pam::FreeEnergySpec base = to_spec(o, c);
    pam::DecayFit r = pam::beta4_slope(base, betas);
    pam::CsvWriter csv({"row", "x", "value", "se"});
    for (std::size_t i = 0; i < r.xs.size(); ++i) {
        csv.add(std::string("log_neg_psi")).add(r.xs[i]).add(r.ys[i])
            .add(1.0 / std::sqrt(r.ws[i]));
        csv.end_row();
    }
    csv.add(std::string("slope")).add(0.0).add(r.fit.slope).add(r.fit.slope_stderr);
    csv.end_row();
    json rep;
    rep["slope"] = r.fit.slope;
    rep["slope_se"] = r.fit.slope_stderr;
    rep["intercept"] = r.fit.intercept;
    rep["points_used"] = r.points_used;
    rep["points_dropped"] = r.points_dropped;
    json params = params_json(o, c);
    params.erase("beta");
    params["betas"] = betas;
    return finish_run(c, "beta4-fit", params, csv.str(), rep, timer.seconds(), 0);
}

// ---------------------------------------------------------------------------
// rescale-check

int run_rescale(const FreeEnergyCli& o, const Common& c) {
    Timer timer;
    pam::RescaleCheck r = pam::kappa_rescale_check(to_spec(o, c));
    pam::CsvWriter csv({"row", "x", "value", "se"});
    csv.add(std::string("psi_original")).add(o.kappa).add(r.original.psi.value)
        .add(r.original.psi.stderror);
    csv.end_row();
    csv.add(std::string("psi_rescaled_scaled")).add(1.0).add(r.scaled_psi).add(r.scaled_se);
    csv.end_row();
    csv.add(std::string("z")).add(0.0).add(r.z).add(0.0);
    csv.end_row();
    json rep;
    rep["psi_original"] = est_json(r.original.psi);
    rep["psi_rescaled"] = est_json(r.rescaled.psi);
    rep["scaled_psi"] = r.scaled_psi;
    rep["scaled_se"] = r.scaled_se;
    rep["z"] = r.z;
    bool pass = std::abs(r.z) <= 3.0;
    rep["pass"] = pass;
    return finish_run(c, "rescale-check", params_json(o, c), csv.str(), rep,
                      timer.seconds(), pass ? 0 : 3);
}

// ---------------------------------------------------------------------------
// large-beta

int run_large_beta(const FreeEnergyCli& o, const std::vector<double>& betas,
                   const Common& c) {
    Timer timer;
    pam::FreeEnergySpec base = to_spec(o, c);
    pam::LargeBetaProfile r = pam::large_beta_profile(base, betas);
    pam::CsvWriter csv({"beta", "psi", "psi_se", "ratio", "x"});
    json pts = json::array();
    for (const pam::LargeBetaPoint& pt : r.points) {
        csv.add(pt.beta).add(pt.psi.value).add(pt.psi.stderror).add(pt.ratio).add(pt.x);
        csv.end_row();
        json j;
        j["beta"] = pt.beta;
        j["psi"] = est_json(pt.psi);
        j["ratio"] = pt.ratio;
        j["x"] = pt.x;
        pts.push_back(j);
    }
    json rep;
    rep["points"] = pts;
    rep["alpha_sq"] = r.alpha_sq;
    rep["below_half"] = r.below_half;
    rep["monotone"] = r.monotone;
    json params = params_json(o, c);
    params.erase("beta");
    params["betas"] = betas;
    return finish_run(c, "large-beta", params, csv.str(), rep, timer.seconds(),
                      r.below_half ? 0 : 3);
}

// ---------------------------------------------------------------------------
// certificates

struct CertifyCli {
    long n = 16;
    int m = 2, R = 3, L = 64;
    double theta = 0.5;
    double C1 = 4, C2 = 1, C3 = 2, C4 = 2, C5 = 1, K = 1;
    double delta = 0;
    std::string norm = "euclidean";
    double beta = 1.0, kappa = 1.0, dt = 0, r_dt = 0.25;
    long reps_z = 2000, reps_path = 10000, reps_env = 2000;
};

pam::CoarseGrainSpec cert_spec(const CertifyCli& o, int d) {
    pam::CoarseGrainSpec cg;
    cg.d = d;
    cg.n = pam::CoarseGrainSpec::square_above(o.n);
    cg.m = o.m;
    cg.theta = o.theta;
    cg.C1 = o.C1;
    cg.C2 = o.C2;
    cg.C3 = o.C3;
    cg.C4 = o.C4;
    cg.C5 = o.C5;
    cg.K = o.K;
    cg.delta = o.delta;
    cg.R = o.R;
    cg.norm = parse_norm(o.norm);
    return cg;
}

pam::CertificateParams cert_params(const CertifyCli& o, const Common& c) {
    pam::CertificateParams p;
    p.beta = o.beta;
    p.kappa = o.kappa;
    p.L = o.L;
    p.reps_z = o.reps_z;
    p.reps_path = o.reps_path;
    p.reps_env = o.reps_env;
    p.dt = o.dt;
    p.r_dt = o.r_dt;
    p.seed = c.seed;
    p.workers = c.workers;
    return p;
}

json params_json(const CertifyCli& o, const Common& c, int d) {
    json p;
    p["d"] = d;
    p["n"] = o.n;
    p["m"] = o.m;
    p["R"] = o.R;
    p["L"] = o.L;
    p["theta"] = o.theta;
    p["C1"] = o.C1;
    p["C2"] = o.C2;
    p["C3"] = o.C3;
    p["C4"] = o.C4;
    p["C5"] = o.C5;
    p["K"] = o.K;
    p["delta"] = o.delta;
    p["norm"] = o.norm;
    p["beta"] = o.beta;
    p["kappa"] = o.kappa;
    p["dt"] = o.dt;
    p["r_dt"] = o.r_dt;
    p["reps_z"] = o.reps_z;
    p["reps_path"] = o.reps_path;
    p["reps_env"] = o.reps_env;
    p["seed"] = c.seed;
    return p;
}

json lines_json(const std::vector<pam::CertificateLine>& lines) {
    json out = json::array();
    for (const pam::CertificateLine& l : lines) {
        json j;
        j["name"] = l.name;
        j["lhs"] = l.lhs;
        j["rhs"] = l.rhs;
        j["pass"] = l.pass;
        j["note"] = l.note;
        out.push_back(j);
    }
    return out;
}

void lines_csv(pam::CsvWriter& csv, const std::vector<pam::CertificateLine>& lines) {
    for (const pam::CertificateLine& l : lines) {
        csv.add(l.name).add(l.lhs).add(l.rhs).add(l.pass);
        csv.end_row();
    }
}

int run_certify_d1(const CertifyCli& o, const Common& c) {
    Timer timer;
    pam::CoarseGrainSpec cg = cert_spec(o, 1);
    pam::D1Certificate cert = pam::d1_bound_certificate(cg, cert_params(o, c));
    pam::CsvWriter csv({"line", "lhs", "rhs", "pass"});
    lines_csv(csv, cert.lines);
    json rep;
    rep["pass"] = cert.pass;
    rep["lines"] = lines_json(cert.lines);
    rep["delta"] = cert.delta;
    rep["lhs"] = est_json(cert.lhs);
    rep["rhs"] = cert.rhs;
    rep["rhs_se"] = cert.rhs_stderr;
    rep["tail"] = cert.tail;
    rep["first_factor_exact"] = cert.first_factor_exact;
    rep["first_factor_bound"] = cert.first_factor_bound;
    rep["in_block_factor"] = cert.in_block_factor;
    rep["exit_prob"] = est_json(cert.exit_prob);
    rep["prescribed_n"] = cert.prescribed_n;
    json slices = json::array();
    for (std::size_t i = 0; i < cert.slice.size(); ++i) {
        json s;
        s["z"] = cert.slice_index[i];
        s["value"] = cert.slice[i];
        s["se"] = cert.slice_se[i];
        slices.push_back(s);
    }
    rep["slices"] = slices;
    rep["n_effective"] = cg.n;
    return finish_run(c, "certify-d1", params_json(o, c, 1), csv.str(), rep,
                      timer.seconds(), cert.pass ? 0 : 4);
}

int run_certify_d2(const CertifyCli& o, const Common& c) {
    Timer timer;
    pam::CoarseGrainSpec cg = cert_spec(o, 2);
    pam::D2Certificate cert = pam::d2_bound_certificate(cg, cert_params(o, c));
    pam::CsvWriter csv({"line", "lhs", "rhs", "pass"});
    lines_csv(csv, cert.lines);
    json rep;
    rep["pass"] = cert.pass;
    rep["lines"] = lines_json(cert.lines);
    rep["lhs"] = est_json(cert.lhs);
    rep["rhs"] = cert.rhs;
    rep["rhs_se"] = cert.rhs_stderr;
    rep["tail"] = cert.tail;
    rep["first_factor"] = cert.first_factor;
    rep["first_factor_se"] = cert.first_factor_se;
    rep["first_factor_bound"] = cert.first_factor_bound;
    rep["k_premise"] = cert.k_premise;
    rep["threshold_prob"] = est_json(cert.threshold_prob);
    rep["mean_shift_analytic"] = cert.mean_shift_analytic;
    rep["mean_shift_mc"] = est_json(cert.mean_shift_mc);
    rep["var_qhat"] = cert.var_qhat;
    rep["var_qhat_se"] = cert.var_qhat_se;
    rep["exit_prob"] = est_json(cert.exit_prob);
    rep["three_term_bound"] = cert.three_term_bound;
    rep["dn"] = cert.dn;
    rep["mean_Y"] = cert.mean_Y;
    rep["prescribed_n"] = cert.prescribed_n;
    json slices = json::array();
    for (std::size_t i = 0; i < cert.slice.size(); ++i) {
        json s;
        s["z"] = cert.slice_index[i];
        s["value"] = cert.slice[i];
        s["se"] = cert.slice_se[i];
        slices.push_back(s);
    }
    rep["slices"] = slices;
    rep["n_effective"] = cg.n;
    return finish_run(c, "certify-d2", params_json(o, c, 2), csv.str(), rep,
                      timer.seconds(), cert.pass ? 0 : 4);
}

// ---------------------------------------------------------------------------
// report: scan manifests in a directory

int run_report(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir)) throw std::invalid_argument("report: no such directory: " + dir);
    std::vector<std::string> corrupt;
    // label -> (digest, manifest path)
    std::map<std::string, std::pair<std::string, std::string>> seen;
    std::vector<json> manifests;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() &&
            entry.path().filename().string().size() > 14 &&
            entry.path().filename().string().substr(
                entry.path().filename().string().size() - 14) == ".manifest.json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& path : files) {
        json m;
        try {
            m = json::parse(pam::read_file(path.string()));
            if (!m.contains("label") || !m.contains("digest") || !m.contains("command"))
                throw std::runtime_error("missing fields");
        } catch (const std::exception&) {
            corrupt.push_back(path.string());
            continue;
        }
        std::string label = m.at("label").get<std::string>();
        std::string digest = m.at("digest").get<std::string>();
        auto it = seen.find(label);
        if (it != seen.end() && it->second.first != digest) {
            std::fprintf(stderr,
                         "report: digest clash for run '%s': %s (%s) vs %s (%s)\n",
                         label.c_str(), it->second.first.c_str(), it->second.second.c_str(),
                         digest.c_str(), path.string().c_str());
            return 2;
        }
        seen.emplace(label, std::make_pair(digest, path.string()));
        manifests.push_back(m);
    }
    std::printf("%-24s %-18s %-16s %s\n", "label", "command", "digest", "results");
    for (const json& m : manifests) {
        std::string results;
        if (m.contains("outputs") && m.at("outputs").contains("results"))
            results = m.at("outputs").at("results").get<std::string>();
        std::printf("%-24s %-18s %-16s %s\n", m.at("label").get<std::string>().c_str(),
                    m.at("command").get<std::string>().c_str(),
                    m.at("digest").get<std::string>().c_str(), results.c_str());
    }
    for (const std::string& path : corrupt)
        std::printf("CORRUPT %s\n", path.c_str());
    return corrupt.empty() ? 0 : 3;
}

} // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"lattice polymer laboratory: free energy, overlap, and "
                 "coarse-graining certificates for a Brownian environment"};
    app.require_subcommand(1);

    Common c;
    app.add_option("--config", c.config, "JSON config file (section per subcommand)");
    app.add_option("--out", c.out, "output directory for run artifacts");
    app.add_option("--label", c.label, "run label (default: subcommand name)");
    app.add_option("--workers", c.workers, "worker threads (never affects results)");
    app.add_option("--seed", c.seed, "master seed");

    // ---- free-energy family options (shared struct, per-subcommand instances)
    auto add_fe_options = [](CLI::App* sub, FreeEnergyCli& o) {
        std::map<std::string, CLI::Option*> opts;
        opts["d"] = sub->add_option("--d", o.d, "dimension (1..3)");
        opts["L"] = sub->add_option("--L", o.L, "box half-width");
        opts["boundary"] = sub->add_option("--boundary", o.boundary, "absorbing|periodic");
        opts["scheme"] = sub->add_option("--scheme", o.scheme, "exponential|explicit");
        opts["beta"] = sub->add_option("--beta", o.beta, "disorder strength");
        opts["kappa"] = sub->add_option("--kappa", o.kappa, "diffusivity");
        opts["T"] = sub->add_option("--T", o.T, "horizon");
        opts["dt"] = sub->add_option("--dt", o.dt, "time step (0 = default)");
        opts["reps"] = sub->add_option("--reps", o.reps, "environment replicas");
        return opts;
    };
    auto fill_fe = [](const json& sec, const std::map<std::string, CLI::Option*>& opts,
                      FreeEnergyCli& o) {
        fill(sec, opts.at("d"), "d", o.d);
        fill(sec, opts.at("L"), "L", o.L);
        fill(sec, opts.at("boundary"), "boundary", o.boundary);
        fill(sec, opts.at("scheme"), "scheme", o.scheme);
        fill(sec, opts.at("beta"), "beta", o.beta);
        fill(sec, opts.at("kappa"), "kappa", o.kappa);
        fill(sec, opts.at("T"), "T", o.T);
        fill(sec, opts.at("dt"), "dt", o.dt);
        fill(sec, opts.at("reps"), "reps", o.reps);
    };
    auto fill_common = [&](const json& sec, CLI::App* sub) {
        (void)sub;
        if (app.get_option("--out")->count() == 0 && sec.contains("out"))
            c.out = sec.at("out").get<std::string>();
        if (app.get_option("--workers")->count() == 0 && sec.contains("workers"))
            c.workers = sec.at("workers").get<int>();
        if (app.get_option("--seed")->count() == 0 && sec.contains("seed"))
            c.seed = sec.at("seed").get<std::uint64_t>();
        if (app.get_option("--label")->count() == 0 && sec.contains("label"))
            c.label = sec.at("label").get<std::string>();
    };

    int rc = 0;

    // free-energy
    FreeEnergyCli fe_o;
    auto* fe_sub = app.add_subcommand("free-energy", "quenched free energy estimate");
    auto fe_opts = add_fe_options(fe_sub, fe_o);
    fe_sub->callback([&] {
        json sec = load_config_section(c.config, "free-energy");
        fill_common(sec, fe_sub);
        fill_fe(sec, fe_opts, fe_o);
        rc = run_free_energy(fe_o, c);
    });

    // martingale-check
    FreeEnergyCli mg_o;
    mg_o.T = 2.0;
    std::vector<double> mg_betas{0.25, 0.5, 1.0};
    auto* mg_sub = app.add_subcommand("martingale-check",
                                      "E[Z_T] = 1 across betas (3 sigma)");
    auto mg_opts = add_fe_options(mg_sub, mg_o);
    auto* mg_beta_opt = mg_sub->add_option("--betas", mg_betas, "beta grid");
    mg_sub->callback([&] {
        json sec = load_config_section(c.config, "martingale-check");
        fill_common(sec, mg_sub);
        fill_fe(sec, mg_opts, mg_o);
        fill(sec, mg_beta_opt, "betas", mg_betas);
        rc = run_martingale(mg_o, mg_betas, c);
    });

    // overlap
    OverlapCli ov_o;
    auto* ov_sub = app.add_subcommand("overlap", "replica overlap under the polymer measure");
    std::map<std::string, CLI::Option*> ov_opts;
    ov_opts["d"] = ov_sub->add_option("--d", ov_o.d, "dimension");
    ov_opts["L"] = ov_sub->add_option("--L", ov_o.L, "box half-width");
    ov_opts["beta"] = ov_sub->add_option("--beta", ov_o.beta, "disorder strength");
    ov_opts["kappa"] = ov_sub->add_option("--kappa", ov_o.kappa, "diffusivity");
    ov_opts["T"] = ov_sub->add_option("--T", ov_o.T, "horizon");
    ov_opts["n_paths"] = ov_sub->add_option("--n-paths", ov_o.n_paths, "paths per environment");
    ov_opts["n_envs"] = ov_sub->add_option("--n-envs", ov_o.n_envs, "environments");
    auto fill_ov = [&](const json& sec) {
        fill(sec, ov_opts.at("d"), "d", ov_o.d);
        fill(sec, ov_opts.at("L"), "L", ov_o.L);
        fill(sec, ov_opts.at("beta"), "beta", ov_o.beta);
        fill(sec, ov_opts.at("kappa"), "kappa", ov_o.kappa);
        fill(sec, ov_opts.at("T"), "T", ov_o.T);
        fill(sec, ov_opts.at("n_paths"), "n_paths", ov_o.n_paths);
        fill(sec, ov_opts.at("n_envs"), "n_envs", ov_o.n_envs);
    };
    ov_sub->callback([&] {
        json sec = load_config_section(c.config, "overlap");
        fill_common(sec, ov_sub);
        fill_ov(sec);
        rc = run_overlap(ov_o, c);
    });

    // overlap-identity
    OverlapCli oi_o;
    int oi_grid = 6;
    auto* oi_sub = app.add_subcommand(
        "overlap-identity", "Q[log Z] = -T int b Q[overlap(b)] db (3 sigma)");
    std::map<std::string, CLI::Option*> oi_opts;
    oi_opts["d"] = oi_sub->add_option("--d", oi_o.d, "dimension");
    oi_opts["L"] = oi_sub->add_option("--L", oi_o.L, "box half-width");
    oi_opts["beta"] = oi_sub->add_option("--beta", oi_o.beta, "upper endpoint");
    oi_opts["kappa"] = oi_sub->add_option("--kappa", oi_o.kappa, "diffusivity");
    oi_opts["T"] = oi_sub->add_option("--T", oi_o.T, "horizon");
    oi_opts["n_paths"] = oi_sub->add_option("--n-paths", oi_o.n_paths, "paths per environment");
    oi_opts["n_envs"] = oi_sub->add_option("--n-envs", oi_o.n_envs, "environments");
    auto* oi_grid_opt = oi_sub->add_option("--grid-points", oi_grid, "trapezoid panels");
    oi_sub->callback([&] {
        json sec = load_config_section(c.config, "overlap-identity");
        fill_common(sec, oi_sub);
        fill(sec, oi_opts.at("d"), "d", oi_o.d);
        fill(sec, oi_opts.at("L"), "L", oi_o.L);
        fill(sec, oi_opts.at("beta"), "beta", oi_o.beta);
        fill(sec, oi_opts.at("kappa"), "kappa", oi_o.kappa);
        fill(sec, oi_opts.at("T"), "T", oi_o.T);
        fill(sec, oi_opts.at("n_paths"), "n_paths", oi_o.n_paths);
        fill(sec, oi_opts.at("n_envs"), "n_envs", oi_o.n_envs);
        fill(sec, oi_grid_opt, "grid_points", oi_grid);
        rc = run_overlap_identity(oi_o, oi_grid, c);
    });

    // fractional-decay
    FreeEnergyCli fd_o;
    double fd_theta = 0.5;
    std::vector<double> fd_horizons{4, 8, 12, 16};
    auto* fd_sub = app.add_subcommand("fractional-decay",
                                      "log Q[Z_T^theta] decreasing in T (3 sigma)");
    auto fd_opts = add_fe_options(fd_sub, fd_o);
    auto* fd_theta_opt = fd_sub->add_option("--theta", fd_theta, "fractional exponent");
    auto* fd_h_opt = fd_sub->add_option("--horizons", fd_horizons, "T grid");
    fd_sub->callback([&] {
        json sec = load_config_section(c.config, "fractional-decay");
        fill_common(sec, fd_sub);
        fill_fe(sec, fd_opts, fd_o);
        fill(sec, fd_theta_opt, "theta", fd_theta);
        fill(sec, fd_h_opt, "horizons", fd_horizons);
        rc = run_fractional_decay(fd_o, fd_theta, fd_horizons, c);
    });

    // beta4-fit
    FreeEnergyCli b4_o;
    std::vector<double> b4_betas{0.5, 0.7, 1.0, 1.4};
    auto* b4_sub = app.add_subcommand("beta4-fit",
                                      "log(-psi) vs log(beta) weighted slope");
    auto b4_opts = add_fe_options(b4_sub, b4_o);
    auto* b4_beta_opt = b4_sub->add_option("--betas", b4_betas, "beta grid");
    b4_sub->callback([&] {
        json sec = load_config_section(c.config, "beta4-fit");
        fill_common(sec, b4_sub);
        fill_fe(sec, b4_opts, b4_o);
        fill(sec, b4_beta_opt, "betas", b4_betas);
        rc = run_beta4_fit(b4_o, b4_betas, c);
    });

    // rescale-check
    FreeEnergyCli rs_o;
    rs_o.kappa = 4.0;
    auto* rs_sub = app.add_subcommand(
        "rescale-check", "psi(kappa,beta,T) = kappa psi(1,beta/sqrt(kappa),kappa T)");
    auto rs_opts = add_fe_options(rs_sub, rs_o);
    rs_sub->callback([&] {
        json sec = load_config_section(c.config, "rescale-check");
        fill_common(sec, rs_sub);
        fill_fe(sec, rs_opts, rs_o);
        rc = run_rescale(rs_o, c);
    });

    // large-beta
    FreeEnergyCli lb_o;
    lb_o.T = 4.0;
    std::vector<double> lb_betas{2.0, 2.83, 4.0};
    auto* lb_sub = app.add_subcommand("large-beta",
                                      "strong-disorder profile psi/beta^2 vs 1/(4 log beta^2)");
    auto lb_opts = add_fe_options(lb_sub, lb_o);
    auto* lb_beta_opt = lb_sub->add_option("--betas", lb_betas, "beta grid (beta^2 > 1)");
    lb_sub->callback([&] {
        json sec = load_config_section(c.config, "large-beta");
        fill_common(sec, lb_sub);
        fill_fe(sec, lb_opts, lb_o);
        fill(sec, lb_beta_opt, "betas", lb_betas);
        rc = run_large_beta(lb_o, lb_betas, c);
    });

    // certify-d1 / certify-d2
    auto add_cert_options = [](CLI::App* sub, CertifyCli& o) {
        std::map<std::string, CLI::Option*> opts;
        opts["n"] = sub->add_option("--n", o.n, "block duration (rounded up to a square)");
        opts["m"] = sub->add_option("--m", o.m, "number of blocks");
        opts["R"] = sub->add_option("--R", o.R, "corridor range");
        opts["L"] = sub->add_option("--L", o.L, "box half-width for Q[Z^theta]");
        opts["theta"] = sub->add_option("--theta", o.theta, "fractional exponent");
        opts["C1"] = sub->add_option("--C1", o.C1, "d=1 block width constant");
        opts["C2"] = sub->add_option("--C2", o.C2, "d=1 rate constant (reporting)");
        opts["C3"] = sub->add_option("--C3", o.C3, "d=2 block width constant");
        opts["C4"] = sub->add_option("--C4", o.C4, "kernel spatial constant");
        opts["C5"] = sub->add_option("--C5", o.C5, "d=2 rate constant (reporting)");
        opts["K"] = sub->add_option("--K", o.K, "penalty threshold");
        opts["delta"] = sub->add_option("--delta", o.delta,
                                        "tilt strength (0 = C1^{-1/2} n^{-3/4})");
        opts["norm"] = sub->add_option("--norm", o.norm, "euclidean|supnorm");
        opts["beta"] = sub->add_option("--beta", o.beta, "disorder strength");
        opts["kappa"] = sub->add_option("--kappa", o.kappa, "diffusivity");
        opts["dt"] = sub->add_option("--dt", o.dt, "solver step (0 = default)");
        opts["r_dt"] = sub->add_option("--r-dt", o.r_dt, "correlation grid step");
        opts["reps_z"] = sub->add_option("--reps-z", o.reps_z, "solver replicas");
        opts["reps_path"] = sub->add_option("--reps-path", o.reps_path, "paths per slice");
        opts["reps_env"] = sub->add_option("--reps-env", o.reps_env,
                                           "environment replicas for R factors");
        return opts;
    };
    auto fill_cert = [](const json& sec, const std::map<std::string, CLI::Option*>& opts,
                        CertifyCli& o) {
        fill(sec, opts.at("n"), "n", o.n);
        fill(sec, opts.at("m"), "m", o.m);
        fill(sec, opts.at("R"), "R", o.R);
        fill(sec, opts.at("L"), "L", o.L);
        fill(sec, opts.at("theta"), "theta", o.theta);
        fill(sec, opts.at("C1"), "C1", o.C1);
        fill(sec, opts.at("C2"), "C2", o.C2);
        fill(sec, opts.at("C3"), "C3", o.C3);
        fill(sec, opts.at("C4"), "C4", o.C4);
        fill(sec, opts.at("C5"), "C5", o.C5);
        fill(sec, opts.at("K"), "K", o.K);
        fill(sec, opts.at("delta"), "delta", o.delta);
        fill(sec, opts.at("norm"), "norm", o.norm);
        fill(sec, opts.at("beta"), "beta", o.beta);
        fill(sec, opts.at("kappa"), "kappa", o.kappa);
        fill(sec, opts.at("dt"), "dt", o.dt);
        fill(sec, opts.at("r_dt"), "r_dt", o.r_dt);
        fill(sec, opts.at("reps_z"), "reps_z", o.reps_z);
        fill(sec, opts.at("reps_path"), "reps_path", o.reps_path);
        fill(sec, opts.at("reps_env"), "reps_env", o.reps_env);
    };

    CertifyCli c1_o;
    auto* c1_sub = app.add_subcommand("certify-d1",
                                      "d=1 fractional-moment bound certificate");
    auto c1_opts = add_cert_options(c1_sub, c1_o);
    c1_sub->callback([&] {
        json sec = load_config_section(c.config, "certify-d1");
        fill_common(sec, c1_sub);
        fill_cert(sec, c1_opts, c1_o);
        rc = run_certify_d1(c1_o, c);
    });

    CertifyCli c2_o;
    c2_o.n = 9;
    c2_o.R = 2;
    c2_o.L = 15;
    c2_o.beta = 0.7;
    c2_o.reps_z = 600;
    c2_o.reps_path = 1200;
    c2_o.reps_env = 2000;
    auto* c2_sub = app.add_subcommand("certify-d2",
                                      "d=2 penalty/coarse-graining bound certificate");
    auto c2_opts = add_cert_options(c2_sub, c2_o);
    c2_sub->callback([&] {
        json sec = load_config_section(c.config, "certify-d2");
        fill_common(sec, c2_sub);
        fill_cert(sec, c2_opts, c2_o);
        rc = run_certify_d2(c2_o, c);
    });

    // report
    std::string rep_dir;
    auto* rp_sub = app.add_subcommand("report", "summarize run manifests in a directory");
    auto* rp_dir_opt = rp_sub->add_option("--dir", rep_dir, "directory to scan");
    rp_sub->callback([&] {
        json sec = load_config_section(c.config, "report");
        fill_common(sec, rp_sub);
        if (rp_dir_opt->count() == 0 && sec.contains("dir"))
            rep_dir = sec.at("dir").get<std::string>();
        if (rep_dir.empty()) rep_dir = c.out;
        rc = run_report(rep_dir);
    });

    // Let global options (--out, --seed, ...) appear after the subcommand.
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return rc;
}
