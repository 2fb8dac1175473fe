#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "json.hpp"
#include "pam/run_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = PAMLAB_BINARY;

fs::path scratch_root() {
    static fs::path p = [] {
        fs::path root = fs::temp_directory_path() / "pamlab_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
        return root;
    }();
    return p;
}

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    fs::path log = scratch_root() / ("cmd_" + std::to_string(counter++) + ".log");
    std::string cmd = kBin + " " + args + " > " + log.string() + " 2>&1";
    int raw = std::system(cmd.c_str());
    RunResult r;
    if (raw == -1) return r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -2;
    r.out = pam::read_file(log.string());
    return r;
}

std::string tiny_fe_args(const std::string& out, const std::string& label, int workers,
                         unsigned seed) {
    return "free-energy --d 1 --L 12 --beta 0.6 --T 1 --reps 30 --out " + out +
           " --label " + label + " --workers " + std::to_string(workers) + " --seed " +
           std::to_string(seed);
}

} // namespace

TEST_CASE("help and usage errors") {
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("free-energy --help").code == 0);
    CHECK(run_cli("").code == 2);                           // subcommand required
    CHECK(run_cli("free-energy --no-such-flag 1").code == 2);
    CHECK(run_cli("free-energy --d 5").code == 2);          // validation
    CHECK(run_cli("free-energy --scheme bogus").code == 2); // enum parse
    CHECK(run_cli("overlap --L 2").code == 2);              // box too small
    CHECK(run_cli("free-energy --config /no/such/file.json").code == 2);
}

TEST_CASE("run artifacts: results, report, manifest, digest") {
    fs::path out = scratch_root() / "basic";
    RunResult r = run_cli(tiny_fe_args(out.string(), "fe-a", 1, 5));
    REQUIRE(r.code == 0);

    pam::RunPaths paths = pam::run_paths(out.string(), "fe-a");
    REQUIRE(fs::exists(paths.results_csv));
    REQUIRE(fs::exists(paths.report_json));
    REQUIRE(fs::exists(paths.manifest_json));

    std::string csv = pam::read_file(paths.results_csv);
    CHECK(csv.rfind("beta,kappa,T,psi,", 0) == 0); // header row first

    json report = json::parse(pam::read_file(paths.report_json));
    json manifest = json::parse(pam::read_file(paths.manifest_json));
    CHECK(report.at("digest") == manifest.at("digest"));
    CHECK(report.at("command") == "free-energy");
    CHECK(report.at("params").contains("beta"));
    CHECK_FALSE(report.at("params").contains("workers")); // semantic params only
    CHECK(manifest.at("workers") == 1);
    CHECK(manifest.at("label") == "fe-a");
    CHECK(report.at("psi").at("value").get<double>() < 0.1);
}

TEST_CASE("identical configurations produce identical bytes for any worker count") {
    fs::path o1 = scratch_root() / "det1";
    fs::path o2 = scratch_root() / "det2";
    REQUIRE(run_cli(tiny_fe_args(o1.string(), "fe-det", 1, 9)).code == 0);
    REQUIRE(run_cli(tiny_fe_args(o2.string(), "fe-det", 3, 9)).code == 0);
    pam::RunPaths p1 = pam::run_paths(o1.string(), "fe-det");
    pam::RunPaths p2 = pam::run_paths(o2.string(), "fe-det");
    CHECK(pam::read_file(p1.results_csv) == pam::read_file(p2.results_csv));
    CHECK(pam::read_file(p1.report_json) == pam::read_file(p2.report_json));

    // a different seed must change the digest
    fs::path o3 = scratch_root() / "det3";
    REQUIRE(run_cli(tiny_fe_args(o3.string(), "fe-det", 1, 10)).code == 0);
    json m1 = json::parse(pam::read_file(p1.manifest_json));
    json m3 = json::parse(
        pam::read_file(pam::run_paths(o3.string(), "fe-det").manifest_json));
    CHECK(m1.at("digest") != m3.at("digest"));
}

TEST_CASE("config file fills unset options; flags win") {
    fs::path out = scratch_root() / "cfg";
    fs::path cfgfile = scratch_root() / "config.json";
    json cfg;
    cfg["seed"] = 123;                      // global scalar
    cfg["free-energy"]["beta"] = 0.25;      // section values
    cfg["free-energy"]["T"] = 1.0;
    cfg["free-energy"]["L"] = 10;
    cfg["free-energy"]["reps"] = 20;
    pam::write_file(cfgfile.string(), cfg.dump(2));

    RunResult r = run_cli("free-energy --config " + cfgfile.string() + " --beta 0.5 --out " +
                          out.string() + " --label cfg-run");
    REQUIRE(r.code == 0);
    json report = json::parse(
        pam::read_file(pam::run_paths(out.string(), "cfg-run").report_json));
    CHECK(report.at("params").at("beta") == 0.5); // flag overrides config
    CHECK(report.at("params").at("T") == 1.0);    // config fills the rest
    CHECK(report.at("params").at("L") == 10);
    CHECK(report.at("params").at("seed") == 123);
}

TEST_CASE("martingale check flags a scheme with a biased mean") {
    fs::path out = scratch_root() / "mart";
    // exponential scheme: mean-one per step, passes even at coarse dt
    RunResult good = run_cli("martingale-check --d 1 --L 10 --T 2 --dt 0.0625 --reps 80 "
                             "--betas 0.5 1.0 --out " + out.string() + " --label mart-ok");
    CHECK(good.code == 0);
    // explicit Euler at coarse dt under-estimates the mean by (1 - b^2 dt/2)^n
    RunResult bad = run_cli("martingale-check --d 1 --L 10 --T 2 --dt 0.125 --reps 80 "
                            "--scheme explicit --betas 1.4 --out " + out.string() +
                            " --label mart-bias");
    CHECK(bad.code == 3);
    json report = json::parse(
        pam::read_file(pam::run_paths(out.string(), "mart-bias").report_json));
    CHECK(report.at("pass") == false);
    CHECK(report.at("points").at(0).at("mean_Z").at("value").get<double>() < 0.5);
}

TEST_CASE("certificates: pass exits 0, a broken premise exits 4") {
    fs::path out = scratch_root() / "cert";
    std::string common = " --n 4 --m 2 --R 2 --L 28 --reps-z 50 --reps-path 300 "
                         "--dt 0.03125 --seed 3 --workers 2 --out " + out.string();
    RunResult ok = run_cli("certify-d1" + common + " --label cert-ok");
    CHECK(ok.code == 0);
    json report = json::parse(
        pam::read_file(pam::run_paths(out.string(), "cert-ok").report_json));
    CHECK(report.at("pass") == true);
    CHECK(report.at("lines").size() == 4);

    RunResult bad = run_cli("certify-d1" + common + " --label cert-bad --delta -0.17678");
    CHECK(bad.code == 4);
    json rbad = json::parse(
        pam::read_file(pam::run_paths(out.string(), "cert-bad").report_json));
    CHECK(rbad.at("pass") == false);
}

TEST_CASE("n is rounded up to the next perfect square") {
    fs::path out = scratch_root() / "round";
    RunResult r = run_cli("certify-d1 --n 3 --m 1 --R 1 --L 20 --reps-z 30 --reps-path 200 "
                          "--dt 0.0625 --out " + out.string() + " --label cert-round");
    REQUIRE(r.code == 0);
    json report = json::parse(
        pam::read_file(pam::run_paths(out.string(), "cert-round").report_json));
    CHECK(report.at("n_effective") == 4);
    CHECK(report.at("params").at("n") == 3); // requested value stays in the digest
}

TEST_CASE("report lists manifests, flags corruption, refuses digest clashes") {
    fs::path out = scratch_root() / "rep";
    REQUIRE(run_cli(tiny_fe_args(out.string(), "rep-a", 1, 1)).code == 0);
    REQUIRE(run_cli(tiny_fe_args(out.string(), "rep-b", 1, 2)).code == 0);

    RunResult listing = run_cli("report --dir " + out.string());
    CHECK(listing.code == 0);
    CHECK(listing.out.find("rep-a") != std::string::npos);
    CHECK(listing.out.find("rep-b") != std::string::npos);

    // corrupt manifest: reported, exit 3
    pam::write_file((out / "zz-broken.manifest.json").string(), "{not json");
    RunResult corrupt = run_cli("report --dir " + out.string());
    CHECK(corrupt.code == 3);
    CHECK(corrupt.out.find("CORRUPT") != std::string::npos);
    fs::remove(out / "zz-broken.manifest.json");

    // same label, different digest: refuse
    json clash = json::parse(
        pam::read_file(pam::run_paths(out.string(), "rep-a").manifest_json));
    clash["digest"] = "0000000000000000";
    pam::write_file((out / "aa-clash.manifest.json").string(), clash.dump(2));
    RunResult refuse = run_cli("report --dir " + out.string());
    CHECK(refuse.code == 2);
    CHECK(refuse.out.find("digest clash") != std::string::npos);
}
