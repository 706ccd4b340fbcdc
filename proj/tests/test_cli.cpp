#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "finestruct/io.hpp"

using namespace finestruct;
namespace stdfs = std::filesystem;

namespace {

struct TempDir {
    stdfs::path path;
    TempDir() {
        path = stdfs::temp_directory_path() /
               ("finestruct_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        stdfs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        stdfs::remove_all(path, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const stdfs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunResult run_cli(const std::string& args, const stdfs::path& scratch) {
    const auto out_path = scratch / "stdout.txt";
    const auto err_path = scratch / "stderr.txt";
    const std::string cmd = std::string(FINESTRUCT_CLI_PATH) + " " + args + " > " +
                            out_path.string() + " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

nlohmann::json report_json(const RunResult& r) {
    return nlohmann::json::parse(r.out);
}

std::string row17(double b, double v) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", b, v);
    return buf;
}

// series files for the extraction pipeline, written at full precision
void write_pipeline_csvs(const stdfs::path& dir, const DotParameters& dot) {
    const auto pc = perturbative_coefficients(dot);
    std::string s = "b_T,value_ueV\n";
    std::string dh = "b_T,value_ueV\n";
    std::string dv = "b_T,value_ueV\n";
    for (int i = 0; i <= 10; ++i) {
        const double b = 0.5 * i;
        const double t = b * b;
        s += row17(b, dot.zero_field_gap(Polarization::H) -
                          dot.zero_field_gap(Polarization::V) +
                          pc.k * t + pc.k_prime * t * t);
        const auto [h, v] = dark_bright_splittings(dot, b);
        dh += row17(b, h);
        dv += row17(b, v);
    }
    write_file_atomic(dir / "s.csv", s);
    write_file_atomic(dir / "dh.csv", dh);
    write_file_atomic(dir / "dv.csv", dv);
}

const std::string dot_c_flags = "--s0 -16 --d0 215 --g-e 0.4 --g-h 0.4";

} // namespace

TEST_CASE("sweep prints a table or writes it to a directory") {
    TempDir tmp;
    const auto direct =
        run_cli("sweep " + dot_c_flags + " --b-start 0 --b-end 5 --steps 6", tmp.path);
    REQUIRE(direct.exit_code == 0);
    CHECK(direct.out.find("b_x_T,e_Hbright_ueV") == 0);
    CHECK(direct.out.find("35.7880781") != std::string::npos); // S at 5 T

    const auto outdir = tmp.path / "run";
    const auto filed = run_cli("sweep " + dot_c_flags +
                                   " --b-start 0 --b-end 5 --steps 6 --out " +
                                   outdir.string(),
                               tmp.path);
    REQUIRE(filed.exit_code == 0);
    CHECK(filed.out.find("wrote ") == 0);
    CHECK(slurp(outdir / "sweep.csv") == direct.out);
}

TEST_CASE("simulate writes deterministic noisy spectra") {
    TempDir tmp;
    const std::string base = "simulate " + dot_c_flags +
                             " --b-start 0 --b-end 5 --steps 3 --sigma-rel 0.02";
    const auto a = run_cli(base + " --seed 9 --out " + (tmp.path / "a").string(), tmp.path);
    REQUIRE(a.exit_code == 0);
    CHECK(a.out.find("wrote 7 files to ") == 0);
    const auto b = run_cli(base + " --seed 9 --out " + (tmp.path / "b").string(), tmp.path);
    REQUIRE(b.exit_code == 0);
    const auto c =
        run_cli(base + " --seed 10 --out " + (tmp.path / "c").string(), tmp.path);
    REQUIRE(c.exit_code == 0);

    for (const char* name :
         {"sweep.csv", "spectrum_b0_H.csv", "spectrum_b2.5_H.csv", "spectrum_b5_V.csv"}) {
        CAPTURE(name);
        const auto va = slurp(tmp.path / "a" / name);
        REQUIRE(!va.empty());
        CHECK(va == slurp(tmp.path / "b" / name));
    }
    CHECK(slurp(tmp.path / "a" / "spectrum_b2.5_H.csv") !=
          slurp(tmp.path / "c" / "spectrum_b2.5_H.csv"));

    // JSON spectra record the derived per-spectrum noise seed
    const auto j = run_cli(base + " --seed 9 --json-spectra --out " +
                               (tmp.path / "j").string(),
                           tmp.path);
    REQUIRE(j.exit_code == 0);
    CHECK(j.out.find("wrote 13 files to ") == 0);
    const auto spec =
        nlohmann::json::parse(slurp(tmp.path / "j" / "spectrum_b0_H.json"));
    CHECK(spec.at("polarization") == "H");
    CHECK(spec.at("noise_seed").is_number_unsigned());

    // without noise the seed slot stays null
    const auto clean = run_cli("simulate " + dot_c_flags +
                                   " --b-start 0 --b-end 5 --steps 2 --json-spectra --out " +
                                   (tmp.path / "clean").string(),
                               tmp.path);
    REQUIRE(clean.exit_code == 0);
    const auto cspec =
        nlohmann::json::parse(slurp(tmp.path / "clean" / "spectrum_b5_V.json"));
    CHECK(cspec.at("noise_seed").is_null());
}

TEST_CASE("fit reproduces the three-point curvature analysis") {
    TempDir tmp;
    write_file_atomic(tmp.path / "s.csv", "b_T,value_ueV\n0,-16\n2.7,0\n5,31\n");

    const auto r = run_cli("fit " + (tmp.path / "s.csv").string() + " --out " +
                               (tmp.path / "rep").string(),
                           tmp.path);
    REQUIRE(r.exit_code == 0);
    const auto j = report_json(r);
    CHECK(j.at("s0").get<double>() == doctest::Approx(-16.0).epsilon(1e-9));
    CHECK(j.at("K").get<double>() == doctest::Approx(2.324363890418641).epsilon(1e-8));
    CHECK(j.at("K_prime").get<double>() ==
          doctest::Approx(-0.01777455561674563).epsilon(1e-7));
    CHECK(j.at("r_percent").get<double>() == 100.0);
    CHECK(j.at("crossing_field_T").get<double>() == doctest::Approx(2.7).epsilon(1e-7));
    CHECK(j.at("classification") == "crosses_below_5T");

    CHECK(slurp(tmp.path / "rep" / "fit_report.json") == r.out);

    const auto quad = run_cli("fit --no-quartic " + (tmp.path / "s.csv").string(), tmp.path);
    REQUIRE(quad.exit_code == 0);
    CHECK(report_json(quad).at("K_prime").get<double>() == 0.0);
}

TEST_CASE("fit maps failures onto distinct exit codes") {
    TempDir tmp;
    write_file_atomic(tmp.path / "short.csv", "b_T,value_ueV\n1,5\n");
    const auto rank = run_cli("fit " + (tmp.path / "short.csv").string(), tmp.path);
    CHECK(rank.exit_code == 3);
    CHECK(rank.err.find("error:") == 0);

    write_file_atomic(tmp.path / "empty.csv", "b_T,value_ueV\n");
    CHECK(run_cli("fit " + (tmp.path / "empty.csv").string(), tmp.path).exit_code == 2);

    CHECK(run_cli("fit " + (tmp.path / "absent.csv").string(), tmp.path).exit_code == 2);

    CHECK(run_cli("fit", tmp.path).exit_code == 2); // missing required positional
    CHECK(run_cli("bogus-subcommand", tmp.path).exit_code == 2);
    CHECK(run_cli("--help", tmp.path).exit_code == 0);
}

TEST_CASE("extract-g recovers the canonical dot end to end") {
    TempDir tmp;
    DotParameters::Init init;
    init.s0 = 22.0;
    init.d0 = 215.0;
    init.g_e = 0.395;
    init.g_h = 0.395;
    write_pipeline_csvs(tmp.path, DotParameters(init));

    const auto r = run_cli("extract-g --dh " + (tmp.path / "dh.csv").string() +
                               " --dv " + (tmp.path / "dv.csv").string() + " --s " +
                               (tmp.path / "s.csv").string(),
                           tmp.path);
    REQUIRE(r.exit_code == 0);
    const auto j = report_json(r);
    CHECK(j.at("zeeman_h").at("d_h0").get<double>() ==
          doctest::Approx(226.0).epsilon(1e-9));
    CHECK(j.at("zeeman_h").at("g_H").get<double>() ==
          doctest::Approx(0.79).epsilon(1e-9));
    CHECK(j.at("zeeman_v").at("d_v0").get<double>() ==
          doctest::Approx(204.0).epsilon(1e-9));
    CHECK(j.at("zeeman_v").at("g_V").get<double>() == 0.0);
    CHECK(j.at("d0").get<double>() == doctest::Approx(215.0).epsilon(1e-9));
    CHECK(j.at("s0").get<double>() == doctest::Approx(22.0).epsilon(1e-9));
    CHECK(j.at("K").get<double>() == doctest::Approx(2.31312882539027).epsilon(1e-8));
    CHECK(j.at("g_convention") == "magnitude");
    CHECK(j.at("g_diff").get<double>() == 0.0);
    CHECK(j.at("equal_magnitude").at("g_e").get<double>() ==
          doctest::Approx(0.395).epsilon(1e-9));
    REQUIRE(j.at("branches").size() == 1);
    CHECK(j.at("branches")[0].at("g_e").get<double>() ==
          doctest::Approx(0.395).epsilon(1e-8));
    CHECK(j.at("branches")[0].at("g_h").get<double>() ==
          doctest::Approx(0.395).epsilon(1e-8));
    CHECK(j.at("heuristic_pick") == 0);
    CHECK(j.at("discriminant").is_null());
}

TEST_CASE("extract-g resolves the large-splitting dot with a g constraint") {
    TempDir tmp;
    DotParameters::Init init;
    init.s0 = 284.0;
    init.d0 = 473.0;
    init.g_e = 1.21;
    init.g_h = 0.13;
    write_pipeline_csvs(tmp.path, DotParameters(init));

    const auto r = run_cli("extract-g --dh " + (tmp.path / "dh.csv").string() +
                               " --dv " + (tmp.path / "dv.csv").string() + " --s " +
                               (tmp.path / "s.csv").string() + " --g-diff 1.08",
                           tmp.path);
    REQUIRE(r.exit_code == 0);
    const auto j = report_json(r);
    CHECK(j.at("zeeman_h").at("g_H").get<double>() ==
          doctest::Approx(1.34).epsilon(1e-8));
    CHECK(j.at("zeeman_v").at("g_V").get<double>() ==
          doctest::Approx(1.08).epsilon(1e-8));
    CHECK(j.at("d0").get<double>() == doctest::Approx(473.0).epsilon(1e-9));
    CHECK(j.at("s0").get<double>() == doctest::Approx(284.0).epsilon(1e-9));
    REQUIRE(j.at("branches").size() == 1);
    CHECK(j.at("branches")[0].at("g_e").get<double>() ==
          doctest::Approx(1.21).epsilon(1e-7));
    CHECK(j.at("branches")[0].at("g_h").get<double>() ==
          doctest::Approx(0.13).epsilon(1e-6));
    CHECK(j.at("heuristic_pick") == 0);

    const auto missing = run_cli("extract-g --dh " + (tmp.path / "dh.csv").string() +
                                     " --dv " + (tmp.path / "gone.csv").string() +
                                     " --s " + (tmp.path / "s.csv").string(),
                                 tmp.path);
    CHECK(missing.exit_code == 2);
}

TEST_CASE("extract-g reports infeasibility with exit code 4") {
    TempDir tmp;
    write_file_atomic(tmp.path / "s.csv",
                      "b_T,value_ueV\n0,10\n1,5\n2,-10\n3,-35\n");
    write_file_atomic(tmp.path / "flat.csv",
                      "b_T,value_ueV\n0,215\n1,215\n2,215\n3,215\n");

    const auto r = run_cli("extract-g --dh " + (tmp.path / "flat.csv").string() +
                               " --dv " + (tmp.path / "flat.csv").string() + " --s " +
                               (tmp.path / "s.csv").string() +
                               " --g-convention signed --out " +
                               (tmp.path / "rep").string(),
                           tmp.path);
    CHECK(r.exit_code == 4);
    CHECK(r.err.find("error:") == 0);
    const auto j = report_json(r);
    CHECK(j.at("branches").empty());
    CHECK(j.at("heuristic_pick").is_null());
    REQUIRE(j.at("discriminant").is_number());
    CHECK(j.at("discriminant").get<double>() < 0.0);
    CHECK(j.at("g_convention") == "signed");
    // the report is still written for inspection
    CHECK(slurp(tmp.path / "rep" / "extract_g_report.json") == r.out);
}

TEST_CASE("crossing and classify commands") {
    TempDir tmp;
    const auto near = run_cli("crossing " + dot_c_flags + " --b-max 2", tmp.path);
    REQUIRE(near.exit_code == 0);
    auto j = report_json(near);
    CHECK(j.at("b_max_T").get<double>() == 2.0);
    CHECK(j.at("crossing_field_T").is_null());
    CHECK(j.at("classification") == "crosses_below_5T");

    const auto found = run_cli("crossing " + dot_c_flags, tmp.path);
    REQUIRE(found.exit_code == 0);
    j = report_json(found);
    CHECK(j.at("b_max_T").get<double>() == 10.0);
    CHECK(j.at("crossing_field_T").get<double>() ==
          doctest::Approx(2.579855593977603).epsilon(1e-7));

    const auto cls = run_cli("classify " + dot_c_flags, tmp.path);
    REQUIRE(cls.exit_code == 0);
    j = report_json(cls);
    CHECK(j.at("classification") == "crosses_below_5T");
    CHECK(j.at("crossing_field_T").get<double>() ==
          doctest::Approx(2.579855593977603).epsilon(1e-7));
    CHECK(j.at("thresholds").at("lower").get<double>() == 5.0);
    CHECK(j.at("thresholds").at("upper").get<double>() == 10.0);

    const auto big = run_cli(
        "classify --s0 284 --d0 473 --g-e 1.21 --g-h 0.13", tmp.path);
    REQUIRE(big.exit_code == 0);
    CHECK(report_json(big).at("classification") == "no_crossing_below_10T");

    // identical invocations produce identical bytes
    const auto again = run_cli("classify " + dot_c_flags, tmp.path);
    CHECK(again.out == cls.out);
}

TEST_CASE("config files feed commands and flags override them") {
    TempDir tmp;
    write_file_atomic(tmp.path / "run.json", R"({
        "dot": {"s0": -16, "d0": 215, "g_e": 0.4, "g_h": 0.4},
        "thresholds": {"lower": 2, "upper": 3}
    })");

    const auto base =
        run_cli("classify --config " + (tmp.path / "run.json").string(), tmp.path);
    REQUIRE(base.exit_code == 0);
    auto j = report_json(base);
    CHECK(j.at("classification") == "crosses_below_3T"); // 2.58 T sits between 2 and 3

    const auto moved = run_cli("classify --config " + (tmp.path / "run.json").string() +
                                   " --t-lower 2.6",
                               tmp.path);
    REQUIRE(moved.exit_code == 0);
    CHECK(report_json(moved).at("classification") == "crosses_below_2.6T");

    const auto swapped = run_cli("classify --config " + (tmp.path / "run.json").string() +
                                     " --s0 284 --d0 473 --g-e 1.21 --g-h 0.13",
                                 tmp.path);
    REQUIRE(swapped.exit_code == 0);
    CHECK(report_json(swapped).at("classification") == "no_crossing_below_3T");

    write_file_atomic(tmp.path / "bad.json", R"({"dot": {"sO": 1}})");
    CHECK(run_cli("classify --config " + (tmp.path / "bad.json").string(), tmp.path)
              .exit_code == 2);
}

TEST_CASE("seed precedence: flag, then config, then environment") {
    TempDir tmp;
    const std::string sim = "simulate " + dot_c_flags +
                            " --b-start 0 --b-end 5 --steps 2 --sigma-rel 0.05 --out ";
    write_file_atomic(tmp.path / "seed5.json", R"({"noise": {"seed": 5}})");

    const auto flag7 = run_cli(sim + (tmp.path / "flag7").string() + " --seed 7", tmp.path);
    REQUIRE(flag7.exit_code == 0);
    const auto both = run_cli(sim + (tmp.path / "both").string() + " --config " +
                                  (tmp.path / "seed5.json").string() + " --seed 7",
                              tmp.path);
    REQUIRE(both.exit_code == 0);
    CHECK(slurp(tmp.path / "flag7" / "spectrum_b0_H.csv") ==
          slurp(tmp.path / "both" / "spectrum_b0_H.csv"));

    const auto cfg5 = run_cli(sim + (tmp.path / "cfg5").string() + " --config " +
                                  (tmp.path / "seed5.json").string(),
                              tmp.path);
    REQUIRE(cfg5.exit_code == 0);
    const auto flag5 = run_cli(sim + (tmp.path / "flag5").string() + " --seed 5", tmp.path);
    REQUIRE(flag5.exit_code == 0);
    CHECK(slurp(tmp.path / "cfg5" / "spectrum_b0_H.csv") ==
          slurp(tmp.path / "flag5" / "spectrum_b0_H.csv"));
    CHECK(slurp(tmp.path / "cfg5" / "spectrum_b0_H.csv") !=
          slurp(tmp.path / "flag7" / "spectrum_b0_H.csv"));

    ::setenv("FINESTRUCT_SEED", "5", 1);
    const auto env5 = run_cli(sim + (tmp.path / "env5").string(), tmp.path);
    REQUIRE(env5.exit_code == 0);
    CHECK(slurp(tmp.path / "env5" / "spectrum_b0_H.csv") ==
          slurp(tmp.path / "flag5" / "spectrum_b0_H.csv"));

    const auto envflag = run_cli(sim + (tmp.path / "envflag").string() + " --seed 7",
                                 tmp.path);
    REQUIRE(envflag.exit_code == 0);
    CHECK(slurp(tmp.path / "envflag" / "spectrum_b0_H.csv") ==
          slurp(tmp.path / "flag7" / "spectrum_b0_H.csv"));

    ::setenv("FINESTRUCT_SEED", "not-a-number", 1);
    CHECK(run_cli(sim + (tmp.path / "envbad").string(), tmp.path).exit_code == 2);
    ::unsetenv("FINESTRUCT_SEED");
}
