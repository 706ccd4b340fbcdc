// Command-line front end: simulate, sweep, fit, extract-g, crossing, classify.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "finestruct/extraction.hpp"
#include "finestruct/io.hpp"
#include "finestruct/model.hpp"
#include "finestruct/spectra.hpp"

namespace {

using nlohmann::ordered_json;
namespace fs = finestruct;

struct CliOptions {
    std::string config_path{};
    std::string out_dir{};
    std::optional<std::uint64_t> seed{};

    std::optional<double> s0, d0, sigma0, g_e, g_h, e0, gamma, xx_binding, e_c;
    std::optional<double> b_start, b_end;
    std::optional<std::size_t> steps;
    std::optional<double> power, sigma_rel;
    std::optional<double> grid_center, grid_span, grid_step;
    bool quartic_on = false, quartic_off = false;
    std::optional<std::string> g_convention;
    std::optional<double> g_diff;
    std::optional<double> t_lower, t_upper;
    std::optional<double> b_max;
    bool json_spectra = false;

    std::string s_csv{}, dh_csv{}, dv_csv{};
};

void add_dot_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--s0", o.s0, "bright splitting at B=0, ueV");
    cmd->add_option("--d0", o.d0, "bright-dark splitting, ueV");
    cmd->add_option("--sigma0", o.sigma0, "dark splitting, ueV");
    cmd->add_option("--g-e", o.g_e, "electron g-factor");
    cmd->add_option("--g-h", o.g_h, "hole g-factor");
    cmd->add_option("--e0", o.e0, "emission center, ueV");
    cmd->add_option("--gamma", o.gamma, "line FWHM, ueV");
    cmd->add_option("--xx-binding", o.xx_binding, "biexciton binding, ueV");
    cmd->add_option("--e-c", o.e_c, "confinement energy, meV");
}

void add_common_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON config file; flags override it");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "noise seed");
}

void add_threshold_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--t-lower", o.t_lower, "lower classification threshold, T");
    cmd->add_option("--t-upper", o.t_upper, "upper classification threshold, T");
}

std::uint64_t env_seed() {
    const char* raw = std::getenv("FINESTRUCT_SEED");
    if (raw == nullptr || *raw == '\0')
        return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(raw, &end, 10);
    if (end == raw || *end != '\0')
        throw fs::ParseError("FINESTRUCT_SEED must be a non-negative integer");
    return v;
}

fs::RunConfig resolve_config(const CliOptions& o) {
    fs::RunConfig cfg;
    if (!o.config_path.empty())
        cfg = fs::load_config_file(o.config_path);

    if (o.s0) cfg.dot.s0 = *o.s0;
    if (o.d0) cfg.dot.d0 = *o.d0;
    if (o.sigma0) cfg.dot.sigma0 = *o.sigma0;
    if (o.g_e) cfg.dot.g_e = *o.g_e;
    if (o.g_h) cfg.dot.g_h = *o.g_h;
    if (o.e0) cfg.dot.e0 = *o.e0;
    if (o.gamma) cfg.dot.gamma = *o.gamma;
    if (o.xx_binding) cfg.dot.xx_binding = *o.xx_binding;
    if (o.e_c) cfg.dot.e_c = *o.e_c;

    if (o.b_start) cfg.b_start = *o.b_start;
    if (o.b_end) cfg.b_end = *o.b_end;
    if (o.steps) cfg.steps = *o.steps;
    if (o.power) cfg.power = *o.power;
    if (o.sigma_rel) cfg.sigma_rel = *o.sigma_rel;

    if (o.grid_center || o.grid_span || o.grid_step) {
        fs::GridSpec spec = cfg.grid.value_or(fs::GridSpec{});
        if (o.grid_center) spec.center = *o.grid_center;
        if (o.grid_span) spec.span = *o.grid_span;
        if (o.grid_step) spec.step = *o.grid_step;
        cfg.grid = spec;
    }

    if (o.quartic_on) cfg.include_quartic = true;
    if (o.quartic_off) cfg.include_quartic = false;
    if (o.t_lower) cfg.thresholds.lower = *o.t_lower;
    if (o.t_upper) cfg.thresholds.upper = *o.t_upper;
    if (o.g_convention) {
        cfg.g_convention = *o.g_convention == "signed"
                               ? fs::GConvention::SignedDifference
                               : fs::GConvention::MagnitudeDifference;
    }
    if (o.g_diff) cfg.g_diff = *o.g_diff;

    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.seed_set = true;
    } else if (!cfg.seed_set) {
        cfg.seed = env_seed();
    }
    if (!o.out_dir.empty()) {
        cfg.out_dir = o.out_dir;
        cfg.out_set = true;
    }
    return cfg;
}

ordered_json num(double v) {
    return fs::rounded_number(v);
}

void emit_report(const ordered_json& report, const fs::RunConfig& cfg,
                 const char* filename) {
    const std::string text = report.dump(2) + "\n";
    std::cout << text;
    if (cfg.out_set) {
        std::filesystem::create_directories(cfg.out_dir);
        fs::write_file_atomic(std::filesystem::path(cfg.out_dir) / filename, text);
    }
}

int cmd_sweep(const CliOptions& o) {
    const auto cfg = resolve_config(o);
    const fs::DotParameters params(cfg.dot);
    const auto sweep = fs::sweep_field(params, cfg.b_start, cfg.b_end, cfg.steps);
    const auto csv = fs::sweep_to_csv(sweep);
    if (cfg.out_set) {
        std::filesystem::create_directories(cfg.out_dir);
        const auto path = std::filesystem::path(cfg.out_dir) / "sweep.csv";
        fs::write_file_atomic(path, csv);
        std::cout << "wrote " << path.string() << "\n";
    } else {
        std::cout << csv;
    }
    return 0;
}

int cmd_simulate(const CliOptions& o) {
    const auto cfg = resolve_config(o);
    const fs::DotParameters params(cfg.dot);
    const auto grid = cfg.grid.value_or(fs::default_grid(params));
    const auto sweep = fs::sweep_field(params, cfg.b_start, cfg.b_end, cfg.steps);

    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    fs::write_file_atomic(dir / "sweep.csv", fs::sweep_to_csv(sweep));

    std::size_t files = 1;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        if (!sweep[i].fine) {
            std::cerr << "warning: skipping spectra at b_x = " << sweep[i].b_x << " T: "
                      << sweep[i].error << "\n";
            continue;
        }
        auto pair = fs::synthesize(params, sweep[i].b_x, cfg.power, grid);
        if (cfg.sigma_rel > 0.0) {
            pair.h = fs::add_noise(pair.h, cfg.sigma_rel,
                                   fs::splitmix64(fs::splitmix64(cfg.seed) + 2 * i));
            pair.v = fs::add_noise(pair.v, cfg.sigma_rel,
                                   fs::splitmix64(fs::splitmix64(cfg.seed) + 2 * i + 1));
        }
        const std::string stem = "spectrum_b" + fs::format_number(sweep[i].b_x);
        fs::write_file_atomic(dir / (stem + "_H.csv"), fs::spectrum_to_csv(pair.h));
        fs::write_file_atomic(dir / (stem + "_V.csv"), fs::spectrum_to_csv(pair.v));
        files += 2;
        if (o.json_spectra) {
            fs::write_file_atomic(dir / (stem + "_H.json"),
                                  fs::spectrum_to_json(pair.h).dump(2) + "\n");
            fs::write_file_atomic(dir / (stem + "_V.json"),
                                  fs::spectrum_to_json(pair.v).dump(2) + "\n");
            files += 2;
        }
    }
    std::cout << "wrote " << files << " files to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_fit(const CliOptions& o) {
    const auto cfg = resolve_config(o);
    const auto series = fs::read_series_csv_file(o.s_csv, fs::SeriesKind::S);
    const auto fit = fs::fit_eq1(series, cfg.include_quartic);
    const auto crossing = fs::crossing_field(fit, cfg.thresholds.upper);
    const auto cls = fs::classify_fit(fit, cfg.thresholds);

    ordered_json report;
    report["s0"] = num(fit.s0_hat);
    report["K"] = num(fit.k_hat);
    report["K_prime"] = num(fit.k_prime_hat);
    report["r_percent"] = num(fit.r_percent);
    report["crossing_field_T"] = crossing ? ordered_json(num(*crossing)) : nullptr;
    report["classification"] = fs::dot_class_label(cls, cfg.thresholds);
    emit_report(report, cfg, "fit_report.json");
    return 0;
}

int cmd_extract_g(const CliOptions& o) {
    const auto cfg = resolve_config(o);
    const auto dh = fs::read_series_csv_file(o.dh_csv, fs::SeriesKind::DH);
    const auto dv = fs::read_series_csv_file(o.dv_csv, fs::SeriesKind::DV);
    const auto s = fs::read_series_csv_file(o.s_csv, fs::SeriesKind::S);

    const auto zh = fs::fit_zeeman(dh);
    const auto zv = fs::fit_zeeman(dv);
    const double d0 = fs::extrapolate_d0(zh, zv);
    const auto fit = fs::fit_eq1(s, cfg.include_quartic);
    const double g_diff = cfg.g_diff.value_or(zv.g_hat);

    ordered_json report;
    report["zeeman_h"] = {{"d_h0", num(zh.d_x0_hat)},
                          {"g_H", num(zh.g_hat)},
                          {"r_percent", num(zh.r_percent)}};
    report["zeeman_v"] = {{"d_v0", num(zv.d_x0_hat)},
                          {"g_V", num(zv.g_hat)},
                          {"r_percent", num(zv.r_percent)}};
    report["d0"] = num(d0);
    report["s0"] = num(fit.s0_hat);
    report["K"] = num(fit.k_hat);
    report["K_prime"] = num(fit.k_prime_hat);
    report["r_percent"] = num(fit.r_percent);
    report["g_convention"] =
        cfg.g_convention == fs::GConvention::SignedDifference ? "signed" : "magnitude";
    report["g_diff"] = num(g_diff);
    const auto equal = fs::solve_g_equal_magnitude(zh.g_hat);
    report["equal_magnitude"] = {{"g_e", num(equal.g_e)}, {"g_h", num(equal.g_h)}};

    int rc = 0;
    try {
        const auto sol = fs::solve_g_eq2(fit.k_hat, fit.s0_hat, d0, g_diff,
                                         cfg.g_convention);
        auto branches = ordered_json::array();
        for (const auto& b : sol.branches)
            branches.push_back({{"g_e", num(b.g_e)}, {"g_h", num(b.g_h)}});
        report["branches"] = std::move(branches);
        report["heuristic_pick"] = sol.heuristic_pick;
        report["discriminant"] = nullptr;
    } catch (const fs::InfeasibleError& e) {
        report["branches"] = ordered_json::array();
        report["heuristic_pick"] = nullptr;
        report["discriminant"] = num(e.discriminant());
        std::cerr << "error: " << e.what() << "\n";
        rc = 4;
    }
    emit_report(report, cfg, "extract_g_report.json");
    return rc;
}

int cmd_crossing(const CliOptions& o) {
    const auto cfg = resolve_config(o);
    const fs::DotParameters params(cfg.dot);
    const double b_max = o.b_max.value_or(cfg.thresholds.upper);
    const auto crossing = fs::crossing_field(params, b_max);
    const auto cls = fs::classify_dot(params, cfg.thresholds);

    ordered_json report;
    report["b_max_T"] = num(b_max);
    report["crossing_field_T"] = crossing ? ordered_json(num(*crossing)) : nullptr;
    report["classification"] = fs::dot_class_label(cls, cfg.thresholds);
    emit_report(report, cfg, "crossing_report.json");
    return 0;
}

int cmd_classify(const CliOptions& o) {
    const auto cfg = resolve_config(o);
    const fs::DotParameters params(cfg.dot);
    const auto cls = fs::classify_dot(params, cfg.thresholds);
    const auto crossing = fs::crossing_field(params, cfg.thresholds.upper);

    ordered_json report;
    report["classification"] = fs::dot_class_label(cls, cfg.thresholds);
    report["crossing_field_T"] = crossing ? ordered_json(num(*crossing)) : nullptr;
    report["thresholds"] = {{"lower", num(cfg.thresholds.lower)},
                            {"upper", num(cfg.thresholds.upper)}};
    emit_report(report, cfg, "classify_report.json");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exciton fine structure under an in-plane magnetic field: "
                 "simulation, spectra, and parameter extraction"};
    app.require_subcommand(1);
    CliOptions o;

    auto* simulate = app.add_subcommand("simulate", "write spectra and a sweep table");
    add_common_options(simulate, o);
    add_dot_options(simulate, o);
    simulate->add_option("--b-start", o.b_start, "first field value, T");
    simulate->add_option("--b-end", o.b_end, "last field value, T");
    simulate->add_option("--steps", o.steps, "number of field values");
    simulate->add_option("--power", o.power, "excitation power, arb. units");
    simulate->add_option("--sigma-rel", o.sigma_rel, "noise level relative to peak");
    simulate->add_option("--grid-center", o.grid_center, "energy grid center, ueV");
    simulate->add_option("--grid-span", o.grid_span, "energy grid half-width, ueV");
    simulate->add_option("--grid-step", o.grid_step, "energy grid step, ueV");
    simulate->add_flag("--json-spectra", o.json_spectra, "also write spectra as JSON");

    auto* sweep = app.add_subcommand("sweep", "print or write the sweep table");
    add_common_options(sweep, o);
    add_dot_options(sweep, o);
    sweep->add_option("--b-start", o.b_start, "first field value, T");
    sweep->add_option("--b-end", o.b_end, "last field value, T");
    sweep->add_option("--steps", o.steps, "number of field values");

    auto* fit = app.add_subcommand("fit", "fit S(B) = s0 + K B^2 [+ K' B^4]");
    add_common_options(fit, o);
    add_threshold_options(fit, o);
    fit->add_option("s_csv", o.s_csv, "splitting series CSV")->required();
    fit->add_flag("--quartic", o.quartic_on, "include the quartic term (default)");
    fit->add_flag("--no-quartic", o.quartic_off, "fit the quadratic model only");

    auto* extract = app.add_subcommand("extract-g", "g-factor extraction pipeline");
    add_common_options(extract, o);
    add_threshold_options(extract, o);
    extract->add_option("--dh", o.dh_csv, "D_H series CSV")->required();
    extract->add_option("--dv", o.dv_csv, "D_V series CSV")->required();
    extract->add_option("--s", o.s_csv, "S series CSV")->required();
    extract->add_flag("--quartic", o.quartic_on, "include the quartic term (default)");
    extract->add_flag("--no-quartic", o.quartic_off, "fit the quadratic model only");
    extract->add_option("--g-convention", o.g_convention, "signed | magnitude")
        ->check(CLI::IsMember({"signed", "magnitude"}));
    extract->add_option("--g-diff", o.g_diff, "g_e - g_h (or |g_e| - |g_h|) constraint");

    auto* crossing = app.add_subcommand("crossing", "locate the S = 0 field");
    add_common_options(crossing, o);
    add_dot_options(crossing, o);
    add_threshold_options(crossing, o);
    crossing->add_option("--b-max", o.b_max, "search limit, T");

    auto* classify = app.add_subcommand("classify", "crossing-based dot classification");
    add_common_options(classify, o);
    add_dot_options(classify, o);
    add_threshold_options(classify, o);

    try {
        app.parse(argc, argv);
        if (simulate->parsed())
            return cmd_simulate(o);
        if (sweep->parsed())
            return cmd_sweep(o);
        if (fit->parsed())
            return cmd_fit(o);
        if (extract->parsed())
            return cmd_extract_g(o);
        if (crossing->parsed())
            return cmd_crossing(o);
        if (classify->parsed())
            return cmd_classify(o);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const fs::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::CoverageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::RankError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::ModelMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::DegenerateMixingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::InfeasibleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
