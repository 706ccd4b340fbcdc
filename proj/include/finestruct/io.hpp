#ifndef FINESTRUCT_IO_HPP
#define FINESTRUCT_IO_HPP

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "finestruct/extraction.hpp"
#include "finestruct/model.hpp"
#include "finestruct/spectra.hpp"

namespace finestruct {

// Numbers are serialized with 9 significant digits so emitted files and
// reports are stable across platforms.
std::string format_number(double v);
double rounded_number(double v);

// Mixing step for deriving per-spectrum noise seeds from the run seed.
std::uint64_t splitmix64(std::uint64_t x);

void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// --- CSV ---------------------------------------------------------------
// splitting series: b_T,value_ueV[,sigma_ueV]
// spectrum:         energy_ueV,intensity
// sweep table:      b_x_T,e_Hbright_ueV,...,D_V_ueV (see sweep_to_csv)

SplittingSeries read_series_csv(std::istream& in, SeriesKind kind,
                                const std::string& source);
SplittingSeries read_series_csv_file(const std::filesystem::path& path, SeriesKind kind);
std::string series_to_csv(const SplittingSeries& series);

PolarizedSpectrum read_spectrum_csv(std::istream& in, Polarization polarization,
                                    const std::string& source);
std::string spectrum_to_csv(const PolarizedSpectrum& spectrum);

std::string sweep_to_csv(std::span<const SweepPoint> sweep);

// --- JSON --------------------------------------------------------------

nlohmann::ordered_json spectrum_to_json(const PolarizedSpectrum& spectrum);
PolarizedSpectrum spectrum_from_json(const nlohmann::json& j);

// --- Run configuration ---------------------------------------------------

struct RunConfig {
    DotParameters::Init dot{};
    double b_start = 0.0;
    double b_end = 5.0;
    std::size_t steps = 11;
    double power = 1.0;
    std::optional<GridSpec> grid{};
    double sigma_rel = 0.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool include_quartic = true;
    ClassifyThresholds thresholds{};
    GConvention g_convention = GConvention::MagnitudeDifference;
    std::optional<double> g_diff{};
    std::string out_dir = ".";
    bool out_set = false;
};

// Parses a config JSON object; unknown keys are rejected to catch typos.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path);

} // namespace finestruct

#endif
