#ifndef FINESTRUCT_SPECTRA_HPP
#define FINESTRUCT_SPECTRA_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "finestruct/model.hpp"

namespace finestruct {

enum class LineOrigin { XBrighter, XDarker, XxH, XxV };

const char* to_string(LineOrigin origin);

struct SpectralLine {
    double center = 0.0; // absolute emission energy, ueV
    double height = 0.0; // peak intensity, arbitrary units
    double fwhm = 0.0;   // ueV
    Polarization polarization = Polarization::H;
    LineOrigin origin = LineOrigin::XBrighter;
};

// Symmetric uniform energy grid: center - span .. center + span.
struct GridSpec {
    double center = 0.0; // ueV
    double span = 0.0;   // ueV, half-width
    double step = 1.0;   // ueV
};

struct PolarizedSpectrum {
    Polarization polarization = Polarization::H;
    std::vector<double> grid{};      // ueV, strictly increasing, constant step
    std::vector<double> intensity{}; // same length as grid
    std::vector<SpectralLine> lines{};
    std::optional<std::uint64_t> noise_seed{};
};

struct SpectrumPair {
    PolarizedSpectrum h{};
    PolarizedSpectrum v{};
};

// Peak-normalized Lorentzian profile.
inline double lorentzian(double energy, double center, double fwhm) {
    const double u = 2.0 * (energy - center) / fwhm;
    return 1.0 / (1.0 + u * u);
}

// Grid wide enough for the exciton multiplet and the biexciton doublet.
GridSpec default_grid(const DotParameters& params);

// Noiseless polarization-resolved spectra at one field value. The grid must
// cover every line center; otherwise a CoverageError names the clipped lines.
SpectrumPair synthesize(const DotParameters& params, double b_x, double power,
                        const GridSpec& grid);
SpectrumPair synthesize(const DotParameters& params, double b_x, double power);

// Relative emission strength of each eigenstate, aligned with
// FineStructure.states.
std::array<double, 4> effective_brightness(const DotParameters& params, double b_x);

// Adds Gaussian noise with standard deviation sigma_rel times the maximum
// intensity of the input spectrum. Deterministic for a given seed: the
// stream is mt19937_64 fed through Box-Muller, so equal seeds give
// bit-identical output for a given build.
PolarizedSpectrum add_noise(const PolarizedSpectrum& spectrum, double sigma_rel,
                            std::uint64_t seed);

} // namespace finestruct

#endif
