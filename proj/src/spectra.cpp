#include "finestruct/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace finestruct {

namespace {

constexpr double two_pi = 6.283185307179586476925286766559;

// Deterministic Gaussian stream: raw mt19937_64 output mapped to uniforms
// and folded through Box-Muller, avoiding std::normal_distribution whose
// algorithm varies between standard library implementations.
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - std::ldexp(static_cast<double>(engine_() >> 11), -53);
        const double u2 = std::ldexp(static_cast<double>(engine_() >> 11), -53);
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

std::vector<double> make_grid(const GridSpec& spec) {
    if (!(spec.step > 0.0))
        throw ParameterError("GridSpec: step must be positive");
    if (!(spec.span > 0.0))
        throw ParameterError("GridSpec: span must be positive");
    if (!(2.0 * spec.span >= spec.step))
        throw ParameterError("GridSpec: span too small for the step");
    const auto n =
        static_cast<std::size_t>(std::floor(2.0 * spec.span / spec.step + 1e-9)) + 1;
    std::vector<double> grid(n);
    const double start = spec.center - spec.span;
    for (std::size_t i = 0; i < n; ++i)
        grid[i] = start + spec.step * static_cast<double>(i);
    return grid;
}

PolarizedSpectrum render_channel(Polarization pol, const std::vector<SpectralLine>& all,
                                 const std::vector<double>& grid) {
    PolarizedSpectrum sp;
    sp.polarization = pol;
    sp.grid = grid;
    sp.intensity.assign(grid.size(), 0.0);
    for (const auto& line : all) {
        if (line.polarization != pol)
            continue;
        sp.lines.push_back(line);
        for (std::size_t i = 0; i < grid.size(); ++i)
            sp.intensity[i] += line.height * lorentzian(grid[i], line.center, line.fwhm);
    }
    return sp;
}

} // namespace

const char* to_string(LineOrigin origin) {
    switch (origin) {
    case LineOrigin::XBrighter: return "X-brighter";
    case LineOrigin::XDarker: return "X-darker";
    case LineOrigin::XxH: return "XX-H";
    case LineOrigin::XxV: return "XX-V";
    }
    return "?";
}

GridSpec default_grid(const DotParameters& params) {
    GridSpec spec;
    spec.center = params.e0() - 0.5 * params.xx_binding();
    spec.span = 0.5 * params.xx_binding() + 600.0;
    spec.step = 1.0;
    return spec;
}

SpectrumPair synthesize(const DotParameters& params, double b_x, double power,
                        const GridSpec& grid_spec) {
    if (!(power > 0.0))
        throw ParameterError("synthesize: power must be positive");

    const auto fs = fine_structure(params, b_x);
    std::vector<SpectralLine> lines;
    for (const auto& st : fs.states) {
        SpectralLine line;
        line.center = params.e0() + st.energy;
        line.height = power * st.bright_fraction;
        line.fwhm = params.gamma();
        line.polarization = st.polarization;
        line.origin =
            st.label == Branch::Brighter ? LineOrigin::XBrighter : LineOrigin::XDarker;
        if (line.height > 0.0)
            lines.push_back(line);
    }
    // Biexciton decay inverts the doublet: the XX photon leaves the exciton
    // in a brighter eigenstate, so its energy is xx_binding below e0 minus
    // that state's energy.
    for (const auto& st : fs.states) {
        if (st.label != Branch::Brighter)
            continue;
        SpectralLine line;
        line.center = params.e0() - params.xx_binding() - st.energy;
        line.height = power * power * st.bright_fraction;
        line.fwhm = params.gamma();
        line.polarization = st.polarization;
        line.origin =
            st.polarization == Polarization::H ? LineOrigin::XxH : LineOrigin::XxV;
        if (line.height > 0.0)
            lines.push_back(line);
    }

    const auto grid = make_grid(grid_spec);
    std::ostringstream clipped;
    for (const auto& line : lines) {
        if (line.center < grid.front() || line.center > grid.back()) {
            if (clipped.tellp() > 0)
                clipped << ", ";
            clipped << to_string(line.origin) << " (" << to_string(line.polarization)
                    << ") at " << line.center << " ueV";
        }
    }
    if (clipped.tellp() > 0) {
        std::ostringstream os;
        os << "synthesize: grid [" << grid.front() << ", " << grid.back()
           << "] ueV clips " << clipped.str();
        throw CoverageError(os.str());
    }

    return {render_channel(Polarization::H, lines, grid),
            render_channel(Polarization::V, lines, grid)};
}

SpectrumPair synthesize(const DotParameters& params, double b_x, double power) {
    return synthesize(params, b_x, power, default_grid(params));
}

std::array<double, 4> effective_brightness(const DotParameters& params, double b_x) {
    const auto fs = fine_structure(params, b_x);
    std::array<double, 4> out{};
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = fs.states[i].bright_fraction;
    return out;
}

PolarizedSpectrum add_noise(const PolarizedSpectrum& spectrum, double sigma_rel,
                            std::uint64_t seed) {
    if (!(sigma_rel >= 0.0))
        throw ParameterError("add_noise: sigma_rel must be non-negative");

    PolarizedSpectrum out = spectrum;
    out.noise_seed = seed;
    if (sigma_rel == 0.0 || out.intensity.empty())
        return out;

    const double peak = *std::max_element(out.intensity.begin(), out.intensity.end());
    const double sigma = sigma_rel * peak;
    GaussianSampler draw(seed);
    for (auto& y : out.intensity)
        y += sigma * draw();
    return out;
}

} // namespace finestruct
