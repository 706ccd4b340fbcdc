#include "finestruct/model.hpp"

#include <cmath>
#include <sstream>

namespace finestruct {

namespace {

std::string violation(const char* field, double value, const char* requirement) {
    std::ostringstream os;
    os << "DotParameters: " << field << " = " << value << " violates " << requirement;
    return os.str();
}

struct BlockEigen {
    double brighter_energy = 0.0;
    double darker_energy = 0.0;
    double gap = 0.0;
    double brighter_fraction = 0.0;
};

// Eigensolve of one 2x2 polarization block. `delta` is the signed
// bright-dark diagonal difference, `zeeman` = g * mu_B * B_x. The brighter
// branch is the one adiabatically continued from the bright state at B = 0.
BlockEigen solve_block(double mean, double delta, double zeeman, const char* channel) {
    const double gap = std::hypot(delta, zeeman);
    if (gap == 0.0)
        throw DegenerateMixingError(std::string("degenerate ") + channel +
                                    " block: brighter/darker labels undefined");
    const double theta = 0.5 * std::atan2(std::abs(zeeman), std::abs(delta));
    const double c = std::cos(theta);
    const double fraction = c * c;
    if (fraction - 0.5 < 1e-9)
        throw DegenerateMixingError(std::string("maximal mixing in the ") + channel +
                                    " block: brighter/darker labels undefined");
    const double half_gap = std::copysign(0.5 * gap, delta);
    return {mean + half_gap, mean - half_gap, gap, fraction};
}

} // namespace

DotParameters::DotParameters(const Init& init) : v_(init) {
    if (!(v_.d0 > 0.0))
        throw ParameterError(violation("d0", v_.d0, "d0 > 0"));
    if (!(std::abs(v_.s0) < 2.0 * v_.d0))
        throw ParameterError(violation("s0", v_.s0, "|s0| < 2*d0"));
    if (!(std::abs(v_.sigma0) < 2.0 * v_.d0))
        throw ParameterError(violation("sigma0", v_.sigma0, "|sigma0| < 2*d0"));
    if (!(v_.gamma > 0.0))
        throw ParameterError(violation("gamma", v_.gamma, "gamma > 0"));
    if (!(v_.xx_binding > 0.0))
        throw ParameterError(violation("xx_binding", v_.xx_binding, "xx_binding > 0"));
    if (!std::isfinite(v_.g_e) || !std::isfinite(v_.g_h))
        throw ParameterError("DotParameters: g_e and g_h must be finite");
    if (!std::isfinite(v_.e0))
        throw ParameterError("DotParameters: e0 must be finite");
}

Matrix4 build_hamiltonian(const DotParameters& params, double b_x) {
    const double zh = 0.5 * params.g_factor(Polarization::H) * mu_bohr_ueV_per_T * b_x;
    const double zv = 0.5 * params.g_factor(Polarization::V) * mu_bohr_ueV_per_T * b_x;
    Matrix4 h{};
    h[0][0] = 0.5 * (params.d0() + params.s0());
    h[1][1] = 0.5 * (-params.d0() + params.sigma0());
    h[0][1] = h[1][0] = zh;
    h[2][2] = 0.5 * (params.d0() - params.s0());
    h[3][3] = 0.5 * (-params.d0() - params.sigma0());
    h[2][3] = h[3][2] = zv;
    return h;
}

FineStructure fine_structure(const DotParameters& params, double b_x) {
    const double mu_b = mu_bohr_ueV_per_T * b_x;
    const double mean_h = 0.25 * (params.s0() + params.sigma0());
    const double mean_v = -mean_h;
    const auto h = solve_block(mean_h, params.zero_field_gap(Polarization::H),
                               params.g_factor(Polarization::H) * mu_b, "H");
    const auto v = solve_block(mean_v, params.zero_field_gap(Polarization::V),
                               params.g_factor(Polarization::V) * mu_b, "V");

    FineStructure out;
    out.b_x = b_x;
    out.states = {{
        {h.brighter_energy, Polarization::H, h.brighter_fraction, Branch::Brighter},
        {v.brighter_energy, Polarization::V, v.brighter_fraction, Branch::Brighter},
        {h.darker_energy, Polarization::H, 1.0 - h.brighter_fraction, Branch::Darker},
        {v.darker_energy, Polarization::V, 1.0 - v.brighter_fraction, Branch::Darker},
    }};
    out.s = h.brighter_energy - v.brighter_energy;
    out.d_h = h.gap;
    out.d_v = v.gap;
    return out;
}

double bright_splitting(const DotParameters& params, double b_x) {
    return fine_structure(params, b_x).s;
}

std::pair<double, double> dark_bright_splittings(const DotParameters& params, double b_x) {
    const double mu_b = mu_bohr_ueV_per_T * b_x;
    return {std::hypot(params.zero_field_gap(Polarization::H),
                       params.g_factor(Polarization::H) * mu_b),
            std::hypot(params.zero_field_gap(Polarization::V),
                       params.g_factor(Polarization::V) * mu_b)};
}

double k_eq2(double s0, double d0, double g_e, double g_h) {
    if (!(d0 > 0.0))
        throw ParameterError("k_eq2: d0 must be positive");
    const double ratio = s0 / (2.0 * d0);
    const double denom = d0 * (1.0 - ratio * ratio);
    if (!(denom > 0.0))
        throw ParameterError("k_eq2: requires |s0| < 2*d0");
    const double mu2 = mu_bohr_ueV_per_T * mu_bohr_ueV_per_T;
    return mu2 / denom * (g_e * g_h - s0 / (4.0 * d0) * (g_e * g_e + g_h * g_h));
}

double k_eq2(const DotParameters& params) {
    return k_eq2(params.s0(), params.d0(), params.g_e(), params.g_h());
}

PerturbativeCoefficients perturbative_coefficients(const DotParameters& params) {
    const double dh0 = params.zero_field_gap(Polarization::H);
    const double dv0 = params.zero_field_gap(Polarization::V);
    if (!(dh0 > 0.0) || !(dv0 > 0.0))
        throw ParameterError("perturbative_coefficients: both zero-field bright-dark "
                             "gaps must be positive");
    const double gh = params.g_factor(Polarization::H);
    const double gv = params.g_factor(Polarization::V);
    const double gh2 = gh * gh;
    const double gv2 = gv * gv;
    const double mu2 = mu_bohr_ueV_per_T * mu_bohr_ueV_per_T;

    PerturbativeCoefficients out;
    out.k = 0.25 * mu2 * (gh2 / dh0 - gv2 / dv0);
    out.k_prime = -(mu2 * mu2 / 16.0) *
                  (gh2 * gh2 / (dh0 * dh0 * dh0) - gv2 * gv2 / (dv0 * dv0 * dv0));
    return out;
}

std::vector<SweepPoint> sweep_field(const DotParameters& params, double b_start,
                                    double b_end, std::size_t n_steps) {
    if (n_steps < 2)
        throw ParameterError("sweep_field: need at least 2 steps");
    if (!(b_start < b_end))
        throw ParameterError("sweep_field: field grid must span a positive range");

    std::vector<SweepPoint> out;
    out.reserve(n_steps);
    const double span = b_end - b_start;
    for (std::size_t i = 0; i < n_steps; ++i) {
        SweepPoint pt;
        pt.b_x = b_start + span * static_cast<double>(i) / static_cast<double>(n_steps - 1);
        try {
            pt.fine = fine_structure(params, pt.b_x);
        } catch (const DegenerateMixingError& e) {
            pt.error = e.what();
        }
        out.push_back(std::move(pt));
    }
    return out;
}

} // namespace finestruct
