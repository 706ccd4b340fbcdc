#ifndef FINESTRUCT_MODEL_HPP
#define FINESTRUCT_MODEL_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "finestruct/errors.hpp"

namespace finestruct {

// Energies are in ueV, magnetic fields in tesla throughout.
inline constexpr double mu_bohr_ueV_per_T = 57.8838;

enum class Polarization { H, V };
enum class Branch { Brighter, Darker };

inline const char* to_string(Polarization p) { return p == Polarization::H ? "H" : "V"; }

// Physical description of one quantum dot. Validated on construction so
// every downstream operation can assume a consistent parameter set.
class DotParameters {
public:
    struct Init {
        double s0 = 0.0;            // bright splitting at B = 0, ueV (H above V when positive)
        double d0 = 0.0;            // mean bright-dark exchange splitting, ueV
        double sigma0 = 0.0;        // dark-state splitting, ueV
        double g_e = 0.0;           // in-plane electron g-factor
        double g_h = 0.0;           // in-plane hole g-factor
        double e0 = 0.0;            // exciton emission center, absolute ueV
        double gamma = 1.5;         // line FWHM, ueV
        double xx_binding = 2000.0; // biexciton binding energy, ueV
        std::optional<double> e_c{};// confinement energy relative to wetting layer, meV
    };

    explicit DotParameters(const Init& init);

    double s0() const { return v_.s0; }
    double d0() const { return v_.d0; }
    double sigma0() const { return v_.sigma0; }
    double g_e() const { return v_.g_e; }
    double g_h() const { return v_.g_h; }
    double e0() const { return v_.e0; }
    double gamma() const { return v_.gamma; }
    double xx_binding() const { return v_.xx_binding; }
    const std::optional<double>& e_c() const { return v_.e_c; }

    // Zeeman coupling between the bright and dark state of one channel:
    // g_e + g_h for H, g_e - g_h for V.
    double g_factor(Polarization p) const {
        return p == Polarization::H ? v_.g_e + v_.g_h : v_.g_e - v_.g_h;
    }

    // Signed bright-dark diagonal gap of one channel at B = 0.
    double zero_field_gap(Polarization p) const {
        const double sign = p == Polarization::H ? 1.0 : -1.0;
        return v_.d0 + 0.5 * sign * (v_.s0 - v_.sigma0);
    }

private:
    Init v_;
};

struct EigenState {
    double energy = 0.0;          // ueV, relative to the exciton manifold midpoint
    Polarization polarization = Polarization::H;
    double bright_fraction = 0.0; // weight on the bright basis state, in [0, 1]
    Branch label = Branch::Brighter;
};

// Eigenstructure at one field value. States are ordered
// [H brighter, V brighter, H darker, V darker].
struct FineStructure {
    double b_x = 0.0;
    std::array<EigenState, 4> states{};
    double s = 0.0;   // bright splitting E(H brighter) - E(V brighter), ueV
    double d_h = 0.0; // brighter-darker gap in the H channel, ueV
    double d_v = 0.0; // brighter-darker gap in the V channel, ueV
};

// Dense symmetric Hamiltonian in the basis [X_H, D_H, X_V, D_V].
using Matrix4 = std::array<std::array<double, 4>, 4>;

Matrix4 build_hamiltonian(const DotParameters& params, double b_x);

// Closed-form eigensolve of both polarization blocks.
// Throws DegenerateMixingError when a brighter/darker label is undefined.
FineStructure fine_structure(const DotParameters& params, double b_x);

// S(B_x), the splitting between the two brighter (emissive) branches.
double bright_splitting(const DotParameters& params, double b_x);

// (D_H, D_V): brighter-darker gaps per channel, by quadrature. Total functions
// of the field; never throw beyond parameter validation.
std::pair<double, double> dark_bright_splittings(const DotParameters& params, double b_x);

// Curvature of S(B_x) at zero field. The raw overload accepts fitted values
// and validates its own domain.
double k_eq2(double s0, double d0, double g_e, double g_h);
double k_eq2(const DotParameters& params);

struct PerturbativeCoefficients {
    double k = 0.0;       // ueV / T^2
    double k_prime = 0.0; // ueV / T^4
};

// Quadratic and quartic Taylor coefficients of S(B_x) about zero field.
PerturbativeCoefficients perturbative_coefficients(const DotParameters& params);

struct SweepPoint {
    double b_x = 0.0;
    std::optional<FineStructure> fine{};
    std::string error{}; // non-empty when this field value failed
};

// Uniform field scan; per-point failures are recorded, never propagated.
std::vector<SweepPoint> sweep_field(const DotParameters& params, double b_start,
                                    double b_end, std::size_t n_steps);

} // namespace finestruct

#endif
