#ifndef FINESTRUCT_EXTRACTION_HPP
#define FINESTRUCT_EXTRACTION_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "finestruct/model.hpp"
#include "finestruct/spectra.hpp"

namespace finestruct {

enum class SeriesKind { S, DH, DV };

const char* to_string(SeriesKind kind);

struct Sample {
    double b_x = 0.0;  // tesla
    double value = 0.0; // ueV
    std::optional<double> sigma{}; // ueV, measurement uncertainty
};

// Field-resolved splitting measurements. Construction enforces b_x >= 0,
// distinct b_x, positive sigmas, and that sigmas are all-or-none.
class SplittingSeries {
public:
    SplittingSeries(SeriesKind kind, std::vector<Sample> samples);

    SeriesKind kind() const { return kind_; }
    const std::vector<Sample>& samples() const { return samples_; }
    bool has_sigmas() const { return has_sigmas_; }

private:
    SeriesKind kind_;
    std::vector<Sample> samples_;
    bool has_sigmas_ = false;
};

struct Eq1Fit {
    double s0_hat = 0.0;      // ueV
    double k_hat = 0.0;       // ueV / T^2
    double k_prime_hat = 0.0; // ueV / T^4, zero when the quartic term is excluded
    double r_percent = 0.0;   // coefficient of determination, percent
    bool quartic = true;
    std::vector<double> residuals{};
    std::array<std::array<double, 3>, 3> covariance{}; // (s0, K, K') ordering
};

// Weighted least squares of S(B) = s0 + K B^2 [+ K' B^4]. Weights are
// inverse-variance when the series carries sigmas, uniform otherwise.
Eq1Fit fit_eq1(const SplittingSeries& series, bool include_quartic);

struct ZeemanFit {
    double d_x0_hat = 0.0; // ueV, zero-field gap
    double g_hat = 0.0;    // >= 0
    double r_percent = 0.0;
};

// Linear fit of D^2 = D0^2 + (g mu_B)^2 B^2. A non-positive fitted D0^2 is a
// model mismatch; a negative slope clamps g to zero.
ZeemanFit fit_zeeman(const SplittingSeries& series);

// Mean of the two per-channel zero-field gaps.
double extrapolate_d0(const ZeemanFit& h_fit, const ZeemanFit& v_fit);

struct GFactorBranch {
    double g_e = 0.0;
    double g_h = 0.0;
};

enum class GConvention {
    SignedDifference,    // g_diff = g_e - g_h
    MagnitudeDifference, // g_diff = |g_e| - |g_h|, assumed >= 0
};

struct GFactorSolution {
    std::vector<GFactorBranch> branches{};
    GConvention convention = GConvention::SignedDifference;
    std::size_t heuristic_pick = 0; // index of the |g_h| < |g_e| branch when present
};

// Degenerate-channel shortcut: g_e = g_h = g_bright / 2.
GFactorBranch solve_g_equal_magnitude(double g_bright);

// Inverts the zero-field curvature relation for (g_e, g_h) given the fitted
// curvature k, the measured difference g_diff, and a sign convention.
// Throws InfeasibleError (with the discriminant) when no real pair exists.
GFactorSolution solve_g_eq2(double k, double s0, double d0, double g_diff,
                            GConvention convention);

struct Peak {
    double center = 0.0; // ueV
    double height = 0.0;
};

// Strict local maxima above min_prominence times the global maximum, with
// three-point parabolic refinement. Returned sorted by energy.
std::vector<Peak> extract_peaks(const PolarizedSpectrum& spectrum, double min_prominence);

struct FieldSpectra {
    double b_x = 0.0;
    PolarizedSpectrum h{};
    PolarizedSpectrum v{};
};

struct SeriesOptions {
    double min_prominence = 0.01;
    double secondary_min_ratio = 0.01;       // darker peak height relative to dominant
    std::optional<double> x_window_center{}; // ueV; defaults per spectrum, see below
    double x_window_halfwidth = 1500.0;      // ueV
};

struct SeriesExtraction {
    SplittingSeries s;
    SplittingSeries d_h;
    SplittingSeries d_v;
    std::vector<std::string> warnings{};
};

// Reads S, D_H, D_V series off per-field spectrum pairs. Peaks are searched
// in a window around the exciton lines (taken from line metadata when
// present, else the tallest peak): the dominant peak is the tallest in the
// window, the secondary the tallest below it reaching secondary_min_ratio of
// its height. Fields missing a dominant peak are skipped with a warning.
SeriesExtraction series_from_spectra(std::span<const FieldSpectra> fields,
                                     const SeriesOptions& options = {});

// Splitting estimate combining the exciton and biexciton doublets, which
// carry opposite signs of the same splitting.
double average_x_xx(double s_x, double s_xx);

// Smallest field in [0, b_max] where S crosses zero, if any. S(0) = 0 counts
// as a crossing at zero field.
std::optional<double> crossing_field(const DotParameters& params, double b_max);
std::optional<double> crossing_field(const Eq1Fit& fit, double b_max);

struct ClassifyThresholds {
    double lower = 5.0;  // tesla
    double upper = 10.0; // tesla
};

enum class DotClass { CrossesBelowLower, CrossesBelowUpper, NoCrossingBelowUpper };

DotClass classify_dot(const DotParameters& params, const ClassifyThresholds& thresholds);
DotClass classify_fit(const Eq1Fit& fit, const ClassifyThresholds& thresholds);

// Stable label such as "crosses_below_5T" or "no_crossing_below_10T".
std::string dot_class_label(DotClass cls, const ClassifyThresholds& thresholds);

struct LinearTrend {
    double slope = 0.0;
    double intercept = 0.0;
    double r_percent = 0.0;
};

// Ordinary least squares y = a + b x over (x, y) pairs.
LinearTrend linear_trend(std::span<const std::pair<double, double>> points);

} // namespace finestruct

#endif
