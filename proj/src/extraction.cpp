#include "finestruct/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace finestruct {

namespace {

template <std::size_t P>
struct LsqSolution {
    std::array<double, P> coeff{};
    std::array<std::array<double, P>, P> inverse{}; // (X^T W X)^-1
};

// Normal-equations solve with Gauss-Jordan elimination, small P only.
template <std::size_t P>
LsqSolution<P> solve_normal_equations(const std::vector<std::array<double, P>>& rows,
                                      const std::vector<double>& y,
                                      const std::vector<double>& w) {
    std::array<std::array<double, 2 * P + 1>, P> m{};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < P; ++j) {
            for (std::size_t k = 0; k < P; ++k)
                m[j][k] += w[i] * rows[i][j] * rows[i][k];
            m[j][2 * P] += w[i] * rows[i][j] * y[i];
        }
    }
    double scale = 0.0;
    for (std::size_t j = 0; j < P; ++j) {
        m[j][P + j] = 1.0;
        scale = std::max(scale, std::abs(m[j][j]));
    }
    for (std::size_t col = 0; col < P; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < P; ++r)
            if (std::abs(m[r][col]) > std::abs(m[pivot][col]))
                pivot = r;
        if (!(std::abs(m[pivot][col]) > 1e-13 * scale))
            throw RankError("least squares: design matrix is singular");
        std::swap(m[col], m[pivot]);
        const double inv = 1.0 / m[col][col];
        for (auto& v : m[col])
            v *= inv;
        for (std::size_t r = 0; r < P; ++r) {
            if (r == col)
                continue;
            const double f = m[r][col];
            if (f == 0.0)
                continue;
            for (std::size_t c = 0; c < 2 * P + 1; ++c)
                m[r][c] -= f * m[col][c];
        }
    }
    LsqSolution<P> out;
    for (std::size_t j = 0; j < P; ++j) {
        out.coeff[j] = m[j][2 * P];
        for (std::size_t k = 0; k < P; ++k)
            out.inverse[j][k] = m[j][P + k];
    }
    return out;
}

// Weighted coefficient of determination, as a percentage clamped to [0, 100].
double r_squared_percent(const std::vector<double>& y, const std::vector<double>& fitted,
                         const std::vector<double>& w) {
    double wsum = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        wsum += w[i];
        mean += w[i] * y[i];
    }
    mean /= wsum;
    double sst = 0.0, ssr = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sst += w[i] * (y[i] - mean) * (y[i] - mean);
        ssr += w[i] * (y[i] - fitted[i]) * (y[i] - fitted[i]);
    }
    if (sst <= 0.0)
        return ssr <= 1e-12 * std::max(1.0, std::abs(mean)) ? 100.0 : 0.0;
    return 100.0 * std::clamp(1.0 - ssr / sst, 0.0, 1.0);
}

struct QuadRoots {
    int count = 0;
    double lo = 0.0;
    double hi = 0.0;
    double disc = 0.0;
};

QuadRoots solve_quadratic(double a2, double a1, double a0) {
    QuadRoots out;
    out.disc = a1 * a1 - 4.0 * a2 * a0;
    if (out.disc < 0.0)
        return out;
    const double sq = std::sqrt(out.disc);
    const double q = -0.5 * (a1 + std::copysign(sq, a1));
    double r1 = 0.0, r2 = 0.0;
    if (q != 0.0) {
        r1 = q / a2;
        r2 = a0 / q;
    }
    out.count = out.disc == 0.0 ? 1 : 2;
    out.lo = std::min(r1, r2);
    out.hi = std::max(r1, r2);
    return out;
}

template <class SplittingFn>
std::optional<double> scan_for_crossing(const SplittingFn& s_of_b, double b_max) {
    if (!(b_max > 0.0))
        throw ParameterError("crossing_field: b_max must be positive");
    const double coarse = 0.01;
    const auto n = static_cast<std::size_t>(std::ceil(b_max / coarse - 1e-9));
    double prev_b = 0.0;
    double prev_s = s_of_b(0.0);
    if (prev_s == 0.0)
        return 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double b = std::min(static_cast<double>(i) * coarse, b_max);
        const double s = s_of_b(b);
        if (s == 0.0)
            return b;
        if ((s > 0.0) != (prev_s > 0.0)) {
            double lo = prev_b, hi = b, s_lo = prev_s;
            while (hi - lo > 1e-9) {
                const double mid = 0.5 * (lo + hi);
                const double sm = s_of_b(mid);
                if (sm == 0.0)
                    return mid;
                if ((sm > 0.0) == (s_lo > 0.0)) {
                    lo = mid;
                    s_lo = sm;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        prev_b = b;
        prev_s = s;
    }
    return std::nullopt;
}

template <class Model>
DotClass classify_impl(const Model& model, const ClassifyThresholds& t) {
    if (!(t.lower > 0.0) || !(t.upper >= t.lower))
        throw ParameterError("classify: thresholds must satisfy 0 < lower <= upper");
    if (crossing_field(model, t.lower))
        return DotClass::CrossesBelowLower;
    if (crossing_field(model, t.upper))
        return DotClass::CrossesBelowUpper;
    return DotClass::NoCrossingBelowUpper;
}

struct ChannelPeaks {
    std::optional<Peak> dominant{};
    std::optional<Peak> secondary{};
};

// Dominant = tallest peak inside the exciton window; secondary = tallest one
// below it clearing the relative height floor.
ChannelPeaks read_channel(const PolarizedSpectrum& sp, const SeriesOptions& opt) {
    const auto peaks = extract_peaks(sp, opt.min_prominence);
    if (peaks.empty())
        return {};

    double window_center;
    if (opt.x_window_center) {
        window_center = *opt.x_window_center;
    } else {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& line : sp.lines) {
            if (line.origin == LineOrigin::XBrighter || line.origin == LineOrigin::XDarker) {
                lo = std::min(lo, line.center);
                hi = std::max(hi, line.center);
            }
        }
        if (lo <= hi) {
            window_center = 0.5 * (lo + hi);
        } else {
            window_center =
                std::max_element(peaks.begin(), peaks.end(),
                                 [](const Peak& a, const Peak& b) {
                                     return a.height < b.height;
                                 })
                    ->center;
        }
    }

    ChannelPeaks out;
    for (const auto& pk : peaks) {
        if (std::abs(pk.center - window_center) > opt.x_window_halfwidth)
            continue;
        if (!out.dominant || pk.height > out.dominant->height)
            out.dominant = pk;
    }
    if (!out.dominant)
        return out;
    for (const auto& pk : peaks) {
        if (std::abs(pk.center - window_center) > opt.x_window_halfwidth)
            continue;
        if (!(pk.center < out.dominant->center))
            continue;
        if (!(pk.height >= opt.secondary_min_ratio * out.dominant->height))
            continue;
        if (!out.secondary || pk.height > out.secondary->height)
            out.secondary = pk;
    }
    return out;
}

} // namespace

const char* to_string(SeriesKind kind) {
    switch (kind) {
    case SeriesKind::S: return "S";
    case SeriesKind::DH: return "D_H";
    case SeriesKind::DV: return "D_V";
    }
    return "?";
}

SplittingSeries::SplittingSeries(SeriesKind kind, std::vector<Sample> samples)
    : kind_(kind), samples_(std::move(samples)) {
    std::size_t with_sigma = 0;
    for (const auto& s : samples_) {
        if (!std::isfinite(s.b_x) || s.b_x < 0.0)
            throw ParameterError("SplittingSeries: b_x must be finite and non-negative");
        if (!std::isfinite(s.value))
            throw ParameterError("SplittingSeries: value must be finite");
        if (s.sigma) {
            if (!std::isfinite(*s.sigma) || !(*s.sigma > 0.0))
                throw ParameterError("SplittingSeries: sigma must be positive");
            ++with_sigma;
        }
    }
    if (with_sigma != 0 && with_sigma != samples_.size())
        throw ParameterError("SplittingSeries: sigmas must cover all samples or none");
    has_sigmas_ = !samples_.empty() && with_sigma == samples_.size();

    std::vector<double> bs;
    bs.reserve(samples_.size());
    for (const auto& s : samples_)
        bs.push_back(s.b_x);
    std::sort(bs.begin(), bs.end());
    if (std::adjacent_find(bs.begin(), bs.end()) != bs.end())
        throw ParameterError("SplittingSeries: duplicate b_x values");
}

Eq1Fit fit_eq1(const SplittingSeries& series, bool include_quartic) {
    const auto& sm = series.samples();
    const std::size_t n = sm.size();
    const std::size_t p = include_quartic ? 3 : 2;
    if (n < p) {
        std::ostringstream os;
        os << "fit_eq1: " << n << " samples cannot constrain " << p << " coefficients";
        throw RankError(os.str());
    }

    std::vector<double> y(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = sm[i].value;
        if (series.has_sigmas())
            w[i] = 1.0 / (*sm[i].sigma * *sm[i].sigma);
    }

    Eq1Fit fit;
    fit.quartic = include_quartic;
    std::vector<double> fitted(n);
    if (include_quartic) {
        std::vector<std::array<double, 3>> rows(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = sm[i].b_x * sm[i].b_x;
            rows[i] = {1.0, t, t * t};
        }
        const auto sol = solve_normal_equations<3>(rows, y, w);
        fit.s0_hat = sol.coeff[0];
        fit.k_hat = sol.coeff[1];
        fit.k_prime_hat = sol.coeff[2];
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 3; ++k)
                fit.covariance[j][k] = sol.inverse[j][k];
        for (std::size_t i = 0; i < n; ++i)
            fitted[i] = rows[i][0] * sol.coeff[0] + rows[i][1] * sol.coeff[1] +
                        rows[i][2] * sol.coeff[2];
    } else {
        std::vector<std::array<double, 2>> rows(n);
        for (std::size_t i = 0; i < n; ++i)
            rows[i] = {1.0, sm[i].b_x * sm[i].b_x};
        const auto sol = solve_normal_equations<2>(rows, y, w);
        fit.s0_hat = sol.coeff[0];
        fit.k_hat = sol.coeff[1];
        fit.k_prime_hat = 0.0;
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k)
                fit.covariance[j][k] = sol.inverse[j][k];
        for (std::size_t i = 0; i < n; ++i)
            fitted[i] = sol.coeff[0] + rows[i][1] * sol.coeff[1];
    }

    fit.residuals.resize(n);
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        fit.residuals[i] = y[i] - fitted[i];
        ssr += fit.residuals[i] * fit.residuals[i];
    }
    if (!series.has_sigmas()) {
        const double s2 = n > p ? ssr / static_cast<double>(n - p) : 0.0;
        for (auto& row : fit.covariance)
            for (auto& v : row)
                v *= s2;
    }
    fit.r_percent = r_squared_percent(y, fitted, w);
    return fit;
}

ZeemanFit fit_zeeman(const SplittingSeries& series) {
    const auto& sm = series.samples();
    if (sm.size() < 2)
        throw RankError("fit_zeeman: need at least 2 samples");
    bool any_nonzero = false;
    for (const auto& s : sm)
        any_nonzero = any_nonzero || s.b_x > 0.0;
    if (!any_nonzero)
        throw RankError("fit_zeeman: need a sample at nonzero field");

    // Linearized model: D^2 = D0^2 + (g mu_B)^2 B^2, with sigma(D^2) = 2 D sigma.
    const std::size_t n = sm.size();
    std::vector<std::array<double, 2>> rows(n);
    std::vector<double> y(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = {1.0, sm[i].b_x * sm[i].b_x};
        y[i] = sm[i].value * sm[i].value;
        if (series.has_sigmas()) {
            const double sig2 = 2.0 * std::abs(sm[i].value) * *sm[i].sigma;
            w[i] = 1.0 / std::max(sig2 * sig2, 1e-30);
        }
    }
    const auto sol = solve_normal_equations<2>(rows, y, w);

    const double intercept = sol.coeff[0];
    const double slope = sol.coeff[1];
    if (!(intercept > 0.0)) {
        std::ostringstream os;
        os << "fit_zeeman: fitted zero-field intercept D0^2 = " << intercept
           << " is not positive";
        throw ModelMismatchError(os.str());
    }

    ZeemanFit fit;
    fit.d_x0_hat = std::sqrt(intercept);
    fit.g_hat = slope > 0.0 ? std::sqrt(slope) / mu_bohr_ueV_per_T : 0.0;

    std::vector<double> fitted(n);
    for (std::size_t i = 0; i < n; ++i)
        fitted[i] = intercept + slope * rows[i][1];
    fit.r_percent = r_squared_percent(y, fitted, w);
    return fit;
}

double extrapolate_d0(const ZeemanFit& h_fit, const ZeemanFit& v_fit) {
    return 0.5 * (h_fit.d_x0_hat + v_fit.d_x0_hat);
}

GFactorBranch solve_g_equal_magnitude(double g_bright) {
    return {0.5 * g_bright, 0.5 * g_bright};
}

GFactorSolution solve_g_eq2(double k, double s0, double d0, double g_diff,
                            GConvention convention) {
    if (!(d0 > 0.0))
        throw ParameterError("solve_g_eq2: d0 must be positive");
    if (!(std::abs(s0) < 2.0 * d0))
        throw ParameterError("solve_g_eq2: requires |s0| < 2*d0");

    const double ratio = s0 / (2.0 * d0);
    const double amp = mu_bohr_ueV_per_T * mu_bohr_ueV_per_T / (d0 * (1.0 - ratio * ratio));
    const double target = k / amp; // g_e g_h - beta (g_e^2 + g_h^2)
    const double beta = s0 / (4.0 * d0);

    GFactorSolution out;
    out.convention = convention;
    if (convention == GConvention::SignedDifference) {
        // g_e = g_h + g_diff turns Eq. 2 into
        // (1-2b) g_h^2 + (1-2b) g_diff g_h - b g_diff^2 - target = 0.
        const auto q = solve_quadratic(1.0 - 2.0 * beta, (1.0 - 2.0 * beta) * g_diff,
                                       -beta * g_diff * g_diff - target);
        if (q.count == 0) {
            std::ostringstream os;
            os << "solve_g_eq2: no real g-factor pair (discriminant = " << q.disc << ")";
            throw InfeasibleError(os.str(), q.disc);
        }
        out.branches.push_back({q.lo + g_diff, q.lo});
        if (q.count == 2)
            out.branches.push_back({q.hi + g_diff, q.hi});
    } else {
        if (!(g_diff >= 0.0))
            throw ParameterError("solve_g_eq2: magnitude convention requires g_diff >= 0");
        // |g_e| = |g_h| + g_diff with h = |g_h| >= 0. Same-sign pairs obey
        // (1-2b) h^2 + (1-2b) g_diff h - b g_diff^2 - target = 0, opposite-sign
        // pairs (1+2b) h^2 + (1+2b) g_diff h + b g_diff^2 + target = 0. A joint
        // sign flip is unobservable, so branches are reported with g_e >= 0.
        const auto same = solve_quadratic(1.0 - 2.0 * beta, (1.0 - 2.0 * beta) * g_diff,
                                          -beta * g_diff * g_diff - target);
        const auto opposite = solve_quadratic(1.0 + 2.0 * beta,
                                              (1.0 + 2.0 * beta) * g_diff,
                                              beta * g_diff * g_diff + target);
        for (int i = 0; i < same.count; ++i) {
            const double h = i == 0 ? same.lo : same.hi;
            if (h >= 0.0)
                out.branches.push_back({h + g_diff, h});
        }
        for (int i = 0; i < opposite.count; ++i) {
            const double h = i == 0 ? opposite.lo : opposite.hi;
            if (h >= 0.0)
                out.branches.push_back({h + g_diff, -h});
        }
        if (out.branches.empty()) {
            std::ostringstream os;
            os << "solve_g_eq2: no admissible g-factor pair (same-sign discriminant = "
               << same.disc << ")";
            throw InfeasibleError(os.str(), same.disc);
        }
    }

    out.heuristic_pick = 0;
    for (std::size_t i = 0; i < out.branches.size(); ++i) {
        if (std::abs(out.branches[i].g_h) < std::abs(out.branches[i].g_e)) {
            out.heuristic_pick = i;
            break;
        }
    }
    return out;
}

std::vector<Peak> extract_peaks(const PolarizedSpectrum& spectrum, double min_prominence) {
    if (!(min_prominence > 0.0 && min_prominence < 1.0))
        throw ParameterError("extract_peaks: min_prominence must lie in (0, 1)");
    const auto& x = spectrum.grid;
    const auto& y = spectrum.intensity;
    if (x.size() != y.size())
        throw ParameterError("extract_peaks: grid/intensity length mismatch");

    std::vector<Peak> out;
    if (y.size() < 3)
        return out;
    const double top = *std::max_element(y.begin(), y.end());
    if (!(top > 0.0))
        return out;
    const double floor_h = min_prominence * top;
    const double step = x[1] - x[0];

    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        // a two-sample plateau counts once, at its left edge
        if (!(y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > floor_h))
            continue;
        const double den = y[i - 1] - 2.0 * y[i] + y[i + 1]; // < 0 here
        const double dy = y[i + 1] - y[i - 1];
        Peak pk;
        pk.center = x[i] + 0.5 * (-dy / den) * step;
        pk.height = y[i] - dy * dy / (8.0 * den);
        out.push_back(pk);
    }
    return out;
}

SeriesExtraction series_from_spectra(std::span<const FieldSpectra> fields,
                                     const SeriesOptions& options) {
    if (!(options.secondary_min_ratio > 0.0 && options.secondary_min_ratio < 1.0))
        throw ParameterError("series_from_spectra: secondary_min_ratio must lie in (0, 1)");
    if (!(options.x_window_halfwidth > 0.0))
        throw ParameterError("series_from_spectra: x_window_halfwidth must be positive");

    std::vector<Sample> s, dh, dv;
    std::vector<std::string> warnings;
    for (const auto& f : fields) {
        const auto h = read_channel(f.h, options);
        const auto v = read_channel(f.v, options);
        if (h.dominant && v.dominant) {
            s.push_back({f.b_x, h.dominant->center - v.dominant->center, {}});
        } else {
            std::ostringstream os;
            os << "b_x = " << f.b_x << " T: no dominant "
               << (h.dominant ? "V" : "H") << " peak; field omitted from S";
            warnings.push_back(os.str());
        }
        if (h.dominant && h.secondary)
            dh.push_back({f.b_x, h.dominant->center - h.secondary->center, {}});
        if (v.dominant && v.secondary)
            dv.push_back({f.b_x, v.dominant->center - v.secondary->center, {}});
    }
    return {SplittingSeries(SeriesKind::S, std::move(s)),
            SplittingSeries(SeriesKind::DH, std::move(dh)),
            SplittingSeries(SeriesKind::DV, std::move(dv)), std::move(warnings)};
}

double average_x_xx(double s_x, double s_xx) {
    return 0.5 * (s_x - s_xx);
}

std::optional<double> crossing_field(const DotParameters& params, double b_max) {
    return scan_for_crossing([&](double b) { return bright_splitting(params, b); }, b_max);
}

std::optional<double> crossing_field(const Eq1Fit& fit, double b_max) {
    return scan_for_crossing(
        [&](double b) {
            const double t = b * b;
            return fit.s0_hat + fit.k_hat * t + fit.k_prime_hat * t * t;
        },
        b_max);
}

DotClass classify_dot(const DotParameters& params, const ClassifyThresholds& thresholds) {
    return classify_impl(params, thresholds);
}

DotClass classify_fit(const Eq1Fit& fit, const ClassifyThresholds& thresholds) {
    return classify_impl(fit, thresholds);
}

std::string dot_class_label(DotClass cls, const ClassifyThresholds& thresholds) {
    std::ostringstream os;
    switch (cls) {
    case DotClass::CrossesBelowLower:
        os << "crosses_below_" << thresholds.lower << "T";
        break;
    case DotClass::CrossesBelowUpper:
        os << "crosses_below_" << thresholds.upper << "T";
        break;
    case DotClass::NoCrossingBelowUpper:
        os << "no_crossing_below_" << thresholds.upper << "T";
        break;
    }
    return os.str();
}

LinearTrend linear_trend(std::span<const std::pair<double, double>> points) {
    std::vector<double> xs;
    xs.reserve(points.size());
    for (const auto& [x, _] : points)
        xs.push_back(x);
    std::sort(xs.begin(), xs.end());
    const auto distinct = std::unique(xs.begin(), xs.end()) - xs.begin();
    if (distinct < 2)
        throw RankError("linear_trend: need at least 2 distinct x values");

    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(points.size());
    my /= static_cast<double>(points.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }

    LinearTrend t;
    t.slope = sxy / sxx;
    t.intercept = my - t.slope * mx;
    std::vector<double> yv, fitted, w(points.size(), 1.0);
    for (const auto& [x, y] : points) {
        yv.push_back(y);
        fitted.push_back(t.intercept + t.slope * x);
    }
    t.r_percent = r_squared_percent(yv, fitted, w);
    return t;
}

} // namespace finestruct
