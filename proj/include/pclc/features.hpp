#pragma once

// Biomarker extraction: line length, area, half-wave counting, band power,
// adaptive thresholds, detector combination, ECAP amplitude estimation and
// signal-quality flags.

#include "pclc/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <variant>
#include <vector>

namespace pclc {

// ---------------------------------------------------------------------------
// Time-domain features
// ---------------------------------------------------------------------------

/// Sum of absolute first differences.
inline double line_length(std::span<const double> x) {
    if (x.size() < 2) throw InsufficientData("line_length needs at least 2 samples");
    double sum = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) sum += std::fabs(x[i] - x[i - 1]);
    return sum;
}

inline double line_length(const Window& w) { return line_length(w.values()); }

/// Sum of absolute sample values.
inline double area_under_curve(std::span<const double> x) {
    if (x.empty()) throw InsufficientData("area_under_curve needs at least 1 sample");
    double sum = 0.0;
    for (double v : x) sum += std::fabs(v);
    return sum;
}

inline double area_under_curve(const Window& w) { return area_under_curve(w.values()); }

struct HalfWaveConfig {
    double min_amplitude_uV = 1.0;
    std::int64_t min_duration_samples = 1;
    std::int64_t max_duration_samples = 1000;
    double hysteresis_uV = 0.0;

    [[nodiscard]] bool valid() const {
        return min_amplitude_uV > 0.0 && min_duration_samples > 0 && min_duration_samples <= max_duration_samples &&
               hysteresis_uV >= 0.0;
    }
};

/// Indices of confirmed turning points. A reversal only counts once the signal
/// has moved more than `hysteresis` away from the running extreme. Neither
/// the first sample nor the trailing running extreme is ever confirmed, so a
/// half wave cut by the window edge does not count.
inline std::vector<std::size_t> turning_points(std::span<const double> x, double hysteresis) {
    std::vector<std::size_t> out;
    if (x.empty()) return out;
    int dir = 0;
    std::size_t hi = 0;
    std::size_t lo = 0;
    std::size_t cur = 0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (dir == 0) {
            if (x[i] > x[hi]) hi = i;
            if (x[i] < x[lo]) lo = i;
            if (x[hi] - x[lo] > hysteresis) {
                if (hi > lo) {
                    if (lo > 0) out.push_back(lo);
                    dir = +1;
                    cur = hi;
                } else {
                    if (hi > 0) out.push_back(hi);
                    dir = -1;
                    cur = lo;
                }
            }
        } else if (dir > 0) {
            if (x[i] > x[cur]) {
                cur = i;
            } else if (x[cur] - x[i] > hysteresis) {
                out.push_back(cur);
                dir = -1;
                cur = i;
            }
        } else {
            if (x[i] < x[cur]) {
                cur = i;
            } else if (x[i] - x[cur] > hysteresis) {
                out.push_back(cur);
                dir = +1;
                cur = i;
            }
        }
    }
    return out;
}

/// Number of extremum-to-extremum segments meeting both the amplitude and
/// duration criteria.
inline std::int64_t half_wave_count(std::span<const double> x, const HalfWaveConfig& cfg) {
    if (x.size() < 3) throw InsufficientData("half_wave_count needs at least 3 samples");
    const auto tp = turning_points(x, cfg.hysteresis_uV);
    std::int64_t count = 0;
    for (std::size_t j = 1; j < tp.size(); ++j) {
        const double amp = std::fabs(x[tp[j]] - x[tp[j - 1]]);
        const auto dur = static_cast<std::int64_t>(tp[j] - tp[j - 1]);
        if (amp >= cfg.min_amplitude_uV && dur >= cfg.min_duration_samples && dur <= cfg.max_duration_samples) {
            ++count;
        }
    }
    return count;
}

// ---------------------------------------------------------------------------
// Band power
// ---------------------------------------------------------------------------

/// Rectangular-window periodogram summed over the bins whose centre frequency
/// lies in [f_lo, f_hi]. One-sided scaling, so summing every bin gives
/// mean(x^2); a unit sine on a bin centre yields 0.5.
inline double band_power(std::span<const double> x, double f_lo, double f_hi, double fs) {
    if (!(fs > 0.0) || !(f_lo > 0.0) || !(f_lo < f_hi) || f_hi > fs / 2.0 + 1e-12) {
        throw DomainError("band_power: need 0 < f_lo < f_hi <= fs/2");
    }
    const std::size_t n = x.size();
    if (static_cast<double>(n) + 1e-9 < fs / f_lo) {
        throw InsufficientData("band_power: window shorter than one period of f_lo");
    }
    const double df = fs / static_cast<double>(n);
    const auto k_lo = static_cast<std::size_t>(std::ceil(f_lo / df - 1e-9));
    const auto k_hi = std::min<std::size_t>(static_cast<std::size_t>(std::floor(f_hi / df + 1e-9)), n / 2);

    std::vector<double> cos_tab(n);
    std::vector<double> sin_tab(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        cos_tab[m] = std::cos(a);
        sin_tab[m] = std::sin(a);
    }
    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    double total = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        double re = 0.0;
        double im = 0.0;
        std::size_t idx = 0;
        for (std::size_t m = 0; m < n; ++m) {
            re += x[m] * cos_tab[idx];
            im -= x[m] * sin_tab[idx];
            idx += k;
            if (idx >= n) idx -= n;
        }
        const bool edge = (k == 0) || (n % 2 == 0 && k == n / 2);
        total += (edge ? 1.0 : 2.0) * (re * re + im * im) / n2;
    }
    return total;
}

inline double band_power(const Window& w, double f_lo, double f_hi, double fs) {
    return band_power(w.values(), f_lo, f_hi, fs);
}

// ---------------------------------------------------------------------------
// Thresholds and detection
// ---------------------------------------------------------------------------

struct FixedThreshold {
    double value = 0.0;
};
struct AdaptiveThreshold {};

using ThresholdMode = std::variant<FixedThreshold, AdaptiveThreshold>;

inline double median(std::vector<double> v) {
    if (v.empty()) throw InsufficientData("median of empty set");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

/// Baseline (long) and recent (short) feature histories. The caller decides
/// what enters the baseline.
struct AdaptiveThresholdState {
    Window long_window{1};
    Window short_window{1};
    double multiplier = 2.0;
    ThresholdMode mode = AdaptiveThreshold{};

    [[nodiscard]] bool adaptive() const { return std::holds_alternative<AdaptiveThreshold>(mode); }
    [[nodiscard]] bool valid() const {
        return multiplier > 0.0 && (!adaptive() || long_window.capacity() > short_window.capacity());
    }
};

inline double adaptive_threshold(const AdaptiveThresholdState& s) {
    if (const auto* f = std::get_if<FixedThreshold>(&s.mode)) return f->value;
    if (s.long_window.empty()) throw InsufficientData("adaptive threshold needs a baseline");
    return s.multiplier * median(s.long_window.values());
}

/// Mean of the short window; the quantity compared against the threshold.
inline double short_term_value(const AdaptiveThresholdState& s) {
    if (s.short_window.empty()) throw InsufficientData("short window is empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < s.short_window.size(); ++i) sum += s.short_window[i];
    return sum / static_cast<double>(s.short_window.size());
}

enum class Combinator : std::uint8_t { And, Or };

inline bool detect(const std::vector<bool>& flags, Combinator c) {
    if (flags.empty()) throw ConfigError("detect needs at least one flag");
    if (c == Combinator::And) return std::all_of(flags.begin(), flags.end(), [](bool b) { return b; });
    return std::any_of(flags.begin(), flags.end(), [](bool b) { return b; });
}

// ---------------------------------------------------------------------------
// ECAP amplitude and signal quality
// ---------------------------------------------------------------------------

struct EcapEstimate {
    double value_uV = 0.0;
    QualityFlags quality;
};

/// Range checks shared by both estimator paths. Nonpositive estimates are not
/// physiological; values at or beyond the rails are saturated.
inline QualityFlags ecap_range_flags(double value_uV, double saturation_uV) {
    QualityFlags q;
    if (!(value_uV > 0.0)) q.set(Quality::Impossible);
    if (saturation_uV > 0.0 && std::fabs(value_uV) >= saturation_uV) q.set(Quality::Saturated);
    return q;
}

/// Identity estimator for amplitude-level simulation.
inline EcapEstimate ecap_amplitude(double injected_uV, double saturation_uV) {
    return {injected_uV, ecap_range_flags(injected_uV, saturation_uV)};
}

/// Signed peak-to-trough of the post-blanking segment: positive when the
/// trough (N1) precedes the peak (P2), as in a normal triphasic response.
inline EcapEstimate ecap_amplitude(std::span<const double> trace, std::size_t blank_samples, double saturation_uV) {
    if (blank_samples >= trace.size()) throw InsufficientData("blanking covers the whole trace");
    const auto seg = trace.subspan(blank_samples);
    const auto [mn, mx] = std::minmax_element(seg.begin(), seg.end());
    const double span = *mx - *mn;
    const double value = (mn < mx) ? span : -span;
    EcapEstimate est{value, ecap_range_flags(value, 0.0)};
    if (saturation_uV > 0.0) {
        const bool railed =
            std::any_of(trace.begin(), trace.end(), [&](double v) { return std::fabs(v) >= saturation_uV; });
        if (railed) est.quality.set(Quality::Saturated);
    }
    return est;
}

struct QualityLimits {
    double saturation_uV = 1000.0;
    double flatline_eps = 1e-9;
    double max_delta_uV = 1e9;
};

/// Saturation wins over flatline: a railed signal is reported as Saturated only.
inline QualityFlags signal_quality(std::span<const double> x, const QualityLimits& lim) {
    QualityFlags q;
    if (x.empty()) return q;
    if (std::any_of(x.begin(), x.end(), [&](double v) { return std::fabs(v) >= lim.saturation_uV; })) {
        q.set(Quality::Saturated);
    } else {
        const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
        if (*mx - *mn < lim.flatline_eps) q.set(Quality::Flatline);
    }
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (std::fabs(x[i] - x[i - 1]) > lim.max_delta_uV) {
            q.set(Quality::ExternalNoise);
            break;
        }
    }
    return q;
}

inline QualityFlags signal_quality(const Window& w, const QualityLimits& lim) {
    return signal_quality(w.values(), lim);
}

} // namespace pclc
