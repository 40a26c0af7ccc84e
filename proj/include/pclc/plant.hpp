#pragma once

// Synthetic patient and device models: dose-response curves, the ECAP growth
// law against electrode-cord distance, disturbance tracks, beta-band LFP and
// iEEG frame generators, a seizure generator and the compliance-limited
// actuator.

#include "pclc/core.hpp"
#include "pclc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace pclc {

// ---------------------------------------------------------------------------
// Dose-response curves
// ---------------------------------------------------------------------------

struct IdealLinear {
    double gain = 1.0;
};

struct OffsetGain {
    double gain = 1.0;
    double offset_mA = 0.0;
};

/// OffsetGain base curve up to peak_mA, then a linear decline of
/// `decline_gain` units/mA (floored at zero), plus Gaussian noise.
struct NoisyNonMonotonic {
    OffsetGain base;
    double noise_sd = 0.0;
    double peak_mA = 1.0;
    double decline_gain = 1.0;
};

/// baseline * (1 - max_suppression_fraction * logistic((a - knee) / softness))
struct BetaSuppression {
    double baseline = 1.0;
    double max_suppression_fraction = 0.5;
    double knee_mA = 1.75;
    double softness_mA = 0.5;
};

using DoseResponseCurve = std::variant<IdealLinear, OffsetGain, NoisyNonMonotonic, BetaSuppression>;

namespace detail {
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double offset_gain(const OffsetGain& c, double a) { return c.gain * std::max(0.0, a - c.offset_mA); }

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
} // namespace detail

using detail::overloaded;

/// Noise-free part of a curve. Exposed so tests can compare the noisy variant
/// against its base.
inline double dose_response_mean(const DoseResponseCurve& curve, double amplitude_mA) {
    if (amplitude_mA < 0.0 || std::isnan(amplitude_mA)) {
        throw DomainError("dose_response: amplitude must be nonnegative");
    }
    return std::visit(
        overloaded{
            [&](const IdealLinear& c) { return c.gain * amplitude_mA; },
            [&](const OffsetGain& c) { return detail::offset_gain(c, amplitude_mA); },
            [&](const NoisyNonMonotonic& c) {
                if (amplitude_mA <= c.peak_mA) return detail::offset_gain(c.base, amplitude_mA);
                const double top = detail::offset_gain(c.base, c.peak_mA);
                return std::max(0.0, top - c.decline_gain * (amplitude_mA - c.peak_mA));
            },
            [&](const BetaSuppression& c) {
                const double s = detail::logistic((amplitude_mA - c.knee_mA) / c.softness_mA);
                return c.baseline * (1.0 - c.max_suppression_fraction * s);
            },
        },
        curve);
}

inline double dose_response_eval(const DoseResponseCurve& curve, double amplitude_mA, Rng& rng) {
    const double mean = dose_response_mean(curve, amplitude_mA);
    if (const auto* noisy = std::get_if<NoisyNonMonotonic>(&curve); noisy && noisy->noise_sd > 0.0) {
        return rng.normal(mean, noisy->noise_sd);
    }
    return mean;
}

// ---------------------------------------------------------------------------
// ECAP growth law
// ---------------------------------------------------------------------------

struct EcapPlantParams {
    double slope_uV_per_mA_at_ref = 0.5;
    double threshold_mA_at_ref = 3.0;
    double distance_ref_mm = 3.0;
    double threshold_distance_coeff = 0.8; // mA per mm
    double slope_distance_coeff = 0.0;     // fractional slope change per mm
};

inline double ecap_threshold_mA(const EcapPlantParams& p, double distance_mm) {
    return p.threshold_mA_at_ref + p.threshold_distance_coeff * (distance_mm - p.distance_ref_mm);
}

inline double ecap_slope(const EcapPlantParams& p, double distance_mm) {
    return p.slope_uV_per_mA_at_ref * (1.0 + p.slope_distance_coeff * (distance_mm - p.distance_ref_mm));
}

/// Throws InvalidPlant unless threshold >= 0 and slope > 0 over [d_min, d_max].
/// Both quantities are affine in distance, so checking the ends suffices.
inline void check_ecap_params(const EcapPlantParams& p, double d_min, double d_max) {
    for (double d : {d_min, d_max}) {
        if (!(ecap_slope(p, d) > 0.0)) {
            throw InvalidPlant("ECAP slope must stay positive over the distance range");
        }
        if (ecap_threshold_mA(p, d) < 0.0) {
            throw InvalidPlant("ECAP threshold must stay nonnegative over the distance range");
        }
    }
}

/// Noise-free ECAP amplitude (uV): k(d) * max(0, a - I_th(d)).
inline double ecap_true(double amplitude_mA, double distance_mm, const EcapPlantParams& p) {
    const double over = amplitude_mA - ecap_threshold_mA(p, distance_mm);
    if (over <= 0.0) return 0.0;
    return ecap_slope(p, distance_mm) * over;
}

/// Parametric triphasic trace (P1, N1, P2) whose N1-to-P2 span equals
/// `peak_to_trough_uV` exactly on the sample grid, preceded by a decaying
/// stimulus artefact confined to the first `blank_samples` samples.
inline std::vector<double> ecap_trace(double peak_to_trough_uV, std::size_t n_samples, std::size_t blank_samples,
                                      double artefact_uV = 0.0) {
    std::vector<double> shape(n_samples, 0.0);
    if (n_samples <= blank_samples + 4) return shape;
    const double span = static_cast<double>(n_samples - blank_samples);
    const double c1 = blank_samples + 0.15 * span;
    const double c2 = blank_samples + 0.35 * span;
    const double c3 = blank_samples + 0.60 * span;
    const double w = 0.07 * span;
    auto g = [w](double x) { return std::exp(-0.5 * (x / w) * (x / w)); };
    for (std::size_t i = blank_samples; i < n_samples; ++i) {
        const double x = static_cast<double>(i);
        shape[i] = 0.25 * g(x - c1) - 1.0 * g(x - c2) + 0.6 * g(x - c3);
    }
    const auto [mn, mx] = std::minmax_element(shape.begin() + static_cast<std::ptrdiff_t>(blank_samples), shape.end());
    const double raw = *mx - *mn;
    std::vector<double> out(n_samples, 0.0);
    for (std::size_t i = blank_samples; i < n_samples; ++i) out[i] = shape[i] / raw * peak_to_trough_uV;
    for (std::size_t i = 0; i < blank_samples; ++i) {
        out[i] = artefact_uV * std::exp(-static_cast<double>(i) / std::max<double>(1.0, blank_samples / 4.0));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Disturbances
// ---------------------------------------------------------------------------

struct PostureStep {
    double delta_mm = 0.0;
};

/// Triangular excursion: linear rise to delta_mm over rise_ticks, back to zero
/// over fall_ticks.
struct CoughTransient {
    double delta_mm = 0.0;
    std::int64_t rise_ticks = 1;
    std::int64_t fall_ticks = 1;
};

/// Multiplicative modulation 1 + amplitude * sin(2*pi*(tick - start)/period + phase).
struct CircadianSine {
    std::int64_t period_ticks = 1;
    double amplitude = 0.0;
    double phase = 0.0;
};

/// Periodic biphasic pulse (+amp then -amp, each phase cardiac_phase_s long).
struct CardiacArtifact {
    double rate_hz = 1.0;
    double amplitude_uV = 0.0;
};

inline constexpr double cardiac_phase_s = 0.02;

using DisturbanceKind = std::variant<PostureStep, CoughTransient, CircadianSine, CardiacArtifact>;

struct DisturbanceSegment {
    std::int64_t start_tick = 0;
    DisturbanceKind kind;
};

struct DisturbanceTrack {
    std::vector<DisturbanceSegment> segments; // sorted by start_tick

    [[nodiscard]] bool sorted() const {
        return std::is_sorted(segments.begin(), segments.end(),
                              [](const auto& a, const auto& b) { return a.start_tick < b.start_tick; });
    }
};

inline double cough_offset(const CoughTransient& c, std::int64_t since) {
    if (since < 0) return 0.0;
    if (since <= c.rise_ticks) return c.delta_mm * static_cast<double>(since) / static_cast<double>(c.rise_ticks);
    const std::int64_t down = since - c.rise_ticks;
    if (down >= c.fall_ticks) return 0.0;
    return c.delta_mm * (1.0 - static_cast<double>(down) / static_cast<double>(c.fall_ticks));
}

inline double distance_at(const DisturbanceTrack& track, double base_mm, std::int64_t tick) {
    double d = base_mm;
    for (const auto& seg : track.segments) {
        if (seg.start_tick > tick) break;
        if (const auto* step = std::get_if<PostureStep>(&seg.kind)) {
            d += step->delta_mm;
        } else if (const auto* cough = std::get_if<CoughTransient>(&seg.kind)) {
            d += cough_offset(*cough, tick - seg.start_tick);
        }
    }
    return d;
}

/// Exact min/max of distance_at over [0, n_ticks). The trajectory is piecewise
/// linear, so the extremes sit on segment breakpoints.
inline std::pair<double, double> distance_range(const DisturbanceTrack& track, double base_mm, std::int64_t n_ticks) {
    std::vector<std::int64_t> probes{0, std::max<std::int64_t>(0, n_ticks - 1)};
    for (const auto& seg : track.segments) {
        probes.push_back(seg.start_tick);
        if (const auto* c = std::get_if<CoughTransient>(&seg.kind)) {
            probes.push_back(seg.start_tick + c->rise_ticks);
            probes.push_back(seg.start_tick + c->rise_ticks + c->fall_ticks);
        }
    }
    double lo = base_mm;
    double hi = base_mm;
    for (auto t : probes) {
        if (t < 0 || t >= n_ticks) continue;
        const double d = distance_at(track, base_mm, t);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return {lo, hi};
}

inline double circadian_gain(const DisturbanceTrack& track, std::int64_t tick) {
    double g = 1.0;
    for (const auto& seg : track.segments) {
        if (seg.start_tick > tick) break;
        if (const auto* c = std::get_if<CircadianSine>(&seg.kind)) {
            const double x = static_cast<double>(tick - seg.start_tick) / static_cast<double>(c->period_ticks);
            g += c->amplitude * std::sin(2.0 * std::numbers::pi * x + c->phase);
        }
    }
    return std::max(0.0, g);
}

/// Sum of active cardiac pulse trains at absolute time t_s (segment starts are
/// converted with dt_s).
inline double cardiac_sample(const DisturbanceTrack& track, double t_s, double dt_s) {
    double v = 0.0;
    for (const auto& seg : track.segments) {
        const auto* c = std::get_if<CardiacArtifact>(&seg.kind);
        if (!c || c->rate_hz <= 0.0) continue;
        const double since = t_s - static_cast<double>(seg.start_tick) * dt_s;
        if (since < 0.0) continue;
        const double phase = std::fmod(since, 1.0 / c->rate_hz);
        if (phase < cardiac_phase_s) {
            v += c->amplitude_uV;
        } else if (phase < 2.0 * cardiac_phase_s) {
            v -= c->amplitude_uV;
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Beta-band LFP
// ---------------------------------------------------------------------------

struct BetaLfpConfig {
    double fs_hz = 250.0;
    std::size_t samples_per_tick = 25;
    double center_hz = 20.0;
    double noise_rms_uV = 1.0;
    BetaSuppression curve{};
    bool entrained_gamma = false;
    double gamma_uV_per_mA = 0.5;
    /// Circadian and cardiac segments; other kinds are ignored here.
    DisturbanceTrack modulation;

    [[nodiscard]] double dt_s() const { return static_cast<double>(samples_per_tick) / fs_hz; }
};

/// One tick worth of LFP samples (uV). Sample times are global, so consecutive
/// frames join without phase jumps.
inline std::vector<double> beta_lfp_frame(const Dose& dose, std::int64_t tick, const BetaLfpConfig& cfg, Rng& rng) {
    const double envelope = dose_response_mean(cfg.curve, dose.amplitude_mA) * circadian_gain(cfg.modulation, tick);
    const bool gamma_on = cfg.entrained_gamma && dose.amplitude_mA > 0.0 && dose.frequency_hz > 0.0;
    const double gamma_amp = cfg.gamma_uV_per_mA * dose.amplitude_mA;
    const double two_pi = 2.0 * std::numbers::pi;
    const double dt = cfg.dt_s();

    std::vector<double> frame(cfg.samples_per_tick);
    for (std::size_t i = 0; i < cfg.samples_per_tick; ++i) {
        const double n = static_cast<double>(tick) * static_cast<double>(cfg.samples_per_tick) + static_cast<double>(i);
        const double t = n / cfg.fs_hz;
        double x = envelope * std::sin(two_pi * cfg.center_hz * t);
        if (gamma_on) x += gamma_amp * std::sin(two_pi * (dose.frequency_hz / 2.0) * t);
        x += cardiac_sample(cfg.modulation, t, dt);
        x += rng.normal(0.0, cfg.noise_rms_uV);
        frame[i] = x;
    }
    return frame;
}

// ---------------------------------------------------------------------------
// Seizures and iEEG
// ---------------------------------------------------------------------------

struct SeizureGenConfig {
    double rate_per_hour = 0.0;
    std::int64_t base_duration_ticks = 1;
    double suppression_prob = 0.0;
    std::int64_t response_window_ticks = 1;
    /// No onsets before this tick (lets detectors calibrate).
    std::int64_t quiet_ticks = 0;
};

struct ActiveSeizure {
    std::int64_t onset_tick = 0;
    bool decided = false;
};

struct SeizureGenState {
    SeizureGenConfig cfg;
    std::optional<ActiveSeizure> current;
    std::int64_t events = 0;
    /// Events whose suppression draw has been made.
    std::int64_t decisions = 0;
    std::int64_t early_terminations = 0;
};

struct SeizureStep {
    SeizureGenState state;
    bool seizing = false;
    bool onset = false;
    bool early_terminated = false;
};

/// Advance the generator by one tick. `therapy_delivered` reports a therapy
/// delivered during the previous tick; it qualifies when it falls after the
/// onset and within the response window. Exactly two uniforms are drawn per
/// tick whatever happens, so realizations line up across policy arms.
inline SeizureStep seizure_step(SeizureGenState s, bool therapy_delivered, std::int64_t tick, double dt_s, Rng& rng) {
    const double u_onset = rng.uniform();
    const double u_suppress = rng.uniform();

    SeizureStep out;
    if (s.current) {
        auto& cur = *s.current;
        const std::int64_t since = tick - cur.onset_tick;
        if (!cur.decided && therapy_delivered && since >= 1 && since <= s.cfg.response_window_ticks) {
            cur.decided = true;
            ++s.decisions;
            if (u_suppress < s.cfg.suppression_prob) {
                s.current.reset();
                ++s.early_terminations;
                out.early_terminated = true;
                out.state = std::move(s);
                return out;
            }
        }
        if (since >= s.cfg.base_duration_ticks) {
            s.current.reset();
        } else {
            out.seizing = true;
        }
    } else if (tick >= s.cfg.quiet_ticks) {
        const double hazard = s.cfg.rate_per_hour * dt_s / 3600.0;
        if (u_onset < hazard) {
            s.current = ActiveSeizure{tick, false};
            ++s.events;
            out.seizing = true;
            out.onset = true;
        }
    }
    out.state = std::move(s);
    return out;
}

struct IeegConfig {
    double fs_hz = 256.0;
    std::size_t samples_per_tick = 64;
    double background_sd_uV = 10.0;
    double ictal_freq_hz = 12.0;
    /// Expected ictal line length as a multiple of the background mean.
    double ictal_factor = 5.0;
    /// Amplifier rails; zero disables clipping.
    double saturation_uV = 0.0;
};

/// Mean line length of a background frame: (n-1) * E|x_i - x_{i-1}| with
/// independent N(0, sd^2) samples.
inline double ieeg_background_line_length(const IeegConfig& cfg) {
    return static_cast<double>(cfg.samples_per_tick - 1) * 2.0 * cfg.background_sd_uV / std::sqrt(std::numbers::pi);
}

/// Ictal sine amplitude whose phase-averaged line length is ictal_factor times
/// the background mean.
inline double ieeg_ictal_amplitude(const IeegConfig& cfg) {
    const double per_step = (4.0 / std::numbers::pi) * std::fabs(std::sin(std::numbers::pi * cfg.ictal_freq_hz / cfg.fs_hz));
    if (per_step <= 0.0) return 0.0;
    const double target = cfg.ictal_factor * ieeg_background_line_length(cfg);
    return target / (static_cast<double>(cfg.samples_per_tick - 1) * per_step);
}

inline std::vector<double> ieeg_frame(bool seizing, std::int64_t tick, const IeegConfig& cfg, Rng& rng) {
    const double ictal_amp = seizing ? ieeg_ictal_amplitude(cfg) : 0.0;
    std::vector<double> frame(cfg.samples_per_tick);
    for (std::size_t i = 0; i < cfg.samples_per_tick; ++i) {
        double x = rng.normal(0.0, cfg.background_sd_uV);
        if (seizing) {
            const double n =
                static_cast<double>(tick) * static_cast<double>(cfg.samples_per_tick) + static_cast<double>(i);
            x += ictal_amp * std::sin(2.0 * std::numbers::pi * cfg.ictal_freq_hz * n / cfg.fs_hz);
        }
        if (cfg.saturation_uV > 0.0) x = std::clamp(x, -cfg.saturation_uV, cfg.saturation_uV);
        frame[i] = x;
    }
    return frame;
}

// ---------------------------------------------------------------------------
// Device and actuator
// ---------------------------------------------------------------------------

struct DeviceState {
    double battery_v = 3.7;
    double eos_threshold_v = 3.0;
    std::map<std::string, double> impedance_ohm;
    double compliance_v = 12.0;
    double amp_step_mA = 0.05;
    double amplifier_saturation_uV = 1000.0;
    bool dc_leak_flag = false;
    double drain_v_per_uC = 0.0;
    double impedance_ramp_ohm_per_tick = 0.0;

    [[nodiscard]] double impedance_of(const std::string& contact) const {
        const auto it = impedance_ohm.find(contact);
        if (it == impedance_ohm.end()) throw ConfigError("unknown contact set '" + contact + "'");
        return it->second;
    }
    [[nodiscard]] bool below_eos() const { return battery_v < eos_threshold_v; }
};

/// Largest multiple of `step` not above x. The small epsilon keeps exact
/// multiples (3.0 / 0.1 = 29.999...) from dropping a step.
inline double quantize_down(double x, double step) {
    if (x <= 0.0) return 0.0;
    const double k = std::floor(x / step + 1e-9);
    return k * step;
}

/// Current the stimulator can push through the contact without exceeding its
/// voltage compliance (mA).
inline double compliance_limit_mA(const DeviceState& dev, const std::string& contact) {
    return dev.compliance_v / dev.impedance_of(contact) * 1000.0;
}

/// Minor loop: quantize to the output resolution and respect voltage
/// compliance. Never raises the amplitude; idempotent.
inline Dose actuator_apply(const Dose& requested, const DeviceState& dev) {
    Dose out = requested;
    if (requested.amplitude_mA <= 0.0) {
        out.amplitude_mA = 0.0;
        return out;
    }
    const double limit = compliance_limit_mA(dev, requested.contact_set);
    const double q = quantize_down(requested.amplitude_mA, dev.amp_step_mA);
    out.amplitude_mA = quantize_down(std::min(q, limit), dev.amp_step_mA);
    return out;
}

inline DeviceState device_step(DeviceState dev, double delivered_charge_uC) {
    dev.battery_v -= dev.drain_v_per_uC * std::max(0.0, delivered_charge_uC);
    if (dev.impedance_ramp_ohm_per_tick != 0.0) {
        for (auto& [contact, z] : dev.impedance_ohm) {
            z = std::max(1e-9, z + dev.impedance_ramp_ohm_per_tick);
        }
    }
    return dev;
}

} // namespace pclc
