#pragma once

// Scenario files: the JSON schema (version 1), parsing into typed
// configuration, and the checklist validator that gates every run.

#include "pclc/control.hpp"
#include "pclc/core.hpp"
#include "pclc/features.hpp"
#include "pclc/plant.hpp"
#include "pclc/safety.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace pclc {

using nlohmann::json;

inline constexpr int scenario_schema_version = 1;

/// Malformed JSON text; carries a 1-based line and column.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(what + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
          line_(line),
          column_(column) {}
    [[nodiscard]] std::size_t line() const { return line_; }
    [[nodiscard]] std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Scenario file could not be read.
class ScenarioFileError : public Error {
public:
    using Error::Error;
};

/// Well-formed JSON that does not fit the schema. The message starts with the
/// JSON path of the offending field.
class SchemaError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Typed configuration
// ---------------------------------------------------------------------------

struct EcapPlantConfig {
    EcapPlantParams params;
    double base_distance_mm = 3.0;
    double noise_sd_uV = 0.0;
};

struct BetaPlantConfig {
    BetaLfpConfig lfp; // samples_per_tick is derived from fs and dt
};

struct IeegPlantConfig {
    IeegConfig ieeg; // samples_per_tick is derived from fs and dt
    SeizureGenConfig seizures;
};

using PlantConfig = std::variant<EcapPlantConfig, BetaPlantConfig, IeegPlantConfig>;

inline std::string_view plant_kind_name(const PlantConfig& p) {
    constexpr std::string_view names[] = {"ecap", "beta_lfp", "ieeg_seizure"};
    return names[p.index()];
}

enum class EcapEstimator : std::uint8_t { Identity, Trace };

struct EcapFeatureConfig {
    EcapEstimator estimator = EcapEstimator::Identity;
    std::size_t trace_samples = 64;
    std::size_t blank_samples = 16;
    double artefact_uV = 0.0;
    double trace_noise_uV = 0.0;
};

struct BetaFeatureConfig {
    double window_s = 1.0;
    double band_lo_hz = 13.0;
    double band_hi_hz = 30.0;
    double smoothing_s = 0.5;
};

enum class DetectorFeature : std::uint8_t { LineLength, Area, HalfWave };

inline std::string_view to_string(DetectorFeature f) {
    switch (f) {
    case DetectorFeature::LineLength: return "line_length";
    case DetectorFeature::Area: return "area";
    case DetectorFeature::HalfWave: return "half_wave";
    }
    return "?";
}

struct DetectorConfig {
    DetectorFeature feature = DetectorFeature::LineLength;
    ThresholdMode mode = AdaptiveThreshold{};
    double multiplier = 2.0;
    std::size_t long_window = 240;
    std::size_t short_window = 1;
    HalfWaveConfig half_wave{};
};

struct IeegFeatureConfig {
    std::vector<DetectorConfig> detectors;
    Combinator combinator = Combinator::Or;
};

using FeatureConfig = std::variant<EcapFeatureConfig, BetaFeatureConfig, IeegFeatureConfig>;

struct BudgetConfig {
    int max_therapies_per_event = 5;
    int max_episodes_per_day = 1000;
    double day_length_s = 86400.0;
};

struct Interventions {
    std::vector<std::pair<std::int64_t, std::int64_t>> magnet; // [start, end)
    std::vector<std::int64_t> clinician_reset_ticks;
    std::optional<std::int64_t> dc_leak_at_tick;

    [[nodiscard]] bool magnet_at(std::int64_t tick) const {
        for (const auto& [a, b] : magnet) {
            if (tick >= a && tick < b) return true;
        }
        return false;
    }
    [[nodiscard]] bool clinician_reset_at(std::int64_t tick) const {
        return std::find(clinician_reset_ticks.begin(), clinician_reset_ticks.end(), tick) !=
               clinician_reset_ticks.end();
    }
};

struct StepResponseConfig {
    std::int64_t step_tick = 0;
    std::optional<std::int64_t> end_tick;
    double tol_frac = 0.05;
    std::optional<double> setpoint;
};

struct MetricsConfig {
    std::optional<std::pair<double, double>> range;
    std::optional<StepResponseConfig> step_response;
};

struct Outputs {
    bool timeseries = true;
    bool events = true;
    bool summary = true;
};

struct Scenario {
    std::string name;
    double dt_s = 0.001;
    double duration_s = 1.0;
    std::uint64_t seed = 0;

    PlantConfig plant = EcapPlantConfig{};
    DisturbanceTrack track;
    DeviceState device;
    FeatureConfig features = EcapFeatureConfig{};
    QualityLimits quality;
    BiomarkerKind biomarker_kind = BiomarkerKind::Reactive2;

    PolicyConfig policy = ManualFixed{};
    Dose baseline_dose;
    std::optional<Dose> start_dose;
    std::optional<DoseLimits> limits;
    std::optional<TrustConfig> trust;
    std::optional<FallbackKind> fallback;
    std::optional<BudgetConfig> budgets;
    Interventions interventions;
    MetricsConfig metrics;
    std::optional<Outputs> outputs;

    /// Document this scenario was parsed from; used to write a faithful copy
    /// next to run outputs.
    json source;

    [[nodiscard]] TimeBase timebase() const { return make_timebase(dt_s, duration_s); }
    [[nodiscard]] Dose initial_dose() const { return start_dose.value_or(baseline_dose); }
};

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace detail {

inline const json& need(const json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) throw SchemaError(path + "." + key + ": required field missing");
    return j.at(key);
}

template <typename T>
T as(const json& v, const std::string& path) {
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw SchemaError(path + ": expected a number");
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!v.is_number_integer() && !v.is_number_unsigned()) throw SchemaError(path + ": expected an integer");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw SchemaError(path + ": expected true or false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw SchemaError(path + ": expected a string");
        }
        return v.get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

template <typename T>
T req(const json& j, const char* key, const std::string& path) {
    return as<T>(need(j, key, path), path + "." + key);
}

template <typename T>
T opt(const json& j, const char* key, const std::string& path, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    return as<T>(j.at(key), path + "." + key);
}

inline std::int64_t ticks_from(const json& j, const char* key_ticks, const char* key_s, const std::string& path,
                               double dt_s, std::int64_t fallback) {
    if (j.contains(key_ticks)) return req<std::int64_t>(j, key_ticks, path);
    if (j.contains(key_s)) return static_cast<std::int64_t>(std::llround(req<double>(j, key_s, path) / dt_s));
    return fallback;
}

inline Dose parse_dose(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path + ": expected a dose object");
    Dose d;
    d.amplitude_mA = req<double>(j, "amplitude_mA", path);
    d.pulse_width_us = req<double>(j, "pulse_width_us", path);
    d.frequency_hz = req<double>(j, "frequency_hz", path);
    d.contact_set = req<std::string>(j, "contact_set", path);
    return d;
}

inline json dose_json(const Dose& d) {
    return json{{"amplitude_mA", d.amplitude_mA},
                {"pulse_width_us", d.pulse_width_us},
                {"frequency_hz", d.frequency_hz},
                {"contact_set", d.contact_set}};
}

inline DisturbanceTrack parse_track(const json& arr, const std::string& path, double dt_s) {
    DisturbanceTrack t;
    if (arr.is_null()) return t;
    if (!arr.is_array()) throw SchemaError(path + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& s = arr[i];
        const std::string p = path + "[" + std::to_string(i) + "]";
        DisturbanceSegment seg;
        seg.start_tick = ticks_from(s, "start_tick", "start_s", p, dt_s, 0);
        const auto kind = req<std::string>(s, "kind", p);
        if (kind == "posture_step") {
            seg.kind = PostureStep{req<double>(s, "delta_mm", p)};
        } else if (kind == "cough") {
            seg.kind = CoughTransient{req<double>(s, "delta_mm", p), req<std::int64_t>(s, "rise_ticks", p),
                                      req<std::int64_t>(s, "fall_ticks", p)};
        } else if (kind == "circadian") {
            seg.kind = CircadianSine{ticks_from(s, "period_ticks", "period_s", p, dt_s, 0), req<double>(s, "amplitude", p),
                                     opt<double>(s, "phase", p, 0.0)};
        } else if (kind == "cardiac") {
            seg.kind = CardiacArtifact{req<double>(s, "rate_hz", p), req<double>(s, "amplitude_uV", p)};
        } else {
            throw SchemaError(p + ".kind: unknown disturbance '" + kind + "'");
        }
        t.segments.push_back(seg);
    }
    return t;
}

inline DeviceState parse_device(const json& j, const std::string& path) {
    DeviceState d;
    d.battery_v = req<double>(j, "battery_v", path);
    d.eos_threshold_v = req<double>(j, "eos_threshold_v", path);
    d.compliance_v = req<double>(j, "compliance_v", path);
    d.amp_step_mA = req<double>(j, "amp_step_mA", path);
    d.amplifier_saturation_uV = opt<double>(j, "amplifier_saturation_uV", path, 1000.0);
    d.drain_v_per_uC = opt<double>(j, "drain_v_per_uC", path, 0.0);
    d.impedance_ramp_ohm_per_tick = opt<double>(j, "impedance_ramp_ohm_per_tick", path, 0.0);
    const auto& z = need(j, "impedance_ohm", path);
    if (!z.is_object()) throw SchemaError(path + ".impedance_ohm: expected an object of contact -> ohms");
    for (const auto& [k, v] : z.items()) d.impedance_ohm[k] = as<double>(v, path + ".impedance_ohm." + k);
    return d;
}

inline PolicyConfig parse_policy(const json& j, const std::string& path) {
    const auto kind = req<std::string>(j, "kind", path);
    if (kind == "manual_fixed") return ManualFixed{parse_dose(need(j, "dose", path), path + ".dose")};
    if (kind == "bang_bang_responsive") {
        BangBangResponsive b;
        b.burst_dose = parse_dose(need(j, "burst_dose", path), path + ".burst_dose");
        b.bursts_per_therapy = req<int>(j, "bursts_per_therapy", path);
        b.burst_duration_ticks = opt<std::int64_t>(j, "burst_duration_ticks", path, 1);
        b.max_therapies_per_event = opt<int>(j, "max_therapies_per_event", path, 5);
        return b;
    }
    if (kind == "single_threshold") {
        return SingleThreshold{req<double>(j, "threshold", path), req<double>(j, "step_mA", path),
                               opt<bool>(j, "on_above", path, true)};
    }
    if (kind == "dual_threshold") {
        return DualThreshold{req<double>(j, "lower", path), req<double>(j, "upper", path),
                             req<double>(j, "step_up_mA", path), req<double>(j, "step_down_mA", path)};
    }
    if (kind == "proportional") {
        return Proportional{req<double>(j, "reference", path), req<double>(j, "gain_mA_per_unit", path),
                            parse_dose(need(j, "base_dose", path), path + ".base_dose")};
    }
    if (kind == "ecap_setpoint") {
        return EcapSetpoint{req<double>(j, "target_uV", path), req<double>(j, "gain_mA_per_uV", path),
                            opt<double>(j, "deadband_uV", path, 0.0)};
    }
    throw SchemaError(path + ".kind: unknown policy '" + kind + "'");
}

inline FallbackKind parse_fallback(const json& j, const std::string& path) {
    const auto kind = req<std::string>(j, "kind", path);
    if (kind == "off") return FallbackOff{};
    if (kind == "fixed_safe") return FixedSafe{parse_dose(need(j, "dose", path), path + ".dose")};
    if (kind == "last_known_good") return LastKnownGood{};
    if (kind == "manual_loop") return ManualLoop{parse_dose(need(j, "dose", path), path + ".dose")};
    throw SchemaError(path + ".kind: unknown fallback '" + kind + "'");
}

inline TrustConfig parse_trust(const json& j, const std::string& path) {
    TrustConfig t;
    const auto& checks = need(j, "checks", path);
    if (!checks.is_array()) throw SchemaError(path + ".checks: expected an array of check names");
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const auto name = as<std::string>(checks[i], path + ".checks[" + std::to_string(i) + "]");
        const auto c = trust_check_from_string(name);
        if (!c) throw SchemaError(path + ".checks[" + std::to_string(i) + "]: unknown trust check '" + name + "'");
        t.checks.add(*c);
    }
    t.exit_after_consecutive_fails = req<int>(j, "exit_after_consecutive_fails", path);
    t.reenter_after_consecutive_passes = req<int>(j, "reenter_after_consecutive_passes", path);
    if (j.contains("impedance_range_ohm")) {
        const auto& r = j.at("impedance_range_ohm");
        t.impedance_min_ohm = as<double>(r.at(0), path + ".impedance_range_ohm[0]");
        t.impedance_max_ohm = as<double>(r.at(1), path + ".impedance_range_ohm[1]");
    }
    if (j.contains("phys_range")) {
        const auto& r = j.at("phys_range");
        t.phys_min = as<double>(r.at(0), path + ".phys_range[0]");
        t.phys_max = as<double>(r.at(1), path + ".phys_range[1]");
    }
    return t;
}

inline DetectorConfig parse_detector(const json& j, const std::string& path) {
    DetectorConfig d;
    const auto feature = req<std::string>(j, "feature", path);
    if (feature == "line_length") {
        d.feature = DetectorFeature::LineLength;
    } else if (feature == "area") {
        d.feature = DetectorFeature::Area;
    } else if (feature == "half_wave") {
        d.feature = DetectorFeature::HalfWave;
        const auto& hw = need(j, "half_wave", path);
        const std::string hp = path + ".half_wave";
        d.half_wave.min_amplitude_uV = req<double>(hw, "min_amplitude_uV", hp);
        d.half_wave.min_duration_samples = req<std::int64_t>(hw, "min_duration_samples", hp);
        d.half_wave.max_duration_samples = req<std::int64_t>(hw, "max_duration_samples", hp);
        d.half_wave.hysteresis_uV = opt<double>(hw, "hysteresis_uV", hp, 0.0);
    } else {
        throw SchemaError(path + ".feature: unknown detector feature '" + feature + "'");
    }
    const auto& th = need(j, "threshold", path);
    const std::string tp = path + ".threshold";
    const auto mode = req<std::string>(th, "mode", tp);
    if (mode == "fixed") {
        d.mode = FixedThreshold{req<double>(th, "value", tp)};
    } else if (mode == "adaptive") {
        d.mode = AdaptiveThreshold{};
        d.multiplier = opt<double>(th, "multiplier", tp, 2.0);
    } else {
        throw SchemaError(tp + ".mode: expected 'fixed' or 'adaptive'");
    }
    d.long_window = opt<std::size_t>(th, "long_window", tp, 240);
    d.short_window = opt<std::size_t>(th, "short_window", tp, 1);
    return d;
}

inline QualityLimits parse_quality(const json& j, const std::string& path, double saturation_default) {
    QualityLimits q;
    q.saturation_uV = opt<double>(j, "saturation_uV", path, saturation_default);
    q.flatline_eps = opt<double>(j, "flatline_eps", path, 1e-9);
    q.max_delta_uV = opt<double>(j, "max_delta_uV", path, 1e9);
    return q;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

inline json parse_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError("invalid JSON", line, col);
    }
}

inline Scenario scenario_from_json(const json& root) {
    using namespace detail;
    const std::string r = "$";
    if (!root.is_object()) throw SchemaError("$: scenario must be a JSON object");
    const int schema = req<int>(root, "schema", r);
    if (schema != scenario_schema_version) {
        throw SchemaError("$.schema: unsupported schema version " + std::to_string(schema));
    }

    Scenario s;
    s.source = root;
    s.name = req<std::string>(root, "name", r);
    s.seed = req<std::uint64_t>(root, "seed", r);
    const auto& tb = need(root, "timebase", r);
    s.dt_s = req<double>(tb, "dt_s", "$.timebase");
    s.duration_s = req<double>(tb, "duration_s", "$.timebase");

    const auto& plant = need(root, "plant", r);
    const std::string pp = "$.plant";
    const auto kind = req<std::string>(plant, "kind", pp);
    s.device = parse_device(need(plant, "device", pp), pp + ".device");
    s.track = parse_track(plant.value("track", json()), pp + ".track", s.dt_s);
    const double fs_default = 250.0;
    if (kind == "ecap") {
        const auto& e = need(plant, "ecap", pp);
        const std::string ep = pp + ".ecap";
        EcapPlantConfig c;
        c.params.slope_uV_per_mA_at_ref = req<double>(e, "slope_uV_per_mA_at_ref", ep);
        c.params.threshold_mA_at_ref = req<double>(e, "threshold_mA_at_ref", ep);
        c.params.distance_ref_mm = req<double>(e, "distance_ref_mm", ep);
        c.params.threshold_distance_coeff = opt<double>(e, "threshold_distance_coeff", ep, 0.0);
        c.params.slope_distance_coeff = opt<double>(e, "slope_distance_coeff", ep, 0.0);
        c.base_distance_mm = opt<double>(e, "base_distance_mm", ep, c.params.distance_ref_mm);
        c.noise_sd_uV = opt<double>(e, "noise_sd_uV", ep, 0.0);
        s.plant = c;
        s.biomarker_kind = BiomarkerKind::Reactive2;
    } else if (kind == "beta_lfp") {
        const auto& b = need(plant, "beta", pp);
        const std::string bp = pp + ".beta";
        BetaPlantConfig c;
        c.lfp.fs_hz = opt<double>(b, "fs_hz", bp, fs_default);
        c.lfp.center_hz = opt<double>(b, "center_hz", bp, 20.0);
        c.lfp.noise_rms_uV = opt<double>(b, "noise_rms_uV", bp, 1.0);
        const auto& curve = need(b, "curve", bp);
        const std::string cp = bp + ".curve";
        c.lfp.curve = BetaSuppression{req<double>(curve, "baseline", cp), req<double>(curve, "max_suppression_fraction", cp),
                                      req<double>(curve, "knee_mA", cp), req<double>(curve, "softness_mA", cp)};
        c.lfp.entrained_gamma = opt<bool>(b, "entrained_gamma", bp, false);
        c.lfp.gamma_uV_per_mA = opt<double>(b, "gamma_uV_per_mA", bp, 0.5);
        s.plant = c;
        s.biomarker_kind = BiomarkerKind::Reactive2;
    } else if (kind == "ieeg_seizure") {
        const auto& ie = need(plant, "ieeg", pp);
        const std::string ip = pp + ".ieeg";
        IeegPlantConfig c;
        c.ieeg.fs_hz = opt<double>(ie, "fs_hz", ip, 256.0);
        c.ieeg.background_sd_uV = req<double>(ie, "background_sd_uV", ip);
        c.ieeg.ictal_freq_hz = req<double>(ie, "ictal_freq_hz", ip);
        c.ieeg.ictal_factor = req<double>(ie, "ictal_factor", ip);
        c.ieeg.saturation_uV = opt<double>(ie, "saturation_uV", ip, 0.0);
        const auto& sz = need(plant, "seizures", pp);
        const std::string sp = pp + ".seizures";
        c.seizures.rate_per_hour = req<double>(sz, "rate_per_hour", sp);
        c.seizures.base_duration_ticks = req<std::int64_t>(sz, "base_duration_ticks", sp);
        c.seizures.suppression_prob = req<double>(sz, "suppression_prob", sp);
        c.seizures.response_window_ticks = req<std::int64_t>(sz, "response_window_ticks", sp);
        c.seizures.quiet_ticks = opt<std::int64_t>(sz, "quiet_ticks", sp, 0);
        s.plant = c;
        s.biomarker_kind = BiomarkerKind::Reactive1;
    } else {
        throw SchemaError(pp + ".kind: unknown plant '" + kind + "'");
    }

    const auto& f = need(root, "features", r);
    const std::string fp = "$.features";
    const auto fkind = req<std::string>(f, "kind", fp);
    if (fkind == "ecap") {
        EcapFeatureConfig c;
        const auto est = opt<std::string>(f, "estimator", fp, "identity");
        if (est == "identity") {
            c.estimator = EcapEstimator::Identity;
        } else if (est == "trace") {
            c.estimator = EcapEstimator::Trace;
        } else {
            throw SchemaError(fp + ".estimator: expected 'identity' or 'trace'");
        }
        c.trace_samples = opt<std::size_t>(f, "trace_samples", fp, 64);
        c.blank_samples = opt<std::size_t>(f, "blank_samples", fp, 16);
        c.artefact_uV = opt<double>(f, "artefact_uV", fp, 0.0);
        c.trace_noise_uV = opt<double>(f, "trace_noise_uV", fp, 0.0);
        s.features = c;
    } else if (fkind == "beta_band") {
        BetaFeatureConfig c;
        c.window_s = opt<double>(f, "window_s", fp, 1.0);
        if (f.contains("band_hz")) {
            c.band_lo_hz = detail::as<double>(f.at("band_hz").at(0), fp + ".band_hz[0]");
            c.band_hi_hz = detail::as<double>(f.at("band_hz").at(1), fp + ".band_hz[1]");
        }
        c.smoothing_s = opt<double>(f, "smoothing_s", fp, 0.5);
        s.features = c;
    } else if (fkind == "ieeg_detectors") {
        IeegFeatureConfig c;
        const auto& dets = need(f, "detectors", fp);
        if (!dets.is_array()) throw SchemaError(fp + ".detectors: expected an array");
        for (std::size_t i = 0; i < dets.size(); ++i) {
            c.detectors.push_back(parse_detector(dets[i], fp + ".detectors[" + std::to_string(i) + "]"));
        }
        const auto comb = opt<std::string>(f, "combinator", fp, "OR");
        if (comb == "OR") {
            c.combinator = Combinator::Or;
        } else if (comb == "AND") {
            c.combinator = Combinator::And;
        } else {
            throw SchemaError(fp + ".combinator: expected 'AND' or 'OR'");
        }
        s.features = c;
    } else {
        throw SchemaError(fp + ".kind: unknown feature set '" + fkind + "'");
    }
    s.quality = parse_quality(f.value("quality", json::object()), fp + ".quality", s.device.amplifier_saturation_uV);
    if (f.contains("biomarker_kind")) {
        const auto k = biomarker_kind_from_string(req<std::string>(f, "biomarker_kind", fp));
        if (!k) throw SchemaError(fp + ".biomarker_kind: unknown kind");
        s.biomarker_kind = *k;
    }

    s.policy = parse_policy(need(root, "policy", r), "$.policy");
    s.baseline_dose = parse_dose(need(root, "baseline_dose", r), "$.baseline_dose");
    if (root.contains("start_dose")) s.start_dose = parse_dose(root.at("start_dose"), "$.start_dose");

    if (root.contains("limits")) {
        const auto& l = root.at("limits");
        const std::string lp = "$.limits";
        s.limits = DoseLimits{req<double>(l, "amp_min_mA", lp), req<double>(l, "amp_max_mA", lp),
                              req<double>(l, "max_slew_mA_per_tick", lp), req<double>(l, "max_charge_per_pulse_uC", lp)};
    }
    if (root.contains("trust")) s.trust = parse_trust(root.at("trust"), "$.trust");
    if (root.contains("fallback")) s.fallback = parse_fallback(root.at("fallback"), "$.fallback");
    if (root.contains("budgets")) {
        const auto& b = root.at("budgets");
        const std::string bp = "$.budgets";
        BudgetConfig c;
        c.max_therapies_per_event = opt<int>(b, "max_therapies_per_event", bp, 5);
        c.max_episodes_per_day = req<int>(b, "max_episodes_per_day", bp);
        c.day_length_s = opt<double>(b, "day_length_s", bp, 86400.0);
        s.budgets = c;
    }
    if (root.contains("interventions")) {
        const auto& iv = root.at("interventions");
        const std::string ip = "$.interventions";
        if (iv.contains("magnet")) {
            for (std::size_t i = 0; i < iv.at("magnet").size(); ++i) {
                const auto& m = iv.at("magnet")[i];
                const std::string mp = ip + ".magnet[" + std::to_string(i) + "]";
                s.interventions.magnet.emplace_back(as<std::int64_t>(m.at(0), mp + "[0]"),
                                                    as<std::int64_t>(m.at(1), mp + "[1]"));
            }
        }
        if (iv.contains("clinician_reset_ticks")) {
            for (std::size_t i = 0; i < iv.at("clinician_reset_ticks").size(); ++i) {
                s.interventions.clinician_reset_ticks.push_back(as<std::int64_t>(
                    iv.at("clinician_reset_ticks")[i], ip + ".clinician_reset_ticks[" + std::to_string(i) + "]"));
            }
        }
        if (iv.contains("dc_leak_at_tick") && !iv.at("dc_leak_at_tick").is_null()) {
            s.interventions.dc_leak_at_tick = req<std::int64_t>(iv, "dc_leak_at_tick", ip);
        }
    }
    if (root.contains("metrics")) {
        const auto& m = root.at("metrics");
        const std::string mp = "$.metrics";
        if (m.contains("range")) {
            s.metrics.range = std::make_pair(as<double>(m.at("range").at(0), mp + ".range[0]"),
                                             as<double>(m.at("range").at(1), mp + ".range[1]"));
        }
        if (m.contains("step_response")) {
            const auto& sr = m.at("step_response");
            const std::string sp = mp + ".step_response";
            StepResponseConfig c;
            c.step_tick = req<std::int64_t>(sr, "step_tick", sp);
            if (sr.contains("end_tick")) c.end_tick = req<std::int64_t>(sr, "end_tick", sp);
            c.tol_frac = opt<double>(sr, "tol_frac", sp, 0.05);
            if (sr.contains("setpoint")) c.setpoint = req<double>(sr, "setpoint", sp);
            s.metrics.step_response = c;
        }
    }
    if (root.contains("outputs")) {
        const auto& o = root.at("outputs");
        s.outputs = Outputs{opt<bool>(o, "timeseries", "$.outputs", true), opt<bool>(o, "events", "$.outputs", true),
                            opt<bool>(o, "summary", "$.outputs", true)};
    }
    return s;
}

inline Scenario parse_scenario_text(const std::string& text) { return scenario_from_json(parse_json_text(text)); }

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioFileError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

/// Copy of `s` with a different seed; the stored source document follows.
inline Scenario with_seed(Scenario s, std::uint64_t seed) {
    s.seed = seed;
    s.source["seed"] = seed;
    return s;
}

/// Copy of `s` driven open-loop at `dose`.
inline Scenario with_manual_policy(Scenario s, const Dose& dose) {
    s.policy = ManualFixed{dose};
    s.source["policy"] = json{{"kind", "manual_fixed"}, {"dose", detail::dose_json(dose)}};
    return s;
}

// ---------------------------------------------------------------------------
// Validation against the design checklist
// ---------------------------------------------------------------------------

namespace checklist {
inline constexpr const char* variables = "Identify feedback, feedforward, auxiliary variables";
inline constexpr const char* mental_model = "Define mental model";
inline constexpr const char* sensor = "Sensor design accounts for physiological variation and artifacts";
inline constexpr const char* limits = "Stimulation actuator limits";
inline constexpr const char* device_state = "Device state";
inline constexpr const char* fallback = "Fallback modes";
inline constexpr const char* validation = "Validation and testing that captures expected variance and real-world conditions";
} // namespace checklist

struct Finding {
    std::string item;
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    std::vector<Finding> findings;

    void add(const char* item, std::string msg) {
        ok = false;
        findings.push_back({item, std::move(msg)});
    }
    [[nodiscard]] bool has_item(std::string_view item) const {
        return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.item == item; });
    }
};

namespace detail {

inline bool is_multiple(double x, double step) {
    if (step <= 0.0) return false;
    const double k = x / step;
    return std::fabs(k - std::round(k)) < 1e-6;
}

/// Largest per-tick sample frame the engine will synthesize.
inline constexpr std::size_t max_samples_per_tick = 100000;

/// Integral samples per tick, or 0 if fs * dt is not (close to) a whole number.
inline std::size_t whole_samples(double fs, double dt) {
    const double n = fs * dt;
    if (!(n >= 1.0) || std::fabs(n - std::round(n)) > 1e-6) return 0;
    return static_cast<std::size_t>(std::llround(n));
}

/// Every dose the scenario may ask the actuator for, with a label.
inline std::vector<std::pair<std::string, Dose>> scenario_doses(const Scenario& s) {
    std::vector<std::pair<std::string, Dose>> out{{"baseline_dose", s.baseline_dose}};
    if (s.start_dose) out.emplace_back("start_dose", *s.start_dose);
    if (const auto* m = std::get_if<ManualFixed>(&s.policy)) out.emplace_back("policy.dose", m->dose);
    if (const auto* b = std::get_if<BangBangResponsive>(&s.policy)) out.emplace_back("policy.burst_dose", b->burst_dose);
    if (const auto* p = std::get_if<Proportional>(&s.policy)) out.emplace_back("policy.base_dose", p->base_dose);
    if (s.fallback) {
        if (const auto* f = std::get_if<FixedSafe>(&*s.fallback)) out.emplace_back("fallback.dose", f->dose);
        if (const auto* f = std::get_if<ManualLoop>(&*s.fallback)) out.emplace_back("fallback.dose", f->dose);
    }
    return out;
}

} // namespace detail

inline ValidationReport validate_scenario(const Scenario& s) {
    using namespace checklist;
    ValidationReport rep;

    // Run length and bookkeeping.
    std::optional<TimeBase> tb;
    try {
        tb = s.timebase();
    } catch (const InvalidTimebase& e) {
        rep.add(validation, std::string("timebase: ") + e.what());
    }
    const std::int64_t n_ticks = tb ? tb->n_ticks : 0;

    // Variables: the policy's input must be something the plant produces.
    const bool ecap_plant = std::holds_alternative<EcapPlantConfig>(s.plant);
    const bool beta_plant = std::holds_alternative<BetaPlantConfig>(s.plant);
    const bool ieeg_plant = std::holds_alternative<IeegPlantConfig>(s.plant);
    if (s.features.index() != s.plant.index()) {
        rep.add(variables, "feature set does not match plant kind '" + std::string(plant_kind_name(s.plant)) + "'");
    }
    if (std::holds_alternative<EcapSetpoint>(s.policy) && !ecap_plant) {
        rep.add(variables, "ecap_setpoint policy needs an ECAP plant");
    }
    if (std::holds_alternative<BangBangResponsive>(s.policy) && !ieeg_plant) {
        rep.add(variables, "bang_bang_responsive policy needs detection flags from an iEEG plant");
    }
    if ((std::holds_alternative<SingleThreshold>(s.policy) || std::holds_alternative<DualThreshold>(s.policy) ||
         std::holds_alternative<Proportional>(s.policy)) &&
        ieeg_plant) {
        rep.add(variables, std::string(policy_name(s.policy)) + " policy needs a scalar biomarker (ECAP or beta plant)");
    }

    // Mental model: policy parameters and plant operating range.
    if (const auto problem = policy_config_problem(s.policy); !problem.empty()) {
        rep.add(mental_model, std::string(problem));
    }
    if (!s.track.sorted()) rep.add(mental_model, "disturbance segments must be sorted by start tick");
    for (const auto& seg : s.track.segments) {
        if (seg.start_tick < 0) rep.add(mental_model, "disturbance segment starts before tick 0");
        if (const auto* c = std::get_if<CoughTransient>(&seg.kind); c && (c->rise_ticks < 1 || c->fall_ticks < 1)) {
            rep.add(mental_model, "cough rise and fall must be at least one tick");
        }
        if (const auto* c = std::get_if<CircadianSine>(&seg.kind); c && c->period_ticks < 1) {
            rep.add(mental_model, "circadian period must be at least one tick");
        }
        if (const auto* c = std::get_if<CardiacArtifact>(&seg.kind); c && !(c->rate_hz > 0.0)) {
            rep.add(mental_model, "cardiac rate must be positive");
        }
    }
    if (const auto* e = std::get_if<EcapPlantConfig>(&s.plant)) {
        const auto [d_lo, d_hi] = distance_range(s.track, e->base_distance_mm, std::max<std::int64_t>(1, n_ticks));
        try {
            check_ecap_params(e->params, d_lo, d_hi);
            if (e->noise_sd_uV < 0.0) rep.add(mental_model, "ECAP noise must be nonnegative");
            if (const auto* sp = std::get_if<EcapSetpoint>(&s.policy); sp && s.limits) {
                for (double d : {d_lo, d_hi}) {
                    const double k = ecap_slope(e->params, d);
                    const double need_mA = ecap_threshold_mA(e->params, d) + sp->target_uV / k;
                    if (need_mA > s.limits->amp_max_mA) {
                        rep.add(mental_model, "ECAP target unreachable within amp_max at distance " + std::to_string(d) + " mm");
                    }
                    const double loop_gain = sp->gain_mA_per_uV * k;
                    if (!(loop_gain > 0.0 && loop_gain < 2.0)) {
                        rep.add(mental_model, "ECAP loop gain outside (0, 2) at distance " + std::to_string(d) + " mm");
                    }
                }
            }
        } catch (const InvalidPlant& ex) {
            rep.add(mental_model, ex.what());
        }
    }
    if (const auto* b = std::get_if<BetaPlantConfig>(&s.plant)) {
        const auto& c = b->lfp.curve;
        if (!(c.baseline > 0.0) || c.max_suppression_fraction < 0.0 || c.max_suppression_fraction > 1.0 ||
            !(c.softness_mA > 0.0)) {
            rep.add(mental_model, "beta suppression curve needs baseline > 0, fraction in [0,1], softness > 0");
        }
    }
    if (const auto* i = std::get_if<IeegPlantConfig>(&s.plant)) {
        const auto& z = i->seizures;
        if (z.rate_per_hour < 0.0 || z.base_duration_ticks < 1 || z.response_window_ticks < 1 ||
            z.suppression_prob < 0.0 || z.suppression_prob > 1.0 || z.quiet_ticks < 0) {
            rep.add(mental_model, "seizure generator parameters out of range");
        }
        if (!(i->ieeg.ictal_factor >= 3.0)) rep.add(mental_model, "ictal factor must be at least 3");
    }

    // Sensor design.
    if (!(s.quality.saturation_uV > 0.0) || s.quality.flatline_eps < 0.0 || !(s.quality.max_delta_uV > 0.0)) {
        rep.add(sensor, "quality limits need saturation > 0, flatline_eps >= 0, max_delta > 0");
    }
    if (const auto* b = std::get_if<BetaPlantConfig>(&s.plant)) {
        const std::size_t spt = detail::whole_samples(b->lfp.fs_hz, s.dt_s);
        if (spt == 0) rep.add(sensor, "beta sampling rate times dt must be a whole number of samples");
        if (spt > detail::max_samples_per_tick) rep.add(sensor, "beta frame exceeds the per-tick sample limit");
        if (b->lfp.noise_rms_uV < 0.0) rep.add(sensor, "beta noise must be nonnegative");
        if (const auto* f = std::get_if<BetaFeatureConfig>(&s.features)) {
            const double fs = b->lfp.fs_hz;
            if (!(f->band_lo_hz > 0.0 && f->band_lo_hz < f->band_hi_hz && f->band_hi_hz <= fs / 2.0)) {
                rep.add(sensor, "beta band must satisfy 0 < lo < hi <= fs/2");
            } else if (f->window_s * fs + 1e-9 < fs / f->band_lo_hz) {
                rep.add(sensor, "band-power window shorter than one period of the band's lower edge");
            }
            if (spt > 0 && (f->window_s + 1e-12 < s.dt_s || f->smoothing_s + 1e-12 < s.dt_s)) {
                rep.add(sensor, "band-power window and smoothing must span at least one tick");
            }
            if (f->window_s > s.duration_s || f->smoothing_s > s.duration_s) {
                rep.add(sensor, "band-power window and smoothing must fit inside the run");
            }
        }
    }
    if (const auto* i = std::get_if<IeegPlantConfig>(&s.plant)) {
        const std::size_t spt = detail::whole_samples(i->ieeg.fs_hz, s.dt_s);
        if (spt < 3) rep.add(sensor, "iEEG frame must hold a whole number (>= 3) of samples per tick");
        if (spt > detail::max_samples_per_tick) rep.add(sensor, "iEEG frame exceeds the per-tick sample limit");
        if (i->ieeg.background_sd_uV < 0.0) rep.add(sensor, "iEEG background sd must be nonnegative");
        if (!(i->ieeg.ictal_freq_hz > 0.0 && i->ieeg.ictal_freq_hz < i->ieeg.fs_hz / 2.0)) {
            rep.add(sensor, "ictal frequency must lie below Nyquist");
        }
        if (const auto* f = std::get_if<IeegFeatureConfig>(&s.features)) {
            if (f->detectors.empty()) rep.add(sensor, "at least one detector is required");
            for (const auto& d : f->detectors) {
                if (d.long_window < 1 || d.short_window < 1) rep.add(sensor, "detector windows must be nonempty");
                if (static_cast<double>(std::max(d.long_window, d.short_window)) * s.dt_s > s.duration_s) {
                    rep.add(sensor, "detector windows must fit inside the run");
                }
                if (std::holds_alternative<AdaptiveThreshold>(d.mode) &&
                    (d.long_window <= d.short_window || !(d.multiplier > 0.0))) {
                    rep.add(sensor, "adaptive detector needs long_window > short_window and multiplier > 0");
                }
                if (d.feature == DetectorFeature::HalfWave && !d.half_wave.valid()) {
                    rep.add(sensor, "half-wave configuration invalid");
                }
            }
        }
    }
    if (const auto* f = std::get_if<EcapFeatureConfig>(&s.features); f && f->estimator == EcapEstimator::Trace) {
        if (f->trace_samples <= f->blank_samples + 4) rep.add(sensor, "ECAP trace must extend past the blanking window");
        if (f->trace_samples > detail::max_samples_per_tick) rep.add(sensor, "ECAP trace exceeds the per-tick sample limit");
    }

    // Actuator limits.
    if (!s.limits) {
        rep.add(limits, "no actuator limits block");
    } else {
        const auto& L = *s.limits;
        if (!L.ordered()) rep.add(limits, "need 0 <= amp_min_mA <= amp_max_mA");
        if (!(L.max_slew_mA_per_tick > 0.0)) rep.add(limits, "max_slew_mA_per_tick must be positive");
        if (!(L.max_charge_per_pulse_uC > 0.0)) rep.add(limits, "max_charge_per_pulse_uC must be positive");
        const double step = s.device.amp_step_mA;
        if (step > 0.0 && (!detail::is_multiple(L.amp_min_mA, step) || !detail::is_multiple(L.amp_max_mA, step) ||
                           !detail::is_multiple(L.max_slew_mA_per_tick, step))) {
            rep.add(limits, "amp_min, amp_max and slew must be multiples of the output step");
        }
        if (L.amp_min_mA * s.baseline_dose.pulse_width_us * 1e-3 > L.max_charge_per_pulse_uC) {
            rep.add(limits, "amp_min already exceeds the charge limit");
        }
        std::set<double> widths;
        for (const auto& [label, d] : detail::scenario_doses(s)) {
            if (!d.valid()) rep.add(limits, label + " has a negative or non-finite field");
            if (d.amplitude_mA > L.amp_max_mA || (d.amplitude_mA < L.amp_min_mA && d.amplitude_mA > 0.0)) {
                rep.add(limits, label + " amplitude outside [amp_min, amp_max]");
            }
            if (charge_per_pulse(d) > L.max_charge_per_pulse_uC) rep.add(limits, label + " exceeds the charge limit");
            widths.insert(d.pulse_width_us);
        }
        if (widths.size() > 1 && L.amp_max_mA * *widths.rbegin() * 1e-3 > L.max_charge_per_pulse_uC) {
            rep.add(limits, "mixed pulse widths require amp_max to respect the charge limit at the widest pulse");
        }
        if (const auto* b = std::get_if<BangBangResponsive>(&s.policy)) {
            if (L.amp_min_mA != 0.0) rep.add(limits, "on/off stimulation needs amp_min_mA = 0");
            if (L.max_slew_mA_per_tick + 1e-12 < b->burst_dose.amplitude_mA) {
                rep.add(limits, "slew limit must allow switching the burst on and off in one tick");
            }
        }
        if (L.amp_min_mA > 0.0 && s.fallback && std::holds_alternative<FallbackOff>(*s.fallback)) {
            rep.add(limits, "an Off fallback needs amp_min_mA = 0");
        }
        // Compliance must not bind inside the limit window over the run.
        double z_max = 0.0;
        for (const auto& [c, z] : s.device.impedance_ohm) z_max = std::max(z_max, z);
        z_max += std::max(0.0, s.device.impedance_ramp_ohm_per_tick) * static_cast<double>(n_ticks);
        if (z_max > 0.0 && s.device.compliance_v / z_max * 1000.0 + 1e-9 < L.amp_max_mA) {
            rep.add(limits, "voltage compliance cannot drive amp_max through the highest impedance of the run");
        }
    }

    // Device state and monitoring.
    if (!(s.device.amp_step_mA > 0.0)) rep.add(device_state, "amp_step_mA must be positive");
    if (s.device.drain_v_per_uC < 0.0) rep.add(device_state, "battery drain must be nonnegative");
    if (s.device.impedance_ohm.empty()) rep.add(device_state, "no contact impedances declared");
    for (const auto& [c, z] : s.device.impedance_ohm) {
        if (!(z > 0.0)) rep.add(device_state, "impedance of contact '" + c + "' must be positive");
    }
    for (const auto& [label, d] : detail::scenario_doses(s)) {
        if (!s.device.impedance_ohm.contains(d.contact_set)) {
            rep.add(device_state, label + " uses undeclared contact set '" + d.contact_set + "'");
        }
    }
    if (!s.outputs) {
        rep.add(device_state, "no outputs block: monitoring and logging must be declared");
    } else if (!s.outputs->events || !s.outputs->summary) {
        rep.add(device_state, "event log and summary outputs must be enabled");
    }
    for (const auto& [a, b] : s.interventions.magnet) {
        if (!(a < b) || a < 0) rep.add(device_state, "magnet interval must satisfy 0 <= start < end");
    }

    // Fallback.
    if (!s.fallback) rep.add(fallback, "no fallback mode defined");
    if (!s.trust) {
        rep.add(fallback, "no trust checks: fallback entrance/exit criteria undefined");
    } else {
        if (s.trust->exit_after_consecutive_fails < 1 || s.trust->reenter_after_consecutive_passes < 1) {
            rep.add(fallback, "exit and entrance dwell counts must be at least 1");
        }
        if (s.trust->checks.empty()) rep.add(fallback, "trust check list is empty");
        if (s.trust->checks.has(TrustCheck::EcapNonNegative) && !ecap_plant) {
            rep.add(fallback, "EcapNonNegative check needs an ECAP plant");
        }
    }
    if (std::holds_alternative<BangBangResponsive>(s.policy) && s.budgets) {
        if (s.budgets->max_episodes_per_day < 1 || s.budgets->max_therapies_per_event < 1 ||
            !(s.budgets->day_length_s >= s.dt_s)) {
            rep.add(fallback, "therapy/episode budgets out of range");
        }
    }

    // Metrics requested must fit the run.
    if (s.metrics.range && !(s.metrics.range->first < s.metrics.range->second)) {
        rep.add(validation, "metrics range must satisfy lo < hi");
    }
    if (const auto& sr = s.metrics.step_response) {
        if (sr->step_tick < 0 || sr->step_tick >= n_ticks || (sr->end_tick && (*sr->end_tick <= sr->step_tick || *sr->end_tick > n_ticks))) {
            rep.add(validation, "step-response window must lie inside the run");
        }
        if (!(sr->tol_frac > 0.0)) rep.add(validation, "settling tolerance must be positive");
    }
    (void)beta_plant;
    return rep;
}

} // namespace pclc
