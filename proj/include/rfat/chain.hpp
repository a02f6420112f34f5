#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "rfat/butterworth.hpp"
#include "rfat/signal.hpp"

namespace rfat {

/// Closed interval of legal values for a tunable or scenario quantity.
struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
    double mid() const { return 0.5 * (lo + hi); }
    double width() const { return hi - lo; }
    /// Map into [0, 1].
    double normalize(double v) const { return (v - lo) / (hi - lo); }
    double denormalize(double u) const { return lo + u * (hi - lo); }
};

enum class Param { LnaVdd, LoFreqOffset, LoAmplitude, FilterBw, IfGain };

inline constexpr std::array<Param, 5> kAllParams = {Param::LnaVdd, Param::LoFreqOffset, Param::LoAmplitude,
                                                    Param::FilterBw, Param::IfGain};

std::string_view param_name(Param p);

/// The five tunable receiver settings. Defaults are the range midpoints.
struct HardwareConfig {
    double lna_vdd = 0.85;
    double lo_freq_offset_hz = 0.0;
    double lo_amplitude = 0.55;
    double filter_bw_hz = 225e3;
    double if_gain_db = 10.0;

    static ParamRange range(Param p);
    double get(Param p) const;
    void set(Param p, double value);
    /// Throws ParameterError naming the first out-of-range field.
    void validate() const;
    bool operator==(const HardwareConfig&) const = default;
};

/// Operating conditions seen by the receiver. Hidden from agents.
struct Scenario {
    double input_power_dbfs = -30.0;
    double carrier_offset_hz = 0.0;
    std::uint64_t noise_seed = 0;

    static ParamRange power_range() { return {-50.0, -5.0}; }
    static ParamRange cfo_range() { return {-20e3, 20e3}; }
    void validate() const;
};

struct ProbeReadings {
    double p_lna_dbfs = kPowerFloorDb;
    double p_if_dbfs = kPowerFloorDb;
};

struct ChainOutput {
    IqFrame adc_frame;
    ProbeReadings probes;
    double evm_percent = 0.0;
};

/// One term c * u(n - lag) * |u(n - lag)|^(order - 1) of a memory polynomial.
struct MemoryPolyTerm {
    int order = 1;
    int lag = 0;
    cplx coeff{1.0, 0.0};
};

std::vector<MemoryPolyTerm> default_if_amp_terms();

/// Every model constant of the simulated receiver in one place.
struct ChainConstants {
    double lna_gain_min_db = 10.0;   // at vdd = 0.5 V
    double lna_gain_max_db = 20.0;   // at vdd = 1.2 V
    double lna_noise_best_dbfs = -70.0;  // input-referred, at vdd = 1.2 V
    double lna_noise_span_db = 10.0;
    double lna_asat_per_volt = 0.5;
    double rapp_smoothness = 2.0;
    double mixer_spur = 0.02;
    double mixer_noise_dbfs = -75.0;
    int filter_order = 4;
    std::vector<MemoryPolyTerm> if_amp_terms = default_if_amp_terms();
    int adc_bits = 12;
    bool noise_enabled = true;

    double lna_gain_db(double vdd) const;
    double lna_noise_dbfs(double vdd) const;
    double lna_saturation(double vdd) const;
};

/// Per-stage noise seed derived from the scenario seed.
std::uint64_t stage_seed(std::uint64_t noise_seed, int stage);

/// Complex white Gaussian noise of the given total power (both rails).
CVec complex_noise(std::size_t n, double power_dbfs, std::uint64_t seed);

CVec lna_apply(std::span<const cplx> x, double vdd, std::uint64_t seed, const ChainConstants& k = {});
CVec mixer_apply(std::span<const cplx> x, double lo_freq_offset_hz, double lo_amplitude, double scenario_cfo_hz,
                 double sample_rate_hz, std::uint64_t seed, const ChainConstants& k = {});
CVec filter_apply(std::span<const cplx> x, double bw_hz, double sample_rate_hz, int order = 4);
CVec memory_polynomial(std::span<const cplx> u, std::span<const MemoryPolyTerm> terms);
CVec if_amp_apply(std::span<const cplx> x, double gain_db, std::span<const MemoryPolyTerm> terms);
inline CVec if_amp_apply(std::span<const cplx> x, double gain_db) {
    const auto terms = default_if_amp_terms();
    return if_amp_apply(x, gain_db, terms);
}
CVec adc_apply(std::span<const cplx> x, int bits);

/// Nonlinear IF stage acting on the post-gain signal u = g * x.
using IfStage = std::function<CVec(std::span<const cplx>)>;

/// Full receiver pipeline with a pluggable post-gain IF nonlinearity. Both
/// the ground-truth chain and the digital twin run through here.
ChainOutput run_receiver_pipeline(const IqFrame& stimulus, const HardwareConfig& config, const Scenario& scenario,
                                  const ChainConstants& constants, const IfStage& if_stage);

ChainOutput run_chain(const IqFrame& stimulus, const HardwareConfig& config, const Scenario& scenario,
                      const ChainConstants& constants = {});

}  // namespace rfat
