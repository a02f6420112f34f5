#include "rfat/chain.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rfat/error.hpp"
#include "rfat/receiver.hpp"

namespace rfat {

namespace {

constexpr double kVddMin = 0.5;
constexpr double kVddMax = 1.2;

void require_in_range(std::string_view what, double value, ParamRange r) {
    if (!r.contains(value)) {
        throw ParameterError(std::string(what) + " = " + std::to_string(value) + " outside [" + std::to_string(r.lo) +
                             ", " + std::to_string(r.hi) + "]");
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::string_view param_name(Param p) {
    switch (p) {
        case Param::LnaVdd: return "lna_vdd";
        case Param::LoFreqOffset: return "lo_freq_offset_hz";
        case Param::LoAmplitude: return "lo_amplitude";
        case Param::FilterBw: return "filter_bw_hz";
        case Param::IfGain: return "if_gain_db";
    }
    return "?";
}

ParamRange HardwareConfig::range(Param p) {
    switch (p) {
        case Param::LnaVdd: return {kVddMin, kVddMax};
        case Param::LoFreqOffset: return {-50e3, 50e3};
        case Param::LoAmplitude: return {0.1, 1.0};
        case Param::FilterBw: return {50e3, 400e3};
        case Param::IfGain: return {-6.0, 26.0};
    }
    throw ParameterError("unknown parameter");
}

double HardwareConfig::get(Param p) const {
    switch (p) {
        case Param::LnaVdd: return lna_vdd;
        case Param::LoFreqOffset: return lo_freq_offset_hz;
        case Param::LoAmplitude: return lo_amplitude;
        case Param::FilterBw: return filter_bw_hz;
        case Param::IfGain: return if_gain_db;
    }
    throw ParameterError("unknown parameter");
}

void HardwareConfig::set(Param p, double value) {
    switch (p) {
        case Param::LnaVdd: lna_vdd = value; return;
        case Param::LoFreqOffset: lo_freq_offset_hz = value; return;
        case Param::LoAmplitude: lo_amplitude = value; return;
        case Param::FilterBw: filter_bw_hz = value; return;
        case Param::IfGain: if_gain_db = value; return;
    }
    throw ParameterError("unknown parameter");
}

void HardwareConfig::validate() const {
    for (Param p : kAllParams) require_in_range(param_name(p), get(p), range(p));
}

void Scenario::validate() const {
    require_in_range("input_power_dbfs", input_power_dbfs, power_range());
    require_in_range("carrier_offset_hz", carrier_offset_hz, cfo_range());
}

std::vector<MemoryPolyTerm> default_if_amp_terms() {
    return {
        {1, 0, {1.0, 0.0}},   {1, 1, {0.08, 0.0}}, {1, 2, {-0.03, 0.0}},
        {3, 0, {-0.25, 0.05}}, {3, 1, {0.0, 0.05}}, {5, 0, {0.06, 0.0}},
    };
}

double ChainConstants::lna_gain_db(double vdd) const {
    return lna_gain_min_db + (lna_gain_max_db - lna_gain_min_db) * (vdd - kVddMin) / (kVddMax - kVddMin);
}

double ChainConstants::lna_noise_dbfs(double vdd) const {
    return lna_noise_best_dbfs + lna_noise_span_db * (kVddMax - vdd) / (kVddMax - kVddMin);
}

double ChainConstants::lna_saturation(double vdd) const { return lna_asat_per_volt * vdd; }

std::uint64_t stage_seed(std::uint64_t noise_seed, int stage) {
    return splitmix64(noise_seed * 0x100000001b3ULL + static_cast<std::uint64_t>(stage));
}

CVec complex_noise(std::size_t n, double power_dbfs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(std::pow(10.0, power_dbfs / 10.0) / 2.0));
    CVec out(n);
    for (auto& v : out) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        v = {re, im};
    }
    return out;
}

CVec lna_apply(std::span<const cplx> x, double vdd, std::uint64_t seed, const ChainConstants& k) {
    require_in_range("lna_vdd", vdd, HardwareConfig::range(Param::LnaVdd));
    const double gain = std::pow(10.0, k.lna_gain_db(vdd) / 20.0);
    const double asat = k.lna_saturation(vdd);
    const double two_p = 2.0 * k.rapp_smoothness;
    CVec out(x.begin(), x.end());
    if (k.noise_enabled) {
        const CVec noise = complex_noise(out.size(), k.lna_noise_dbfs(vdd), seed);
        for (std::size_t n = 0; n < out.size(); ++n) out[n] += noise[n];
    }
    for (auto& v : out) {
        v *= gain;
        const double r = std::abs(v) / asat;
        v /= std::pow(1.0 + std::pow(r, two_p), 1.0 / two_p);
    }
    return out;
}

CVec mixer_apply(std::span<const cplx> x, double lo_freq_offset_hz, double lo_amplitude, double scenario_cfo_hz,
                 double sample_rate_hz, std::uint64_t seed, const ChainConstants& k) {
    require_in_range("lo_freq_offset_hz", lo_freq_offset_hz, HardwareConfig::range(Param::LoFreqOffset));
    require_in_range("lo_amplitude", lo_amplitude, HardwareConfig::range(Param::LoAmplitude));
    require_in_range("carrier_offset_hz", scenario_cfo_hz, Scenario::cfo_range());
    if (!(sample_rate_hz > 0.0)) throw ParameterError("mixer_apply: sample rate must be positive");

    const double w = -2.0 * std::numbers::pi * (lo_freq_offset_hz - scenario_cfo_hz) / sample_rate_hz;
    const cplx spur{k.mixer_spur * lo_amplitude, 0.0};
    CVec out(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        out[n] = lo_amplitude * x[n] * std::polar(1.0, w * static_cast<double>(n)) + spur;
    }
    if (k.noise_enabled) {
        const CVec noise = complex_noise(out.size(), k.mixer_noise_dbfs + 10.0 * std::log10(1.0 / lo_amplitude), seed);
        for (std::size_t n = 0; n < out.size(); ++n) out[n] += noise[n];
    }
    return out;
}

CVec filter_apply(std::span<const cplx> x, double bw_hz, double sample_rate_hz, int order) {
    return apply_transfer_function(design_butterworth_lowpass(bw_hz, sample_rate_hz, order), x);
}

CVec memory_polynomial(std::span<const cplx> u, std::span<const MemoryPolyTerm> terms) {
    CVec y(u.size(), cplx{});
    for (const auto& t : terms) {
        const auto lag = static_cast<std::size_t>(t.lag);
        for (std::size_t n = lag; n < u.size(); ++n) {
            const cplx v = u[n - lag];
            const double env = t.order == 1 ? 1.0 : std::pow(std::abs(v), t.order - 1);
            y[n] += t.coeff * v * env;
        }
    }
    return y;
}

CVec if_amp_apply(std::span<const cplx> x, double gain_db, std::span<const MemoryPolyTerm> terms) {
    require_in_range("if_gain_db", gain_db, HardwareConfig::range(Param::IfGain));
    const double g = std::pow(10.0, gain_db / 20.0);
    CVec u(x.begin(), x.end());
    for (auto& v : u) v *= g;
    return memory_polynomial(u, terms);
}

CVec adc_apply(std::span<const cplx> x, int bits) {
    if (bits < 4 || bits > 16) throw ParameterError("adc_apply: bits must be in [4, 16]");
    const double lsb = 2.0 / std::pow(2.0, bits);
    const double max_code = std::pow(2.0, bits - 1) - 1.0;
    const auto quantize = [&](double v) {
        double code = std::floor(v / lsb);
        if (code > max_code) code = max_code;
        if (code < -max_code - 1.0) code = -max_code - 1.0;
        return (code + 0.5) * lsb;
    };
    CVec out(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) out[n] = {quantize(x[n].real()), quantize(x[n].imag())};
    return out;
}

ChainOutput run_receiver_pipeline(const IqFrame& stimulus, const HardwareConfig& config, const Scenario& scenario,
                                  const ChainConstants& constants, const IfStage& if_stage) {
    config.validate();
    scenario.validate();
    const double fs = stimulus.sample_rate_hz;

    const double stim_power = std::pow(10.0, measure_power_dbfs(stimulus.payload()) / 10.0);
    if (!(stim_power > 0.0)) throw ParameterError("run_chain: stimulus payload has zero power");
    const double scale = std::sqrt(std::pow(10.0, scenario.input_power_dbfs / 10.0) / stim_power);
    CVec x(stimulus.samples.size());
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = stimulus.samples[n] * scale;

    ChainOutput out;
    x = lna_apply(x, config.lna_vdd, stage_seed(scenario.noise_seed, 1), constants);
    out.probes.p_lna_dbfs = measure_power_dbfs(x);
    // The carrier offset enters once, through the mixer's residual rotation.
    x = mixer_apply(x, config.lo_freq_offset_hz, config.lo_amplitude, scenario.carrier_offset_hz, fs,
                    stage_seed(scenario.noise_seed, 2), constants);
    const auto filter = design_butterworth_lowpass(config.filter_bw_hz, fs, constants.filter_order);
    x = apply_transfer_function(filter, x);
    const double g = std::pow(10.0, config.if_gain_db / 20.0);
    for (auto& v : x) v *= g;
    x = if_stage(x);
    out.probes.p_if_dbfs = measure_power_dbfs(x);

    out.adc_frame = stimulus;
    out.adc_frame.samples = adc_apply(x, constants.adc_bits);
    out.adc_frame.timing_offset_samples = stimulus.timing_offset_samples + filter.group_delay_dc();
    out.evm_percent = receiver_evm(out.adc_frame);
    return out;
}

ChainOutput run_chain(const IqFrame& stimulus, const HardwareConfig& config, const Scenario& scenario,
                      const ChainConstants& constants) {
    const auto& terms = constants.if_amp_terms;
    return run_receiver_pipeline(stimulus, config, scenario, constants,
                                 [&terms](std::span<const cplx> u) { return memory_polynomial(u, terms); });
}

}  // namespace rfat
