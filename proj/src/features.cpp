#include "rfat/features.hpp"

#include <algorithm>
#include <cmath>

#include "rfat/error.hpp"
#include "rfat/receiver.hpp"

namespace rfat {

std::vector<double> FeatureVector::numeric() const {
    std::vector<double> v{p_lna_dbfs, p_if_dbfs};
    v.insert(v.end(), stft_bands_db.begin(), stft_bands_db.end());
    v.push_back(evm_percent);
    return v;
}

FeatureVector FeatureVector::from_numeric(const std::vector<double>& values, const HardwareConfig& config) {
    if (values.size() != 3 + kFeatureBands) throw ParameterError("feature vector must have 11 entries");
    FeatureVector f;
    f.p_lna_dbfs = values[0];
    f.p_if_dbfs = values[1];
    for (int b = 0; b < kFeatureBands; ++b) f.stft_bands_db[static_cast<std::size_t>(b)] = values[static_cast<std::size_t>(2 + b)];
    f.evm_percent = values.back();
    f.current_config = config;
    return f;
}

FeatureVector build_features(const ProbeReadings& probes, const Spectrogram& spec, double evm_percent,
                             const HardwareConfig& config) {
    const auto bands = stft_band_features(spec, kFeatureBands);
    FeatureVector f;
    f.p_lna_dbfs = probes.p_lna_dbfs;
    f.p_if_dbfs = probes.p_if_dbfs;
    std::copy(bands.begin(), bands.end(), f.stft_bands_db.begin());
    f.evm_percent = evm_percent;
    f.current_config = config;
    f.spectrum_bin_hz = spec.window_len > 0 ? spec.sample_rate_hz / spec.window_len : 0.0;
    for (double p : spec.mean_power()) f.spectrum_db.push_back(p > 0.0 ? std::max(10.0 * std::log10(p), kPowerFloorDb) : kPowerFloorDb);
    for (double v : f.numeric()) {
        if (!std::isfinite(v)) throw ParameterError("build_features: non-finite input");
    }
    return f;
}

FeatureVector observe(const ChainOutput& out, const HardwareConfig& config) {
    const CVec iq = remove_dc(out.adc_frame.samples);
    const auto spec = stft(iq, kFeatureWindow, kFeatureHop, out.adc_frame.sample_rate_hz);
    return build_features(out.probes, spec, out.evm_percent, config);
}

}  // namespace rfat
