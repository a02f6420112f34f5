#pragma once

#include <array>
#include <vector>

#include "rfat/chain.hpp"
#include "rfat/signal.hpp"

namespace rfat {

inline constexpr int kFeatureBands = 8;
inline constexpr int kFeatureWindow = 256;
inline constexpr int kFeatureHop = 128;

/// What the agents observe after each chain run.
struct FeatureVector {
    double p_lna_dbfs = kPowerFloorDb;
    double p_if_dbfs = kPowerFloorDb;
    std::array<double, kFeatureBands> stft_bands_db{};
    double evm_percent = 0.0;
    HardwareConfig current_config;
    /// Time-averaged STFT power per bin in dB, DC-centered. Feeds the carrier
    /// estimate only; not part of the numeric vector.
    std::vector<double> spectrum_db;
    double spectrum_bin_hz = 0.0;

    /// p_lna, p_if, the band powers, then EVM (11 entries).
    std::vector<double> numeric() const;
    static FeatureVector from_numeric(const std::vector<double>& values, const HardwareConfig& config);
};

FeatureVector build_features(const ProbeReadings& probes, const Spectrogram& spec, double evm_percent,
                             const HardwareConfig& config);

/// STFT of the DC-blocked ADC output, then build_features.
FeatureVector observe(const ChainOutput& out, const HardwareConfig& config);

}  // namespace rfat
