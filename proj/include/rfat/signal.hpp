#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rfat {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

/// Floor reported for the power of an all-zero signal, in dB.
inline constexpr double kPowerFloorDb = -200.0;

/// Transmit pulse-shaping span, in symbols. The frame carries this many
/// padding symbols on each side of the payload.
inline constexpr int kTxSpanSymbols = 8;
/// Receive matched-filter span, in symbols.
inline constexpr int kRxSpanSymbols = 16;

/// Complex baseband frame with the metadata needed to demodulate it.
///
/// `samples` holds the full frame, including `payload_offset` samples of
/// padding-symbol content on either side of the payload. The payload is
/// `ref_symbols.size() * sps` samples long. Symbol k of the payload sits at
/// sample `payload_offset + k * sps + timing_offset_samples`.
struct IqFrame {
    CVec samples;
    double sample_rate_hz = 1e6;
    double symbol_rate_hz = 125e3;
    int sps = 8;
    double rolloff = 0.25;
    CVec ref_symbols;
    std::size_t payload_offset = 0;
    double timing_offset_samples = 0.0;

    std::size_t payload_length() const { return ref_symbols.size() * static_cast<std::size_t>(sps); }
    std::span<const cplx> payload() const;
    /// One-sided occupied bandwidth, symbol_rate * (1 + rolloff) / 2.
    double occupied_halfwidth_hz() const { return symbol_rate_hz * (1.0 + rolloff) / 2.0; }
};

/// Power spectrogram. `frames[t][i]` is the power in bin i of frame t, with
/// bin i at frequency (i - window_len/2 + 1) * fs / window_len, i.e. the
/// frequency axis runs over (-fs/2, fs/2].
struct Spectrogram {
    std::vector<std::vector<double>> frames;
    int window_len = 0;
    int hop = 0;
    double sample_rate_hz = 0.0;

    double bin_frequency_hz(int bin) const;
    /// Time-averaged power per bin.
    std::vector<double> mean_power() const;
};

/// Square QAM constellation with unit mean power, row-major over (I, Q) levels.
CVec qam_constellation(int order);

/// Root-raised-cosine impulse response at time `t` (in symbol periods),
/// normalized to unit energy in continuous time.
double rrc_pulse(double t, double rolloff);

IqFrame generate_qam_frame(int n_symbols, int constellation_order, int sps, double rolloff,
                           std::uint64_t seed, double symbol_rate_hz = 125e3);

/// Matched-filter and sample at the known symbol instants. Output length is
/// `frame.ref_symbols.size()`.
CVec demodulate(const IqFrame& frame);

double measure_power_dbfs(std::span<const cplx> samples);

Spectrogram stft(std::span<const cplx> samples, int window_len, int hop, double sample_rate_hz = 1.0);

/// Time-averaged power per contiguous frequency band, in dB.
std::vector<double> stft_band_features(const Spectrogram& spec, int n_bands);

/// Data-aided RMS EVM in percent after a least-squares complex scalar fit of
/// `received` onto `reference`.
double compute_evm(std::span<const cplx> received, std::span<const cplx> reference);

}  // namespace rfat
