#include "rfat/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "rfat/error.hpp"

namespace rfat {

namespace {

constexpr double kPi = std::numbers::pi;

double to_db_floored(double linear_power) {
    if (!(linear_power > 0.0)) return kPowerFloorDb;
    return std::max(10.0 * std::log10(linear_power), kPowerFloorDb);
}

std::vector<double> tx_taps(int sps, double rolloff) {
    const int len = kTxSpanSymbols * sps;
    std::vector<double> taps(static_cast<std::size_t>(len + 1));
    for (int m = 0; m <= len; ++m) {
        taps[static_cast<std::size_t>(m)] = rrc_pulse(static_cast<double>(m - len / 2) / sps, rolloff);
    }
    const double energy = std::inner_product(taps.begin(), taps.end(), taps.begin(), 0.0);
    const double scale = std::sqrt(static_cast<double>(sps) / energy);
    for (auto& t : taps) t *= scale;
    return taps;
}

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

class FftPlan {
public:
    explicit FftPlan(int n) : n_(n) {
        in_ = fftw_alloc_complex(static_cast<std::size_t>(n));
        out_ = fftw_alloc_complex(static_cast<std::size_t>(n));
        std::lock_guard lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_1d(n, in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    ~FftPlan() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    cplx* input() { return reinterpret_cast<cplx*>(in_); }
    const cplx* output() const { return reinterpret_cast<const cplx*>(out_); }
    void execute() { fftw_execute(plan_); }
    int size() const { return n_; }

private:
    int n_;
    fftw_complex* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

}  // namespace

std::span<const cplx> IqFrame::payload() const {
    if (payload_offset + payload_length() > samples.size()) {
        throw ParameterError("IqFrame: payload extends past the end of the samples");
    }
    return std::span<const cplx>(samples).subspan(payload_offset, payload_length());
}

double Spectrogram::bin_frequency_hz(int bin) const {
    return static_cast<double>(bin - window_len / 2 + 1) * sample_rate_hz / window_len;
}

std::vector<double> Spectrogram::mean_power() const {
    std::vector<double> avg(static_cast<std::size_t>(window_len), 0.0);
    if (frames.empty()) return avg;
    for (const auto& f : frames) {
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += f[i];
    }
    for (auto& v : avg) v /= static_cast<double>(frames.size());
    return avg;
}

CVec qam_constellation(int order) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));
    if (order != 4 && order != 16 && order != 64) {
        throw ParameterError("qam_constellation: order must be 4, 16 or 64, got " + std::to_string(order));
    }
    // Levels +-1, +-3, ...; mean power of one rail is (side^2 - 1) / 3.
    const double scale = 1.0 / std::sqrt(2.0 * (side * side - 1) / 3.0);
    CVec points;
    points.reserve(static_cast<std::size_t>(order));
    for (int i = 0; i < side; ++i) {
        for (int q = 0; q < side; ++q) {
            points.emplace_back((2 * i - side + 1) * scale, (2 * q - side + 1) * scale);
        }
    }
    return points;
}

double rrc_pulse(double t, double rolloff) {
    const double b = rolloff;
    if (std::abs(t) < 1e-10) return 1.0 - b + 4.0 * b / kPi;
    if (b > 0.0 && std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-10) {
        return b / std::sqrt(2.0) *
               ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
    }
    const double num = std::sin(kPi * t * (1.0 - b)) + 4.0 * b * t * std::cos(kPi * t * (1.0 + b));
    const double den = kPi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t));
    return num / den;
}

IqFrame generate_qam_frame(int n_symbols, int constellation_order, int sps, double rolloff, std::uint64_t seed,
                           double symbol_rate_hz) {
    if (n_symbols < 16) throw ParameterError("generate_qam_frame: n_symbols must be >= 16");
    if (sps < 2) throw ParameterError("generate_qam_frame: sps must be >= 2");
    if (!(rolloff > 0.0 && rolloff <= 1.0)) throw ParameterError("generate_qam_frame: rolloff must be in (0, 1]");
    if (!(symbol_rate_hz > 0.0)) throw ParameterError("generate_qam_frame: symbol rate must be positive");
    const CVec constellation = qam_constellation(constellation_order);

    const int pad = kTxSpanSymbols;
    const int total_symbols = n_symbols + 2 * pad;
    std::mt19937_64 rng(seed);
    CVec symbols(static_cast<std::size_t>(total_symbols));
    // Orders are powers of two, so the modulo draw is unbiased.
    for (auto& s : symbols) s = constellation[rng() % constellation.size()];

    const auto taps = tx_taps(sps, rolloff);
    const int half = kTxSpanSymbols * sps / 2;
    const int n_samples = total_symbols * sps;

    IqFrame frame;
    frame.samples.assign(static_cast<std::size_t>(n_samples), cplx{});
    for (int k = 0; k < total_symbols; ++k) {
        const int centre = k * sps;
        for (int m = 0; m < static_cast<int>(taps.size()); ++m) {
            const int n = centre + m - half;
            if (n < 0 || n >= n_samples) continue;
            frame.samples[static_cast<std::size_t>(n)] += symbols[static_cast<std::size_t>(k)] * taps[static_cast<std::size_t>(m)];
        }
    }
    frame.symbol_rate_hz = symbol_rate_hz;
    frame.sample_rate_hz = symbol_rate_hz * sps;
    frame.sps = sps;
    frame.rolloff = rolloff;
    frame.ref_symbols.assign(symbols.begin() + pad, symbols.begin() + pad + n_symbols);
    frame.payload_offset = static_cast<std::size_t>(pad * sps);
    return frame;
}

CVec demodulate(const IqFrame& frame) {
    if (frame.sps < 2) throw ParameterError("demodulate: sps must be >= 2");
    if (frame.samples.size() < static_cast<std::size_t>(frame.sps)) {
        throw ParameterError("demodulate: frame shorter than one symbol");
    }
    if (frame.ref_symbols.empty()) throw ParameterError("demodulate: frame has no reference symbols");
    if (frame.payload_offset + frame.payload_length() > frame.samples.size()) {
        throw ParameterError("demodulate: payload extends past the end of the frame");
    }

    const int sps = frame.sps;
    const auto tx = tx_taps(sps, frame.rolloff);
    const int tx_half = kTxSpanSymbols * sps / 2;
    double gain = 0.0;
    for (int m = 0; m < static_cast<int>(tx.size()); ++m) {
        gain += tx[static_cast<std::size_t>(m)] * rrc_pulse(static_cast<double>(m - tx_half) / sps, frame.rolloff);
    }

    // Every symbol instant shares the same fractional part, so one tap set serves all.
    const double tau = frame.timing_offset_samples;
    const double base = std::floor(tau);
    const double frac = tau - base;
    const int rx_half = kRxSpanSymbols * sps / 2;
    std::vector<double> taps;
    std::vector<int> offsets;
    for (int d = -rx_half - 1; d <= rx_half + 1; ++d) {
        const double t = (static_cast<double>(d) - frac) / sps;
        if (std::abs(t) > kRxSpanSymbols / 2.0) continue;
        taps.push_back(rrc_pulse(t, frame.rolloff) / gain);
        offsets.push_back(d);
    }

    const auto n_samples = static_cast<long>(frame.samples.size());
    CVec out(frame.ref_symbols.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const long anchor = static_cast<long>(frame.payload_offset + k * static_cast<std::size_t>(sps)) +
                            static_cast<long>(base);
        cplx acc{};
        for (std::size_t j = 0; j < taps.size(); ++j) {
            const long n = anchor + offsets[j];
            if (n < 0 || n >= n_samples) continue;
            acc += frame.samples[static_cast<std::size_t>(n)] * taps[j];
        }
        out[k] = acc;
    }
    return out;
}

double measure_power_dbfs(std::span<const cplx> samples) {
    if (samples.empty()) throw ParameterError("measure_power_dbfs: empty sequence");
    double acc = 0.0;
    for (const auto& s : samples) acc += std::norm(s);
    return to_db_floored(acc / static_cast<double>(samples.size()));
}

Spectrogram stft(std::span<const cplx> samples, int window_len, int hop, double sample_rate_hz) {
    const bool pow2 = window_len > 0 && (window_len & (window_len - 1)) == 0;
    if (!pow2 || window_len < 32 || window_len > 4096) {
        throw ParameterError("stft: window_len must be a power of two in [32, 4096]");
    }
    if (hop < 1 || hop > window_len) throw ParameterError("stft: hop must be in [1, window_len]");
    if (samples.size() < static_cast<std::size_t>(window_len)) {
        throw ParameterError("stft: sequence shorter than window_len");
    }

    const auto L = static_cast<std::size_t>(window_len);
    std::vector<double> window(L);
    for (std::size_t n = 0; n < L; ++n) {
        window[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(L));
    }
    const double window_energy = std::inner_product(window.begin(), window.end(), window.begin(), 0.0);
    const double norm = 1.0 / (static_cast<double>(L) * window_energy);

    Spectrogram spec;
    spec.window_len = window_len;
    spec.hop = hop;
    spec.sample_rate_hz = sample_rate_hz;
    const std::size_t n_frames = (samples.size() - L) / static_cast<std::size_t>(hop) + 1;
    spec.frames.reserve(n_frames);

    FftPlan fft(window_len);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const std::size_t start = t * static_cast<std::size_t>(hop);
        cplx* in = fft.input();
        for (std::size_t n = 0; n < L; ++n) in[n] = samples[start + n] * window[n];
        fft.execute();
        const cplx* X = fft.output();
        std::vector<double> row(L);
        for (std::size_t i = 0; i < L; ++i) {
            const std::size_t k = (i + L / 2 + 1) % L;
            row[i] = std::norm(X[k]) * norm;
        }
        spec.frames.push_back(std::move(row));
    }
    return spec;
}

std::vector<double> stft_band_features(const Spectrogram& spec, int n_bands) {
    if (n_bands < 1 || spec.window_len % n_bands != 0) {
        throw ParameterError("stft_band_features: n_bands must divide window_len");
    }
    const auto avg = spec.mean_power();
    const int width = spec.window_len / n_bands;
    std::vector<double> bands(static_cast<std::size_t>(n_bands));
    for (int b = 0; b < n_bands; ++b) {
        const auto first = avg.begin() + b * width;
        bands[static_cast<std::size_t>(b)] = to_db_floored(std::accumulate(first, first + width, 0.0));
    }
    return bands;
}

double compute_evm(std::span<const cplx> received, std::span<const cplx> reference) {
    if (received.size() != reference.size()) throw ParameterError("compute_evm: length mismatch");
    if (received.empty()) throw ParameterError("compute_evm: empty input");
    double ref_power = 0.0;
    double rx_power = 0.0;
    cplx cross{};
    for (std::size_t k = 0; k < received.size(); ++k) {
        ref_power += std::norm(reference[k]);
        rx_power += std::norm(received[k]);
        cross += std::conj(received[k]) * reference[k];
    }
    if (ref_power == 0.0) throw ParameterError("compute_evm: all-zero reference");
    const cplx a = rx_power > 0.0 ? cross / rx_power : cplx{};
    double err = 0.0;
    for (std::size_t k = 0; k < received.size(); ++k) err += std::norm(a * received[k] - reference[k]);
    return 100.0 * std::sqrt(err / ref_power);
}

}  // namespace rfat
