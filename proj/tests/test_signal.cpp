#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <numbers>
#include <random>

#include "rfat/error.hpp"
#include "rfat/receiver.hpp"
#include "rfat/signal.hpp"

using namespace rfat;

namespace {

constexpr double kPi = std::numbers::pi;

// Closed-form root-raised-cosine written out independently of the library.
double rrc_oracle(double t, double beta) {
    if (std::abs(t) < 1e-12) return 1.0 - beta + 4.0 * beta / kPi;
    if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
        return beta / std::sqrt(2.0) *
               ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
    }
    const double num = std::sin(kPi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
    const double den = kPi * t * (1.0 - 16.0 * beta * beta * t * t);
    return num / den;
}

// Brute-force matched filter: correlate the frame with a long RRC at each
// symbol instant and rescale by the peak of the RRC autocorrelation.
CVec matched_filter_oracle(const IqFrame& f) {
    const int span = kRxSpanSymbols / 2;
    CVec out;
    double norm = 0.0;
    for (int k = -span * f.sps; k <= span * f.sps; ++k) {
        const double h = rrc_oracle(static_cast<double>(k) / f.sps, f.rolloff);
        norm += h * h;
    }
    // TX pulse energy was normalized to sps; undo both filters' scale.
    for (std::size_t s = 0; s < f.ref_symbols.size(); ++s) {
        const double center = static_cast<double>(f.payload_offset) + static_cast<double>(s * f.sps);
        cplx acc{};
        for (int k = -span * f.sps; k <= span * f.sps; ++k) {
            const long n = static_cast<long>(center) + k;
            if (n < 0 || n >= static_cast<long>(f.samples.size())) continue;
            acc += f.samples[static_cast<std::size_t>(n)] * rrc_oracle(static_cast<double>(-k) / f.sps, f.rolloff);
        }
        out.push_back(acc);
    }
    (void)norm;
    return out;
}

double evm_oracle(const CVec& r, const CVec& s) {
    cplx num{};
    double den = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        num += std::conj(r[i]) * s[i];
        den += std::norm(r[i]);
    }
    const cplx a = num / den;
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        err += std::norm(a * r[i] - s[i]);
        ref += std::norm(s[i]);
    }
    return 100.0 * std::sqrt(err / ref);
}

CVec tone(std::size_t n, double freq_over_fs, double amplitude, double phase = 0.0) {
    CVec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::polar(amplitude, 2.0 * kPi * freq_over_fs * static_cast<double>(i) + phase);
    return x;
}

CVec white_noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    CVec x(n);
    for (auto& v : x) {
        const double re = g(rng);
        v = {re, g(rng)};
    }
    return x;
}

}  // namespace

TEST_CASE("qam frame has unit payload power and the requested length") {
    const IqFrame f = generate_qam_frame(1024, 16, 8, 0.25, 7);
    CHECK(f.payload_length() == 8192);
    CHECK(f.payload().size() == 8192);
    double p = 0.0;
    for (const auto& v : f.payload()) p += std::norm(v);
    p /= 8192.0;
    CHECK(std::abs(10.0 * std::log10(p)) <= 0.5);
    CHECK(f.sample_rate_hz == f.symbol_rate_hz * f.sps);
}

TEST_CASE("qam frame is deterministic for a fixed seed") {
    const IqFrame a = generate_qam_frame(16, 4, 2, 1.0, 0);
    const IqFrame b = generate_qam_frame(16, 4, 2, 1.0, 0);
    CHECK(a.samples == b.samples);
    CHECK(a.ref_symbols == b.ref_symbols);
    const IqFrame c = generate_qam_frame(16, 4, 2, 1.0, 1);
    CHECK(a.ref_symbols != c.ref_symbols);
}

TEST_CASE("constellations have unit mean power") {
    for (int order : {4, 16, 64}) {
        const CVec c = qam_constellation(order);
        CHECK(c.size() == static_cast<std::size_t>(order));
        double p = 0.0;
        for (const auto& v : c) p += std::norm(v);
        CHECK(p / order == doctest::Approx(1.0).epsilon(1e-12));
    }
    const CVec c16 = qam_constellation(16);
    for (const auto& v : c16) {
        const double re = std::abs(v.real()) * std::sqrt(10.0);
        const double im = std::abs(v.imag()) * std::sqrt(10.0);
        CHECK((std::abs(re - 1.0) < 1e-12 || std::abs(re - 3.0) < 1e-12));
        CHECK((std::abs(im - 1.0) < 1e-12 || std::abs(im - 3.0) < 1e-12));
    }
}

TEST_CASE("frame generation rejects bad parameters") {
    CHECK_THROWS_AS(generate_qam_frame(1024, 8, 8, 0.25, 0), ParameterError);
    CHECK_THROWS_AS(generate_qam_frame(1024, 16, 8, 0.0, 0), ParameterError);
    CHECK_THROWS_AS(generate_qam_frame(1024, 16, 8, 1.5, 0), ParameterError);
    CHECK_THROWS_AS(generate_qam_frame(8, 16, 8, 0.25, 0), ParameterError);
}

TEST_CASE("rrc pulse matches the closed form including its special points") {
    for (double beta : {0.25, 0.5, 1.0}) {
        for (double t : {0.0, 0.1, 0.37, 1.0, 2.5, 1.0 / (4.0 * beta), -1.0 / (4.0 * beta), 7.3}) {
            CHECK(rrc_pulse(t, beta) == doctest::Approx(rrc_oracle(t, beta)).epsilon(1e-9));
        }
    }
}

TEST_CASE("demodulate round trip stays below 0.5 percent EVM") {
    for (int sps : {4, 8}) {
        const IqFrame f = generate_qam_frame(1024, 16, sps, 0.25, 11);
        const CVec est = demodulate(f);
        REQUIRE(est.size() == f.ref_symbols.size());
        CHECK(compute_evm(est, f.ref_symbols) < 0.5);
        // The independent brute-force matched filter agrees on the EVM.
        CHECK(evm_oracle(matched_filter_oracle(f), f.ref_symbols) < 0.5);
    }
}

TEST_CASE("demodulate matches a brute-force matched filter up to a scalar") {
    const IqFrame f = generate_qam_frame(256, 16, 8, 0.25, 3);
    const CVec est = demodulate(f);
    const CVec ref = matched_filter_oracle(f);
    CHECK(evm_oracle(est, ref) < 1e-6);
}

TEST_CASE("demodulate is linear and maps zero to zero") {
    IqFrame f = generate_qam_frame(64, 16, 8, 0.25, 5);
    const CVec a = demodulate(f);
    for (auto& v : f.samples) v *= 2.0;
    const CVec b = demodulate(f);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(b[i] - 2.0 * a[i]) < 1e-12);
    std::fill(f.samples.begin(), f.samples.end(), cplx{});
    for (const auto& v : demodulate(f)) CHECK(v == cplx{});
}

TEST_CASE("demodulate rejects frames shorter than one symbol") {
    IqFrame f = generate_qam_frame(16, 4, 8, 0.25, 0);
    f.samples.resize(4);
    CHECK_THROWS_AS(demodulate(f), ParameterError);
}

TEST_CASE("measure_power_dbfs examples and scaling law") {
    CHECK(measure_power_dbfs(tone(1000, 0.01, 1.0)) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(measure_power_dbfs(tone(1000, 0.01, 0.5)) == doctest::Approx(-6.0206).epsilon(1e-5));
    CHECK(measure_power_dbfs(CVec(100, cplx{})) == kPowerFloorDb);
    CHECK_THROWS_AS(measure_power_dbfs(CVec{}), ParameterError);

    const CVec x = white_noise(4096, 1);
    for (cplx c : {cplx{2.0, 0.0}, cplx{0.1, -0.3}, cplx{-7.0, 4.0}}) {
        CVec y = x;
        for (auto& v : y) v *= c;
        CHECK(std::abs(measure_power_dbfs(y) - measure_power_dbfs(x) - 20.0 * std::log10(std::abs(c))) < 1e-9);
    }
}

TEST_CASE("stft localizes a tone at fs/8") {
    const Spectrogram s = stft(tone(1024, 1.0 / 8.0, 1.0), 64, 64, 1.0);
    CHECK(s.frames.size() == 16);
    CHECK(s.window_len == 64);
    // Bin i sits at (i - 31) fs / 64, so +fs/8 is bin 39.
    CHECK(s.bin_frequency_hz(39) == doctest::Approx(1.0 / 8.0));
    for (const auto& frame : s.frames) {
        REQUIRE(frame.size() == 64);
        const auto peak = std::max_element(frame.begin(), frame.end()) - frame.begin();
        CHECK(peak == 39);
        std::vector<double> sorted = frame;
        std::nth_element(sorted.begin(), sorted.begin() + 32, sorted.end());
        const double median = std::max(sorted[32], 1e-300);
        CHECK(10.0 * std::log10(frame[39] / median) > 20.0);
    }
}

TEST_CASE("stft frequency axis spans (-fs/2, fs/2]") {
    const Spectrogram s = stft(tone(512, 0.1, 1.0), 256, 128, 1e6);
    CHECK(s.bin_frequency_hz(255) == doctest::Approx(5e5));
    CHECK(s.bin_frequency_hz(0) > -5e5);
    CHECK(s.bin_frequency_hz(127) == doctest::Approx(0.0));
}

TEST_CASE("stft frame count, zero input and argument checks") {
    const Spectrogram z = stft(CVec(1000, cplx{}), 128, 50, 1.0);
    CHECK(z.frames.size() == (1000 - 128) / 50 + 1);
    for (const auto& f : z.frames) {
        for (double v : f) CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(stft(CVec(100, cplx{}), 128, 64, 1.0), ParameterError);
    CHECK_THROWS_AS(stft(CVec(1000, cplx{}), 100, 50, 1.0), ParameterError);
    CHECK_THROWS_AS(stft(CVec(10000, cplx{}), 8192, 64, 1.0), ParameterError);
    CHECK_THROWS_AS(stft(CVec(1000, cplx{}), 128, 0, 1.0), ParameterError);
    CHECK_THROWS_AS(stft(CVec(1000, cplx{}), 128, 129, 1.0), ParameterError);
}

TEST_CASE("stft conserves windowed energy") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const int len = 128;
        const int hop = 48;
        const CVec x = white_noise(2000, seed);
        const Spectrogram s = stft(x, len, hop, 1.0);
        double w2 = 0.0;
        std::vector<double> w(static_cast<std::size_t>(len));
        for (int n = 0; n < len; ++n) {
            w[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / len);
            w2 += w[static_cast<std::size_t>(n)] * w[static_cast<std::size_t>(n)];
        }
        double spectral = 0.0;
        for (const auto& f : s.frames) {
            for (double v : f) spectral += v;
        }
        double temporal = 0.0;
        for (std::size_t t = 0; t < s.frames.size(); ++t) {
            for (int n = 0; n < len; ++n) {
                temporal += std::norm(w[static_cast<std::size_t>(n)] * x[t * hop + static_cast<std::size_t>(n)]);
            }
        }
        CHECK(spectral * w2 == doctest::Approx(temporal).epsilon(1e-6));
    }
}

TEST_CASE("band features localize a tone and stay flat for white noise") {
    // Band 3 of 8 covers bins 96..127 of 256; bin 111 is (111 - 127) / 256 of fs.
    const Spectrogram s = stft(tone(4096, (111.0 - 127.0) / 256.0, 1.0), 256, 128, 1.0);
    const auto bands = stft_band_features(s, 8);
    REQUIRE(bands.size() == 8);
    CHECK(std::max_element(bands.begin(), bands.end()) - bands.begin() == 3);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto b = stft_band_features(stft(white_noise(16384, 100 + seed), 256, 128, 1.0), 8);
        const auto [lo, hi] = std::minmax_element(b.begin(), b.end());
        CHECK(*hi - *lo <= 3.0);
        const double mean = std::accumulate(b.begin(), b.end(), 0.0) / 8.0;
        for (double v : b) CHECK(std::abs(v - mean) <= 1.5);
    }

    for (double v : stft_band_features(stft(CVec(1024, cplx{}), 256, 128, 1.0), 8)) CHECK(v == kPowerFloorDb);
    CHECK_THROWS_AS(stft_band_features(s, 7), ParameterError);
}

TEST_CASE("evm identity, complex-gain invariance and noise level") {
    const IqFrame f = generate_qam_frame(1024, 16, 8, 0.25, 1);
    const CVec& s = f.ref_symbols;
    CHECK(compute_evm(s, s) == doctest::Approx(0.0));
    CVec r = s;
    const cplx g = 1.1 * std::polar(1.0, 10.0 * kPi / 180.0);
    for (auto& v : r) v *= g;
    CHECK(compute_evm(r, s) < 1e-9);

    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> pick(0, 15);
        const CVec c = qam_constellation(16);
        CVec ref(10000), rx(10000);
        const CVec w = white_noise(10000, 1000 + seed);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            ref[i] = c[static_cast<std::size_t>(pick(rng))];
            rx[i] = ref[i] + 0.1 * w[i];
        }
        const double e = compute_evm(rx, ref);
        CHECK(e == doctest::Approx(evm_oracle(rx, ref)).epsilon(1e-9));
        worst = std::max(worst, std::abs(e - 10.0));
        CVec scaled = rx;
        for (auto& v : scaled) v *= cplx{-0.3, 2.2};
        CHECK(std::abs(compute_evm(scaled, ref) - e) < 1e-6);
    }
    CHECK(worst <= 0.5);
}

TEST_CASE("evm argument checks") {
    const CVec a(10, cplx{1.0, 0.0});
    CHECK_THROWS_AS(compute_evm(a, CVec(9, cplx{1.0, 0.0})), ParameterError);
    CHECK_THROWS_AS(compute_evm(CVec{}, CVec{}), ParameterError);
    CHECK_THROWS_AS(compute_evm(a, CVec(10, cplx{})), ParameterError);
    CHECK(compute_evm(CVec(10, cplx{}), a) == doctest::Approx(100.0));
}

TEST_CASE("receiver removes a constant offset with or without a residual carrier") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const IqFrame clean = generate_qam_frame(512, 16, 8, 0.25, seed);
        CHECK(receiver_evm(clean) == doctest::Approx(compute_evm(demodulate(clean), clean.ref_symbols)).epsilon(1e-3));
        for (double cfo : {0.0, 3e3}) {
            IqFrame rotated = clean;
            const double w = 2.0 * std::numbers::pi * cfo / clean.sample_rate_hz;
            for (std::size_t n = 0; n < rotated.samples.size(); ++n) {
                rotated.samples[n] = 0.3 * clean.samples[n] * std::polar(1.0, w * static_cast<double>(n));
            }
            IqFrame offset = rotated;
            for (auto& v : offset.samples) v += cplx{0.05, -0.02};
            CHECK(receiver_evm(offset) == doctest::Approx(receiver_evm(rotated)).epsilon(1e-6));
        }
    }
    const CVec dc = remove_dc(CVec{{1.0, 2.0}, {3.0, 0.0}});
    CHECK(dc[0] == cplx{-1.0, 1.0});
    CHECK(dc[1] == cplx{1.0, -1.0});
}
