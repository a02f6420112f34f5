#include "rfat/receiver.hpp"

#include <cmath>
#include <numbers>

#include "rfat/error.hpp"

namespace rfat {

CVec remove_dc(std::span<const cplx> samples) {
    CVec out(samples.begin(), samples.end());
    if (out.empty()) return out;
    cplx mean{};
    for (const auto& s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    for (auto& s : out) s -= mean;
    return out;
}

namespace {

// Residual rotation per symbol, in radians. Zero when it cannot be estimated.
double residual_rate(std::span<const cplx> symbols, std::span<const cplx> reference) {
    const std::size_t n = symbols.size();
    if (n < 8) return 0.0;

    CVec z(n);
    for (std::size_t k = 0; k < n; ++k) z[k] = symbols[k] * std::conj(reference[k]);
    cplx lag{};
    for (std::size_t k = 1; k < n; ++k) lag += z[k] * std::conj(z[k - 1]);
    if (lag == cplx{}) return 0.0;
    const double coarse = std::arg(lag);

    // Refine: phases of block sums after coarse correction lie on a line.
    const std::size_t n_blocks = std::min<std::size_t>(16, n / 4);
    const std::size_t block = n / n_blocks;
    std::vector<double> centre(n_blocks);
    std::vector<double> phase(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        cplx acc{};
        for (std::size_t k = b * block; k < (b + 1) * block; ++k) {
            acc += z[k] * std::polar(1.0, -coarse * static_cast<double>(k));
        }
        centre[b] = static_cast<double>(b * block) + (static_cast<double>(block) - 1.0) / 2.0;
        phase[b] = std::arg(acc);
        if (b > 0) {
            // unwrap
            while (phase[b] - phase[b - 1] > std::numbers::pi) phase[b] -= 2.0 * std::numbers::pi;
            while (phase[b] - phase[b - 1] < -std::numbers::pi) phase[b] += 2.0 * std::numbers::pi;
        }
    }
    double mc = 0.0, mp = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        mc += centre[b];
        mp += phase[b];
    }
    mc /= static_cast<double>(n_blocks);
    mp /= static_cast<double>(n_blocks);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        sxy += (centre[b] - mc) * (phase[b] - mp);
        sxx += (centre[b] - mc) * (centre[b] - mc);
    }
    return coarse + (sxx > 0.0 ? sxy / sxx : 0.0);
}

CVec rotate(std::span<const cplx> symbols, double rate) {
    CVec out(symbols.begin(), symbols.end());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= std::polar(1.0, -rate * static_cast<double>(k));
    return out;
}

}  // namespace

CVec derotate_residual_carrier(std::span<const cplx> symbols, std::span<const cplx> reference) {
    if (symbols.size() != reference.size()) throw ParameterError("derotate_residual_carrier: length mismatch");
    return rotate(symbols, residual_rate(symbols, reference));
}

CVec receive_symbols(const IqFrame& frame) {
    const CVec r = demodulate(frame);
    const auto& s = frame.ref_symbols;
    const std::size_t n = r.size();
    // Alternate between the offset and the rotation; the plain mean of r is
    // biased by the payload's own nonzero mean.
    cplx dc{};
    for (const auto& v : r) dc += v;
    dc /= static_cast<double>(n);
    double rate = 0.0;
    for (int it = 0; it < 4; ++it) {
        CVec y(n);
        for (std::size_t k = 0; k < n; ++k) y[k] = r[k] - dc;
        rate = residual_rate(y, s);
        const CVec d = rotate(y, rate);
        cplx num{};
        double den = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            num += d[k] * std::conj(s[k]);
            den += std::norm(s[k]);
        }
        const cplx gain = den > 0.0 ? num / den : cplx{};
        cplx resid{};
        for (std::size_t k = 0; k < n; ++k) {
            resid += r[k] - gain * s[k] * std::polar(1.0, rate * static_cast<double>(k));
        }
        dc = resid / static_cast<double>(n);
    }
    CVec y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = r[k] - dc;
    return rotate(y, rate);
}

double receiver_evm(const IqFrame& frame) {
    return compute_evm(receive_symbols(frame), frame.ref_symbols);
}

}  // namespace rfat
