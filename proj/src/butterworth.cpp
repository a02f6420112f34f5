#include "rfat/butterworth.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

#include "rfat/error.hpp"

namespace rfat {

namespace {

// Expand prod (1 - r_i z^-1) into ascending powers of z^-1.
std::vector<cplx> expand_roots(const CVec& roots) {
    std::vector<cplx> poly{cplx{1.0, 0.0}};
    for (const auto& r : roots) {
        std::vector<cplx> next(poly.size() + 1, cplx{});
        for (std::size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] -= r * poly[i];
        }
        poly = std::move(next);
    }
    return poly;
}

}  // namespace

cplx TransferFunction::response(double freq_hz, double sample_rate_hz) const {
    const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
    cplx num{}, den{};
    for (std::size_t k = 0; k < b.size(); ++k) num += b[k] * std::polar(1.0, -w * static_cast<double>(k));
    for (std::size_t k = 0; k < a.size(); ++k) den += a[k] * std::polar(1.0, -w * static_cast<double>(k));
    return num / den;
}

double TransferFunction::response_db(double freq_hz, double sample_rate_hz) const {
    return 20.0 * std::log10(std::abs(response(freq_hz, sample_rate_hz)));
}

double TransferFunction::group_delay_dc() const {
    double nb = 0.0, sb = 0.0, na = 0.0, sa = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
        nb += static_cast<double>(k) * b[k];
        sb += b[k];
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
        na += static_cast<double>(k) * a[k];
        sa += a[k];
    }
    return nb / sb - na / sa;
}

CVec TransferFunction::poles() const {
    const auto order = static_cast<Eigen::Index>(a.size()) - 1;
    if (order < 1) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(order, order);
    for (Eigen::Index j = 0; j < order; ++j) companion(0, j) = -a[static_cast<std::size_t>(j + 1)] / a[0];
    for (Eigen::Index i = 1; i < order; ++i) companion(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    const auto ev = solver.eigenvalues();
    return CVec(ev.data(), ev.data() + ev.size());
}

TransferFunction design_butterworth_lowpass(double cutoff_hz, double sample_rate_hz, int order) {
    if (order < 1) throw ParameterError("design_butterworth_lowpass: order must be >= 1");
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0)) {
        throw ParameterError("design_butterworth_lowpass: cutoff must lie in (0, fs/2)");
    }
    const double fs2 = 2.0 * sample_rate_hz;
    const double warped = fs2 * std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);

    CVec z_poles;
    z_poles.reserve(static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
        const cplx s_pole = warped * std::polar(1.0, theta);
        z_poles.push_back((fs2 + s_pole) / (fs2 - s_pole));
    }
    const CVec z_zeros(static_cast<std::size_t>(order), cplx{-1.0, 0.0});

    const auto den = expand_roots(z_poles);
    const auto num = expand_roots(z_zeros);
    TransferFunction tf;
    tf.a.resize(den.size());
    tf.b.resize(num.size());
    for (std::size_t k = 0; k < den.size(); ++k) tf.a[k] = den[k].real();
    double sum_a = 0.0, sum_b = 0.0;
    for (double v : tf.a) sum_a += v;
    for (const auto& v : num) sum_b += v.real();
    for (std::size_t k = 0; k < num.size(); ++k) tf.b[k] = num[k].real() * sum_a / sum_b;
    return tf;
}

CVec apply_transfer_function(const TransferFunction& tf, std::span<const cplx> x) {
    const std::size_t nb = tf.b.size();
    const std::size_t na = tf.a.size();
    const std::size_t order = std::max(nb, na) - 1;
    // Transposed direct form II.
    std::vector<cplx> state(order + 1, cplx{});
    CVec y(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        const cplx in = x[n];
        const cplx out = (nb > 0 ? tf.b[0] : 0.0) * in + state[0];
        for (std::size_t k = 1; k <= order; ++k) {
            const double bk = k < nb ? tf.b[k] : 0.0;
            const double ak = k < na ? tf.a[k] : 0.0;
            state[k - 1] = bk * in - ak * out + state[k];
        }
        y[n] = out;
    }
    return y;
}

}  // namespace rfat
