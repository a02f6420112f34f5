#pragma once

#include <span>
#include <vector>

#include "rfat/signal.hpp"

namespace rfat {

/// Rational digital transfer function H(z) = B(z^-1) / A(z^-1), with a[0] = 1.
struct TransferFunction {
    std::vector<double> b;
    std::vector<double> a;

    cplx response(double freq_hz, double sample_rate_hz) const;
    double response_db(double freq_hz, double sample_rate_hz) const;
    /// Group delay at DC, in samples.
    double group_delay_dc() const;
    /// Roots of A(z), via the companion matrix.
    CVec poles() const;
};

/// Butterworth low-pass via the bilinear transform, prewarped so the -3 dB
/// point lands exactly on `cutoff_hz`. Unity gain at DC.
TransferFunction design_butterworth_lowpass(double cutoff_hz, double sample_rate_hz, int order = 4);

/// Direct-form filtering of a complex sequence from zero initial state.
CVec apply_transfer_function(const TransferFunction& tf, std::span<const cplx> x);

}  // namespace rfat
