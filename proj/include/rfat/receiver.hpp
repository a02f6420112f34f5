#pragma once

#include <span>

#include "rfat/signal.hpp"

namespace rfat {

// Receiver-side DSP run on the digitized frame before the quality metrics.

/// Subtract the sample mean.
CVec remove_dc(std::span<const cplx> samples);

/// Data-aided removal of a residual carrier-frequency rotation from symbol
/// estimates: lag-1 coarse estimate, then a least-squares fit of block phases.
/// Estimates are unambiguous for offsets below half the symbol rate.
CVec derotate_residual_carrier(std::span<const cplx> symbols, std::span<const cplx> reference);

/// Matched filter at the frame's symbol instants, then a joint data-aided
/// estimate of the constant offset and the residual carrier rotation, both removed.
CVec receive_symbols(const IqFrame& frame);

/// EVM of `receive_symbols(frame)` against the frame's reference symbols.
double receiver_evm(const IqFrame& frame);

}  // namespace rfat
