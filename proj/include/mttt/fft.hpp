#pragma once

#include <vector>

#include "mttt/complex_volume.hpp"

namespace mttt {

enum class FftDirection { Forward, Inverse };

/// Unitary centered DFT along `axes`: fftshift ∘ FFT ∘ ifftshift with a
/// 1/√n scale per transformed axis. Index i corresponds to the centered
/// coordinate i − ⌊n/2⌋ both in image space and in frequency space.
ComplexVolume fft_centered(const ComplexVolume& v, const std::vector<std::size_t>& axes,
                           FftDirection dir = FftDirection::Forward);

/// fft_centered over every axis.
ComplexVolume fft_centered(const ComplexVolume& v, FftDirection dir = FftDirection::Forward);

/// Unnormalized, unshifted in-place DFT over a dense row-major grid of up to
/// three axes (forward uses e^{-i…}). Used by the gridding NUFFT.
void fft_inplace(std::vector<cplx>& data, const Shape& dims, FftDirection dir);

}  // namespace mttt
