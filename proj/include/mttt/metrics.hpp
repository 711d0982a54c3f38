#pragma once

#include "mttt/complex_volume.hpp"

namespace mttt {

/// Returned by psnr() when the two magnitude images agree exactly.
inline constexpr double kPsnrCap = 300.0;

/// Magnitude-image PSNR in dB, normalized by the reference peak:
/// 20·log10(max|ref| / rmse(|ref| − |est|)), capped at kPsnrCap.
double psnr(const ComplexVolume& reference, const ComplexVolume& estimate);

}  // namespace mttt
