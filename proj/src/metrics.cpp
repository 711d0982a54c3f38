#include "mttt/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace mttt {

double psnr(const ComplexVolume& reference, const ComplexVolume& estimate) {
  require_same_shape(reference, estimate, "psnr");
  double peak = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = std::abs(reference[i]);
    const double e = std::abs(estimate[i]);
    peak = std::max(peak, r);
    sq += (r - e) * (r - e);
  }
  if (peak == 0.0) throw NumericError("psnr: reference is identically zero");
  const double rmse = std::sqrt(sq / static_cast<double>(reference.size()));
  if (rmse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 20.0 * std::log10(peak / rmse));
}

}  // namespace mttt
