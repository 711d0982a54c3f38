#include "mttt/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace mttt {

namespace {

// FFTW planning is not thread-safe; execution through the new-array
// interface is. Plans live for the process lifetime.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(const Shape& dims, FftDirection dir) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(dims, dir);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<int> n(dims.begin(), dims.end());
    std::vector<cplx> scratch(shape_size(dims));
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft(static_cast<int>(n.size()), n.data(), buf, buf,
                                   dir == FftDirection::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw Error("fftw: planning failed for " + shape_string(dims));
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }
  std::mutex mutex_;
  std::map<std::tuple<Shape, FftDirection>, fftw_plan> plans_;
};

void execute(fftw_plan plan, cplx* data) {
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace

void fft_inplace(std::vector<cplx>& data, const Shape& dims, FftDirection dir) {
  if (data.size() != shape_size(dims)) throw ShapeError("fft_inplace: size mismatch");
  execute(PlanCache::instance().get(dims, dir), data.data());
}

ComplexVolume fft_centered(const ComplexVolume& v, const std::vector<std::size_t>& axes,
                           FftDirection dir) {
  ComplexVolume out = v;
  const Shape& shape = v.shape();
  for (std::size_t axis : axes) {
    if (axis >= shape.size())
      throw ShapeError("fft_centered: axis " + std::to_string(axis) + " invalid for shape " +
                       shape_string(shape));
  }
  std::vector<cplx> line;
  for (std::size_t axis : axes) {
    const std::size_t n = shape[axis];
    if (n == 1) continue;
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
    const std::size_t outer = v.size() / (n * inner);
    const std::size_t half = n / 2;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    fftw_plan plan = PlanCache::instance().get(Shape{n}, dir);
    line.resize(n);
    auto& data = out.values();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        // ifftshift: centered index m maps to (m - half) mod n
        for (std::size_t m = 0; m < n; ++m) line[(m + n - half) % n] = data[base + m * inner];
        execute(plan, line.data());
        // fftshift: raw index j maps to (j + half) mod n
        for (std::size_t j = 0; j < n; ++j) data[base + ((j + half) % n) * inner] = line[j] * scale;
      }
    }
  }
  return out;
}

ComplexVolume fft_centered(const ComplexVolume& v, FftDirection dir) {
  std::vector<std::size_t> axes(v.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return fft_centered(v, axes, dir);
}

}  // namespace mttt
