#include "univid/eval.hpp"

#include <cmath>

#include "univid/error.hpp"

namespace univid {

double psnr_db(const float* a, const float* b, int64_t n) {
  if (n <= 0) throw ShapeError("psnr of an empty frame");
  double se = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(n);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

PsnrReport psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.rank() != 3 && a.rank() != 4) throw ShapeError("psnr needs [F, C, H, W] or [C, H, W]");
  const int64_t frames = a.rank() == 4 ? a.dim(0) : 1;
  const int64_t n = a.numel() / frames;
  PsnrReport r;
  for (int64_t f = 0; f < frames; ++f) r.per_frame.push_back(psnr_db(a.data() + f * n, b.data() + f * n, n));
  for (double v : r.per_frame) r.mean += v;
  r.mean /= static_cast<double>(frames);
  return r;
}

double first_frame_fidelity(const Tensor& generated, const Tensor& reference) {
  if (generated.rank() != 4 || reference.rank() != 3 || generated.dim(1) != reference.dim(0) ||
      generated.dim(2) != reference.dim(1) || generated.dim(3) != reference.dim(2)) {
    throw ShapeError("first_frame_fidelity: " + shape_str(generated.shape()) + " vs reference " +
                     shape_str(reference.shape()));
  }
  return psnr_db(generated.data(), reference.data(), reference.numel());
}

double temporal_smoothness(const Tensor& video) {
  if (video.rank() != 4) throw ShapeError("temporal_smoothness needs [F, C, H, W]");
  const int64_t F = video.dim(0);
  if (F < 2) throw ShapeError("temporal_smoothness needs at least two frames");
  const int64_t n = video.numel() / F;
  double total = 0.0;
  for (int64_t f = 0; f + 1 < F; ++f) {
    double s = 0.0;
    const float* a = video.data() + f * n;
    const float* b = a + n;
    for (int64_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(b[i]) - a[i]);
    total += s / static_cast<double>(n);
  }
  return total / static_cast<double>(F - 1);
}

}  // namespace univid
