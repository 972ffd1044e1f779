#pragma once

#include <vector>

#include "univid/tensor.hpp"

// Desk-scale quality proxies. None of these is comparable to FVD, IS or FID.
namespace univid {

inline constexpr double kPsnrCap = 99.0;

struct PsnrReport {
  std::vector<double> per_frame;
  double mean = 0.0;
};

// 10 log10(1 / MSE) per frame, capped at 99 dB for identical frames.
// Videos are [F, C, H, W]; a [C, H, W] image counts as one frame.
PsnrReport psnr(const Tensor& a, const Tensor& b);
double psnr_db(const float* a, const float* b, int64_t n);

// PSNR of generated frame 0 against the reference image [C, H, W].
double first_frame_fidelity(const Tensor& generated, const Tensor& reference);

// Mean over consecutive frame pairs of mean |x_{i+1} - x_i|. Needs F >= 2.
double temporal_smoothness(const Tensor& video);

}  // namespace univid
