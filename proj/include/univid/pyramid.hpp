#pragma once

#include <array>
#include <map>
#include <vector>

#include "univid/layers.hpp"
#include "univid/rng.hpp"

// Pyramid spatial-temporal modules: reference-frame sets whose density and
// temporal convolutions whose width vary with the U-Net downsampling factor.
namespace univid {

inline constexpr std::array<int, 4> kPyramidFactors{1, 2, 4, 8};

struct PyramidLevel {
  int step = 1;    // r_f: frames per temporal segment
  int kernel = 1;  // k_f: temporal convolution width, odd
};

class PyramidSchedule {
 public:
  // The 8-frame table: f -> (r, k) = 1->(4,1), 2->(2,3), 4->(1,3), 8->(1,5).
  // Reference sets get denser and temporal kernels wider toward the middle.
  static PyramidSchedule default_table();

  const PyramidLevel& at(int factor) const;
  void set(int factor, PyramidLevel level);
  const std::map<int, PyramidLevel>& entries() const { return entries_; }

  // n_f = F / r_f.
  int reference_count(int factor, int frames) const;
  // Throws DivisibilityError unless every r_f divides `frames`; ShapeError on even k.
  void validate(int frames) const;

  bool operator==(const PyramidSchedule&) const = default;

 private:
  std::map<int, PyramidLevel> entries_;
};

// Schedule to use for clips of `frames` frames. Single-frame (image) inputs use
// r = 1 everywhere; otherwise every configured step must divide `frames`.
PyramidSchedule schedule_for(int frames, const PyramidSchedule& base = PyramidSchedule::default_table());

enum class ReferenceMode { kTrainRandom, kInferMid };

// 1-based frame indices, one per temporal segment, strictly increasing.
struct ReferenceSet {
  std::vector<int> frames;
  std::vector<int64_t> zero_based() const;
};

// Splits [1..F] into F/r segments of length r and picks one frame from each:
// the floor midpoint in infer mode, a uniform draw from `rng` in train mode.
ReferenceSet build_reference_set(int frames, int step, ReferenceMode mode, Rng* rng = nullptr);

// Every query frame attends to the spatial tokens of all frames in `gamma`.
// z [B, F, C, H, W] (a single clip is B = 1). The projected update is added to
// z when `residual` is set.
ag::Var pst_attention(const ag::Var& z, const ReferenceSet& gamma, const AttentionParams& p, bool residual = true);

// Spatial stage (one or two 2D convolutions, optional pre-activation norms and
// timestep modulation) followed by a channel-mixing temporal convolution.
struct PstConvParams {
  NormParams norm1;
  ag::Var conv1_w, conv1_b;  // [Cout, Cin, kh, kw]
  NormParams norm2;
  ag::Var conv2_w, conv2_b;  // optional second conv [Cout, Cout, kh, kw]
  ag::Var temporal_w, temporal_b;  // [k, Cout, Cout]
  ag::Var skip_w, skip_b;  // optional 1x1 projection when Cin != Cout
};

struct Modulation {
  ag::Var scale, shift;  // [B, Cout]
};

// out = skip(z) + temporal(spatial(z)), or the branch alone without `residual`.
// z [B, F, Cin, H, W].
ag::Var pst_conv(const ag::Var& z, const PstConvParams& p, const Modulation* mod = nullptr, bool residual = true);

// Temporal taps with the identity at the centre tap and zero elsewhere.
Tensor dirac_taps(int kernel, int64_t channels);

}  // namespace univid
