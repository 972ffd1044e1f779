#pragma once

#include <span>
#include <vector>

#include "univid/autograd.hpp"

// Differentiable operators. Layout conventions:
//   images / frames  [N, C, H, W]
//   video            [B, F, C, H, W]  (per-frame ops view it as [B*F, C, H, W])
//   token sequences  [B, L, D]
namespace univid::ag {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
// x + y where y's shape equals the trailing dims of x.
Var add_broadcast(const Var& x, const Var& y);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, std::span<const int> perm);
Var permute(const Var& x, std::initializer_list<int> perm);
// Selects entries of `axis` in the given order.
Var gather(const Var& x, int axis, std::span<const int64_t> index);
Var concat(const std::vector<Var>& xs, int axis);

// y[..., o] = sum_i x[..., i] w[i, o] + b[o]; b may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);
// Zero-padded 2D convolution. x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);
// Channel-mixing convolution along frames with zero padding and same output
// length. x [B,F,Cin,H,W], w [k,Cout,Cin] (k odd), b [Cout] or undefined. Taps
// that fall outside [0, F) read padding, so k may exceed 2F-1.
Var temporal_conv(const Var& x, const Var& w, const Var& b);

// Per-sample group normalisation over (C/groups, spatial...). x [N, C, ...].
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps = 1e-5f);
Var silu(const Var& x);
// x [B*F, C, ...] -> x * (1 + scale[b, c]) + shift[b, c]; scale/shift [B, C].
Var modulate(const Var& x, const Var& scale, const Var& shift);

// Scaled dot-product attention, heads split out of the last dimension.
// q [B,Lq,H*d], k [B,Lk,H*d], v [B,Lk,H*dv] -> [B,Lq,H*dv]. Lk must be > 0.
Var attention(const Var& q, const Var& k, const Var& v, int heads);

// Rows of table [V, D] for each id -> [ids.size(), D].
Var embedding(const Var& table, std::span<const int64_t> ids);

// Scalar mean((a - b)^2).
Var mse(const Var& a, const Var& b);
// Scalar sum(x * w) with constant weights.
Var weighted_sum(const Var& x, const Tensor& w);

}  // namespace univid::ag
