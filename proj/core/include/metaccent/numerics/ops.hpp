#pragma once

#include <cstdint>
#include <vector>

#include "metaccent/numerics/tape.hpp"
#include "metaccent/numerics/tensor.hpp"
#include "metaccent/rng.hpp"

// Differentiable primitives. Every op takes the tape of the current forward
// pass as its first argument; pass nullptr for inference. Gradients flow to
// every input whose requires_grad flag is set.
namespace metaccent::numerics {

// [.., m, k] @ [.., k, n] -> [.., m, n]. Leading axes must match exactly, or
// either operand may be rank 2 and is then shared across the other's batch.
template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

// Elementwise with numpy-style broadcasting (extents equal or 1, aligned
// from the right).
template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, double c);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

// Max-subtracted, total on finite input; non-finite input raises
// NumericError. Negative axis counts from the end.
template <typename T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x, int axis = -1);
template <typename T>
Tensor<T> log_softmax(Tape<T>* tape, const Tensor<T>& x, int axis = -1);

// Normalizes the last axis; gain and bias are rank-1 of that extent.
template <typename T>
Tensor<T> layer_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, double eps = 1e-5);

// table is [V, E]; returns [id_shape..., E].
template <typename T>
Tensor<T> embedding_lookup(Tape<T>* tape, const Tensor<T>& table,
                           const std::vector<std::int32_t>& ids,
                           const Shape& id_shape);

// input [B, Cin, H, W], kernel [Cout, Cin, kh, kw], zero padding.
template <typename T>
Tensor<T> conv2d_strided(Tape<T>* tape, const Tensor<T>& input,
                         const Tensor<T>& kernel, int stride_h, int stride_w,
                         int pad_h, int pad_w);

// Non-overlapping pooling with stride == pool extent; a trailing window is
// clipped to the input, so the output is [B, C, ceil(H/ph), ceil(W/pw)].
template <typename T>
Tensor<T> max_pool2d(Tape<T>* tape, const Tensor<T>& input, int pool_h,
                     int pool_w);

template <typename T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts, int axis);

// perm maps output axis -> input axis.
template <typename T>
Tensor<T> transpose(Tape<T>* tape, const Tensor<T>& x,
                    const std::vector<int>& perm);

// Pure view: shares the buffer (and therefore the tape node) of x.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape);

// Full reduction to a scalar.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x);

// logits [..., V]; targets/pad_mask flat over the leading axes, mask value 1
// excludes a position. Returns mean over unmasked positions of
// -log softmax(logits)[target]; masked positions get exactly zero gradient.
template <typename T>
Tensor<T> cross_entropy_masked(Tape<T>* tape, const Tensor<T>& logits,
                               const std::vector<std::int32_t>& targets,
                               const std::vector<std::uint8_t>& pad_mask);

// Inverted dropout: keeps with probability 1-rate and rescales by
// 1/(1-rate). rate <= 0 returns x unchanged.
template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double rate, Rng& rng);

}  // namespace metaccent::numerics
