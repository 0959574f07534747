#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mtal/autodiff.hpp"

namespace mtal {

enum class Padding { Valid, Same };

// Pool windows that do not divide the input are an error under Strict; Floor
// drops the trailing rows/columns.
enum class PoolPolicy { Strict, Floor };

// Stride-1 cross-correlation. input [N,C,H,W], kernels [M,C,kh,kw], bias [M].
// Same padding needs odd kernel extents and keeps H,W.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias,
              Padding padding = Padding::Same);

// input [N,F] x weight [F,G] + bias [G].
template <typename T>
Var<T> dense(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

// input [N,F] x weight [F,G].
template <typename T>
Var<T> matmul(const Var<T>& input, const Var<T>& weight);

template <typename T>
Var<T> relu(const Var<T>& input);

template <typename T>
Var<T> sigmoid(const Var<T>& input);

// Non-overlapping window x window max pooling over [N,C,H,W]. Gradient goes to
// the first maximum in each window.
template <typename T>
Var<T> max_pool2d(const Var<T>& input, std::size_t window,
                  PoolPolicy policy = PoolPolicy::Strict);

// [N, ...] -> [N, prod(...)].
template <typename T>
Var<T> flatten(const Var<T>& input);

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape);

// Mean over the batch of -log softmax(logits)[label]. logits [N,c].
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels);

template <typename T>
Var<T> sum(const Var<T>& input);

// Sum of squared elements (squared Frobenius norm).
template <typename T>
Var<T> sum_squares(const Var<T>& input);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

// Elementwise sum of equally shaped tensors, accumulated left to right.
template <typename T>
Var<T> add_n(std::span<const Var<T>> terms);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& input, double factor);

// Slice index along axis 0: [A, ...] -> [...].
template <typename T>
Var<T> select(const Var<T>& input, std::size_t index);

// Inverse of select: k tensors of shape S -> [k, S...].
template <typename T>
Var<T> stack(std::span<const Var<T>> parts);

// sum_c coeffs[row, c] * terms[c]; coeffs is [R, C] and all terms share a
// shape. Differentiable in the terms and in the coefficient row.
template <typename T>
Var<T> mix(std::span<const Var<T>> terms, const Var<T>& coeffs, std::size_t row);

}  // namespace mtal
