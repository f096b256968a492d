#pragma once

#include <vector>

#include "peftser/tensor.hpp"

namespace peftser {

// Differentiable primitives. Every op validates shapes (DimensionError names
// both offenders), computes the value, and records its backward rule on the
// active tape when any operand participates in gradients.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// Elementwise with trailing-dimension broadcast of `b`: shapes must be equal,
// or `b` is a one-element scalar, or `b.shape` is a suffix of `a.shape`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, int64_t axis);
// Normalizes the last axis to zero mean / unit variance (epsilon 1e-5 inside
// the square root), then applies the per-feature affine gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Removes `axis`; a full reduction yields shape [1].
Tensor mean(const Tensor& x, int64_t axis);
Tensor sum(const Tensor& x);

// Mean negative log softmax probability of the true class; logits [n x C],
// one label per row in [0, C).
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, int64_t start, int64_t len);
Tensor slice_cols(const Tensor& x, int64_t start, int64_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Stacks k rank-1 tensors of length d into [k x d].
Tensor stack_rows(const std::vector<Tensor>& rows);

Tensor reshape(const Tensor& x, Shape new_shape);

namespace kernels {

// C = A B, A [m x k] row-major, B [k x n], C [m x n] (overwritten).
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// GA += GC B^T, GC [m x n], B [k x n], GA [m x k].
void matmul_nt_acc(const double* gc, const double* b, double* ga, int64_t m, int64_t k, int64_t n);
// GB += A^T GC, A [m x k], GC [m x n], GB [k x n].
void matmul_tn_acc(const double* a, const double* gc, double* gb, int64_t m, int64_t k, int64_t n);

} // namespace kernels

} // namespace peftser
