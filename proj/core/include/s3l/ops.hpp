#pragma once

#include <vector>

#include "s3l/tensor.hpp"

namespace s3l {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a*x + b, elementwise.
Tensor affine(const Tensor& x, double a, double b);
Tensor relu(const Tensor& x);

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int64_t> shape);
/// Concatenate [N,p] and [N,q] along columns.
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Concatenate along the leading axis; trailing dims must agree.
Tensor concat_rows(const Tensor& a, const Tensor& b);
/// Single element as a scalar tensor (differentiable pick).
Tensor pick(const Tensor& x, std::vector<int64_t> idx);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- linear algebra --------------------------------------------------------

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m,k] x [n,k]^T -> [m,n]  (similarity against a bank of row vectors)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x [N,in], w [out,in], b [out] -> [N,out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Row-by-row dot product of two [N,d] tensors -> [N].
Tensor rowwise_dot(const Tensor& a, const Tensor& b);

// ---- convolution & pooling -------------------------------------------------

/// x NCHW, w OIHW; symmetric stride/padding.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding);
Tensor max_pool2d(const Tensor& x, int kernel, int stride, int padding);
/// NCHW -> [N,C]
Tensor global_avg_pool(const Tensor& x);

// ---- normalization ---------------------------------------------------------

/// Running statistics of a batch-norm layer; plain buffers, never in a graph.
struct BnStats {
    Tensor mean;  // [C]
    Tensor var;   // [C]
};

/// x NCHW (or [N,C] for the 1-d case), gamma/beta [C]. Train mode normalizes
/// by batch statistics (differentiable through them) and, when `stats` is
/// non-null, folds them into the running averages; eval mode normalizes by
/// the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnStats* stats,
                  bool train, double momentum = 0.1, double eps = 1e-5);

/// Unit L2 norm along `axis`; fibers with norm <= 1e-12 are an error.
Tensor l2_normalize(const Tensor& x, int axis);

// ---- losses ----------------------------------------------------------------

Tensor softmax(const Tensor& logits);
/// Mean over rows of -log softmax(logits)[target], computed via max-shifted
/// log-sum-exp.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets);
/// Soft-target variant; each target row must sum to 1 (+-1e-6).
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& soft_targets);

namespace detail {
/// C (m x n, row-major) = alpha * op(A) op(B) + (accumulate ? C : 0).
/// Backed by Eigen; single-threaded, bit-deterministic for fixed shapes.
void gemm_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
              bool trans_a, bool trans_b, bool accumulate);
void gemm_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
              bool trans_a, bool trans_b, bool accumulate);

int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t padding);
}  // namespace detail

}  // namespace s3l
