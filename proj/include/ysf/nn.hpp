#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ysf/parallel.hpp"
#include "ysf/rng.hpp"
#include "ysf/tensor.hpp"

namespace ysf::nn {

// C = A * B (optionally accumulating), row-major contiguous.
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C = A^T * B with A stored [k x m].
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C = A * B^T with B stored [n x k].
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);

int conv_out_side(int in_side, int k, int stride, int pad);
int tconv_out_side(int in_side, int k, int stride, int pad, int out_pad);

// src [c,h,w] -> col [(c*k*k) x (out_h*out_w)].
void im2col(const float* src, int c, int h, int w, int k, int stride, int pad,
            int out_h, int out_w, float* col);
// Adjoint scatter-add; dst [c,h,w] must be zeroed by the caller.
void col2im(const float* col, int c, int h, int w, int k, int stride, int pad,
            int out_h, int out_w, float* dst);

// Per-worker scratch for the im2col buffers.
struct Scratch {
  std::vector<float> col;
  float* ensure(size_t n) {
    if (col.size() < n) col.resize(n);
    return col.data();
  }
};

// 3x3 (or 1x1) convolution, plain or transposed, with bias. Weight layout is
// [out_c, in_c*k*k] for plain and [in_c, out_c*k*k] for transposed, matching
// the GEMM views used below.
struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1, out_pad = 0;
  bool transposed = false;
  Tensor w, b;
  Tensor gw, gb;

  static Conv2d plain(int in_c, int out_c, int k, int stride, int pad);
  static Conv2d make_transposed(int in_c, int out_c, int stride);

  void init_params(Rng& rng);
  void alloc_grads();
  int out_side(int in_side) const;
  size_t col_elems(int in_side) const;
  size_t param_elems() const { return w.data.size() + b.data.size(); }

  // Single image: x [in_c, in_side^2] -> y [out_c, out_side^2].
  void forward(const float* x, int in_side, float* y, Scratch& ws) const;
  void backward_data(const float* dy, int in_side, float* dx, Scratch& ws) const;
  // Accumulates one image's parameter gradients into caller-provided slots
  // (gw_slot sized like w, gb_slot like b).
  void backward_params(const float* x, const float* dy, int in_side, float* gw_slot,
                       float* gb_slot, Scratch& ws) const;
};

// Per-channel batch normalization statistics saved by a training forward.
struct BnStats {
  std::vector<float> mean, invstd;
};

// Conv (or transposed conv) -> batch norm -> ReLU, operating on a whole
// batch so the normalization statistics cover it.
struct ConvBlock {
  Conv2d conv;
  Tensor gamma, beta, run_mean, run_var;
  Tensor ggamma, gbeta;
  float bn_eps = 1e-5f;
  float bn_momentum = 0.1f;

  void init(Rng& rng);
  void alloc_grads();

  // x [b, in_c, in_side^2] -> y [b, out_c, out_side^2]. In training mode the
  // raw conv output and batch statistics are stored in the cache and the
  // running statistics are updated.
  void forward(const float* x, int b, int in_side, float* y, bool train,
               Tensor* conv_out_cache, BnStats* stats_cache, std::vector<Scratch>& ws,
               ThreadPool& pool);

  // dy is the gradient at the block output (post-ReLU); x is the block input
  // used for the weight gradients. Writes dx unless null (skipped for the
  // first encoder block). Parameter gradients accumulate into gw/gb/ggamma/gbeta.
  void backward(const float* x, const float* dy, int b, int in_side,
                const Tensor& conv_out, const BnStats& stats, float* dx,
                std::vector<Scratch>& ws, ThreadPool& pool);

  // Recomputes the post-ReLU output from a cached conv output (used by the
  // backward pass to reconstruct block inputs without storing them).
  void replay_output(const Tensor& conv_out, int b, int out_hw, const BnStats& stats,
                     float* y, ThreadPool& pool) const;
};

// Numerically stable 2-way softmax across the channel dimension of [2, hw].
void softmax2(const float* logits, int hw, float* prob);

}  // namespace ysf::nn
