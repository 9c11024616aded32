#include "ysf/nn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

namespace ysf::nn {

namespace {
using RowMajorMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMajorMat>;
using CMap = Eigen::Map<const RowMajorMat>;
}  // namespace

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  CMap A(a, m, k);
  CMap B(b, k, n);
  Map C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  CMap A(a, k, m);
  CMap B(b, k, n);
  Map C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  CMap A(a, m, k);
  CMap B(b, n, k);
  Map C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

int conv_out_side(int in_side, int k, int stride, int pad) {
  return (in_side + 2 * pad - k) / stride + 1;
}

int tconv_out_side(int in_side, int k, int stride, int pad, int out_pad) {
  return (in_side - 1) * stride - 2 * pad + k + out_pad;
}

void im2col(const float* src, int c, int h, int w, int k, int stride, int pad,
            int out_h, int out_w, float* col) {
  const size_t plane_out = static_cast<size_t>(out_h) * out_w;
  for (int ch = 0; ch < c; ++ch) {
    const float* plane = src + static_cast<size_t>(ch) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + (static_cast<size_t>(ch) * k * k + ky * k + kx) * plane_out;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          float* drow = dst + static_cast<size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::memset(drow, 0, sizeof(float) * out_w);
            continue;
          }
          const float* srow = plane + static_cast<size_t>(iy) * w;
          if (stride == 1) {
            const int ox0 = std::max(0, pad - kx);
            const int ox1 = std::min(out_w, w + pad - kx);
            for (int ox = 0; ox < ox0; ++ox) drow[ox] = 0.f;
            if (ox1 > ox0)
              std::memcpy(drow + ox0, srow + ox0 + kx - pad, sizeof(float) * (ox1 - ox0));
            for (int ox = std::max(ox0, ox1); ox < out_w; ++ox) drow[ox] = 0.f;
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride + kx - pad;
              drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.f;
            }
          }
        }
      }
    }
  }
}

void col2im(const float* col, int c, int h, int w, int k, int stride, int pad,
            int out_h, int out_w, float* dst) {
  const size_t plane_out = static_cast<size_t>(out_h) * out_w;
  for (int ch = 0; ch < c; ++ch) {
    float* plane = dst + static_cast<size_t>(ch) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + (static_cast<size_t>(ch) * k * k + ky * k + kx) * plane_out;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const float* srow = src + static_cast<size_t>(oy) * out_w;
          float* drow = plane + static_cast<size_t>(iy) * w;
          if (stride == 1) {
            const int ox0 = std::max(0, pad - kx);
            const int ox1 = std::min(out_w, w + pad - kx);
            for (int ox = ox0; ox < ox1; ++ox) drow[ox + kx - pad] += srow[ox];
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

Conv2d Conv2d::plain(int in_c, int out_c, int k, int stride, int pad) {
  Conv2d conv;
  conv.in_c = in_c;
  conv.out_c = out_c;
  conv.k = k;
  conv.stride = stride;
  conv.pad = pad;
  conv.transposed = false;
  conv.w = Tensor({out_c, static_cast<int64_t>(in_c) * k * k});
  conv.b = Tensor({out_c});
  return conv;
}

Conv2d Conv2d::make_transposed(int in_c, int out_c, int stride) {
  Conv2d conv;
  conv.in_c = in_c;
  conv.out_c = out_c;
  conv.k = 3;
  conv.stride = stride;
  conv.pad = 1;
  conv.out_pad = stride == 2 ? 1 : 0;
  conv.transposed = true;
  conv.w = Tensor({in_c, static_cast<int64_t>(out_c) * 9});
  conv.b = Tensor({out_c});
  return conv;
}

void Conv2d::init_params(Rng& rng) {
  const float bound = 1.f / std::sqrt(static_cast<float>(in_c) * k * k);
  for (float& v : w.data) v = rng.uniform(-bound, bound);
  b.zero();
}

void Conv2d::alloc_grads() {
  gw = Tensor(w.shape);
  gb = Tensor(b.shape);
}

int Conv2d::out_side(int in_side) const {
  return transposed ? tconv_out_side(in_side, k, stride, pad, out_pad)
                    : conv_out_side(in_side, k, stride, pad);
}

size_t Conv2d::col_elems(int in_side) const {
  const int os = out_side(in_side);
  if (transposed)
    return static_cast<size_t>(out_c) * k * k * in_side * in_side;
  return static_cast<size_t>(in_c) * k * k * os * os;
}

void Conv2d::forward(const float* x, int in_side, float* y, Scratch& ws) const {
  const int os = out_side(in_side);
  const int out_hw = os * os;
  const int in_hw = in_side * in_side;
  if (!transposed) {
    const int kk = in_c * k * k;
    float* col = ws.ensure(static_cast<size_t>(kk) * out_hw);
    im2col(x, in_c, in_side, in_side, k, stride, pad, os, os, col);
    gemm_nn(out_c, out_hw, kk, w.ptr(), col, y, false);
  } else {
    const int kk = out_c * k * k;
    float* col = ws.ensure(static_cast<size_t>(kk) * in_hw);
    // col = W^T * x, then scatter into the (larger) output plane.
    gemm_tn(kk, in_hw, in_c, w.ptr(), x, col, false);
    std::memset(y, 0, sizeof(float) * out_c * out_hw);
    col2im(col, out_c, os, os, k, stride, pad, in_side, in_side, y);
  }
  for (int c = 0; c < out_c; ++c) {
    const float bias = b.data[c];
    float* row = y + static_cast<size_t>(c) * out_hw;
    for (int i = 0; i < out_hw; ++i) row[i] += bias;
  }
}

void Conv2d::backward_data(const float* dy, int in_side, float* dx, Scratch& ws) const {
  const int os = out_side(in_side);
  const int out_hw = os * os;
  const int in_hw = in_side * in_side;
  if (!transposed) {
    const int kk = in_c * k * k;
    float* col = ws.ensure(static_cast<size_t>(kk) * out_hw);
    gemm_tn(kk, out_hw, out_c, w.ptr(), dy, col, false);
    std::memset(dx, 0, sizeof(float) * in_c * in_hw);
    col2im(col, in_c, in_side, in_side, k, stride, pad, os, os, dx);
  } else {
    const int kk = out_c * k * k;
    float* col = ws.ensure(static_cast<size_t>(kk) * in_hw);
    im2col(dy, out_c, os, os, k, stride, pad, in_side, in_side, col);
    gemm_nn(in_c, in_hw, kk, w.ptr(), col, dx, false);
  }
}

void Conv2d::backward_params(const float* x, const float* dy, int in_side, float* gw_slot,
                             float* gb_slot, Scratch& ws) const {
  const int os = out_side(in_side);
  const int out_hw = os * os;
  const int in_hw = in_side * in_side;
  if (!transposed) {
    const int kk = in_c * k * k;
    float* col = ws.ensure(static_cast<size_t>(kk) * out_hw);
    im2col(x, in_c, in_side, in_side, k, stride, pad, os, os, col);
    gemm_nt(out_c, kk, out_hw, dy, col, gw_slot, true);
  } else {
    const int kk = out_c * k * k;
    float* col = ws.ensure(static_cast<size_t>(kk) * in_hw);
    im2col(dy, out_c, os, os, k, stride, pad, in_side, in_side, col);
    gemm_nt(in_c, kk, in_hw, x, col, gw_slot, true);
  }
  for (int c = 0; c < out_c; ++c) {
    const float* row = dy + static_cast<size_t>(c) * out_hw;
    double s = 0.0;
    for (int i = 0; i < out_hw; ++i) s += row[i];
    gb_slot[c] += static_cast<float>(s);
  }
}

void ConvBlock::init(Rng& rng) {
  conv.init_params(rng);
  gamma = Tensor({conv.out_c});
  beta = Tensor({conv.out_c});
  run_mean = Tensor({conv.out_c});
  run_var = Tensor({conv.out_c});
  gamma.fill(1.f);
  run_var.fill(1.f);
}

void ConvBlock::alloc_grads() {
  conv.alloc_grads();
  ggamma = Tensor({conv.out_c});
  gbeta = Tensor({conv.out_c});
}

void ConvBlock::forward(const float* x, int b, int in_side, float* y, bool train,
                        Tensor* conv_out_cache, BnStats* stats_cache,
                        std::vector<Scratch>& ws, ThreadPool& pool) {
  const int os = conv.out_side(in_side);
  const int out_hw = os * os;
  const int c = conv.out_c;
  const size_t img = static_cast<size_t>(c) * out_hw;
  const size_t in_img = static_cast<size_t>(conv.in_c) * in_side * in_side;

  float* co = y;
  if (train) {
    if (static_cast<int64_t>(b) * img > conv_out_cache->numel())
      *conv_out_cache = Tensor({b, c, out_hw});
    co = conv_out_cache->ptr();
  }

  pool.parallel_ranges(b, [&](int slot, int64_t lo, int64_t hi) {
    Scratch& scratch = ws[slot];
    for (int64_t i = lo; i < hi; ++i)
      conv.forward(x + i * in_img, in_side, co + i * img, scratch);
  });

  std::vector<float> mean(c), invstd(c);
  if (train) {
    const double n = static_cast<double>(b) * out_hw;
    pool.parallel_for(c, [&](int64_t ch) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < b; ++i) {
        const float* row = co + i * img + static_cast<size_t>(ch) * out_hw;
        for (int j = 0; j < out_hw; ++j) {
          const double v = row[j];
          s += v;
          s2 += v * v;
        }
      }
      const double m = s / n;
      const double var = std::max(0.0, s2 / n - m * m);
      mean[ch] = static_cast<float>(m);
      invstd[ch] = static_cast<float>(1.0 / std::sqrt(var + bn_eps));
      run_mean.data[ch] = (1.f - bn_momentum) * run_mean.data[ch] + bn_momentum * static_cast<float>(m);
      run_var.data[ch] = (1.f - bn_momentum) * run_var.data[ch] + bn_momentum * static_cast<float>(var);
    });
    stats_cache->mean = mean;
    stats_cache->invstd = invstd;
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = run_mean.data[ch];
      invstd[ch] = 1.f / std::sqrt(run_var.data[ch] + bn_eps);
    }
  }

  pool.parallel_for(b, [&](int64_t i) {
    for (int ch = 0; ch < c; ++ch) {
      const float scale = gamma.data[ch] * invstd[ch];
      const float shift = beta.data[ch] - mean[ch] * scale;
      const float* src = co + i * img + static_cast<size_t>(ch) * out_hw;
      float* dst = y + i * img + static_cast<size_t>(ch) * out_hw;
      for (int j = 0; j < out_hw; ++j) {
        const float v = src[j] * scale + shift;
        dst[j] = v > 0.f ? v : 0.f;
      }
    }
  });
}

void ConvBlock::replay_output(const Tensor& conv_out, int b, int out_hw, const BnStats& stats,
                              float* y, ThreadPool& pool) const {
  const int c = conv.out_c;
  const size_t img = static_cast<size_t>(c) * out_hw;
  pool.parallel_for(b, [&](int64_t i) {
    for (int ch = 0; ch < c; ++ch) {
      const float scale = gamma.data[ch] * stats.invstd[ch];
      const float shift = beta.data[ch] - stats.mean[ch] * scale;
      const float* src = conv_out.ptr() + i * img + static_cast<size_t>(ch) * out_hw;
      float* dst = y + i * img + static_cast<size_t>(ch) * out_hw;
      for (int j = 0; j < out_hw; ++j) {
        const float v = src[j] * scale + shift;
        dst[j] = v > 0.f ? v : 0.f;
      }
    }
  });
}

void ConvBlock::backward(const float* x, const float* dy, int b, int in_side,
                         const Tensor& conv_out, const BnStats& stats, float* dx,
                         std::vector<Scratch>& ws, ThreadPool& pool) {
  const int os = conv.out_side(in_side);
  const int out_hw = os * os;
  const int c = conv.out_c;
  const size_t img = static_cast<size_t>(c) * out_hw;
  const size_t in_img = static_cast<size_t>(conv.in_c) * in_side * in_side;
  const double n = static_cast<double>(b) * out_hw;

  // Gradient at the conv output: ReLU mask, then batch-norm backward.
  // dconv is materialized in a temporary batch buffer.
  static thread_local std::vector<float> dconv_buf;
  if (dconv_buf.size() < static_cast<size_t>(b) * img) dconv_buf.resize(static_cast<size_t>(b) * img);
  float* dconv = dconv_buf.data();

  std::vector<float> s1(c), s2(c);
  pool.parallel_for(c, [&](int64_t ch) {
    const float m = stats.mean[ch];
    const float inv = stats.invstd[ch];
    const float scale = gamma.data[ch] * inv;
    const float shift = beta.data[ch] - m * scale;
    double sum_dz = 0.0, sum_dzx = 0.0;
    for (int i = 0; i < b; ++i) {
      const float* xrow = conv_out.ptr() + i * img + static_cast<size_t>(ch) * out_hw;
      const float* dyrow = dy + i * img + static_cast<size_t>(ch) * out_hw;
      for (int j = 0; j < out_hw; ++j) {
        const float bn_out = xrow[j] * scale + shift;
        const float dz = bn_out > 0.f ? dyrow[j] : 0.f;
        sum_dz += dz;
        sum_dzx += static_cast<double>(dz) * ((xrow[j] - m) * inv);
      }
    }
    s1[ch] = static_cast<float>(sum_dzx);
    s2[ch] = static_cast<float>(sum_dz);
    ggamma.data[ch] += s1[ch];
    gbeta.data[ch] += s2[ch];
    const float mean_dz = static_cast<float>(sum_dz / n);
    const float mean_dzx = static_cast<float>(sum_dzx / n);
    for (int i = 0; i < b; ++i) {
      const float* xrow = conv_out.ptr() + i * img + static_cast<size_t>(ch) * out_hw;
      const float* dyrow = dy + i * img + static_cast<size_t>(ch) * out_hw;
      float* drow = dconv + i * img + static_cast<size_t>(ch) * out_hw;
      for (int j = 0; j < out_hw; ++j) {
        const float bn_out = xrow[j] * scale + shift;
        const float dz = bn_out > 0.f ? dyrow[j] : 0.f;
        const float xhat = (xrow[j] - m) * inv;
        drow[j] = scale * (dz - mean_dz - xhat * mean_dzx);
      }
    }
  });

  // Per-image parameter-gradient slots, reduced in index order so the result
  // does not depend on the worker count.
  const size_t wlen = conv.w.data.size();
  const size_t blen = conv.b.data.size();
  static thread_local std::vector<float> slots;
  if (slots.size() < static_cast<size_t>(b) * (wlen + blen))
    slots.resize(static_cast<size_t>(b) * (wlen + blen));
  std::memset(slots.data(), 0, sizeof(float) * b * (wlen + blen));

  pool.parallel_ranges(b, [&](int slot, int64_t lo, int64_t hi) {
    Scratch& scratch = ws[slot];
    for (int64_t i = lo; i < hi; ++i) {
      float* gw_slot = slots.data() + i * (wlen + blen);
      float* gb_slot = gw_slot + wlen;
      conv.backward_params(x + i * in_img, dconv + i * img, in_side, gw_slot, gb_slot, scratch);
      if (dx) conv.backward_data(dconv + i * img, in_side, dx + i * in_img, scratch);
    }
  });

  for (int i = 0; i < b; ++i) {
    const float* gw_slot = slots.data() + static_cast<size_t>(i) * (wlen + blen);
    for (size_t j = 0; j < wlen; ++j) conv.gw.data[j] += gw_slot[j];
    for (size_t j = 0; j < blen; ++j) conv.gb.data[j] += gw_slot[wlen + j];
  }
}

void softmax2(const float* logits, int hw, float* prob) {
  const float* l0 = logits;
  const float* l1 = logits + hw;
  float* p0 = prob;
  float* p1 = prob + hw;
  for (int i = 0; i < hw; ++i) {
    const float m = l0[i] > l1[i] ? l0[i] : l1[i];
    const float e0 = std::exp(l0[i] - m);
    const float e1 = std::exp(l1[i] - m);
    const float inv = 1.f / (e0 + e1);
    p0[i] = e0 * inv;
    p1[i] = e1 * inv;
  }
}

}  // namespace ysf::nn
