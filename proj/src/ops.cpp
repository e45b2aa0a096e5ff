// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "pep/errors.hpp"

namespace pep {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

void accumulate(Node& input, const Tensor& delta) {
  if (!input.requires_grad) return;
  Tensor& g = input.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// Column buffer [C*k*k, out_h*out_w] of a [C,H,W] map.
void im2col(const double* x, int channels, int h, int w, int k, int stride, int pad, int out_h,
            int out_w, double* col) {
  const int out_area = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * out_area;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + ki;
          double* dst = row + oh * out_w;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * h + ih) * w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kj;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int channels, int h, int w, int k, int stride, int pad, int out_h,
            int out_w, double* x) {
  const int out_area = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * out_area;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          double* dst = x + (static_cast<std::size_t>(c) * h + ih) * w;
          const double* src = row + oh * out_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

struct AxisWeights {
  std::vector<int> lo, hi;
  std::vector<double> w_lo, w_hi;
};

AxisWeights bilinear_axis(int in, int out) {
  AxisWeights a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.w_lo.resize(out);
  a.w_hi.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    int hi = std::min(lo + 1, in - 1);
    double frac = src - lo;
    a.lo[o] = lo;
    a.hi[o] = hi;
    a.w_lo[o] = 1.0 - frac;
    a.w_hi[o] = frac;
  }
  return a;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& logits) {
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
  return out;
}

Tensor softmax_channels(const Tensor& logits) {
  if (logits.rank() < 1) throw ShapeError("softmax_channels: scalar input");
  const int c = logits.dim(0);
  const std::size_t positions = logits.size() / std::max(c, 1);
  Tensor out(logits.shape());
  for (std::size_t p = 0; p < positions; ++p) {
    double m = -INFINITY;
    for (int k = 0; k < c; ++k) m = std::max(m, logits[k * positions + p]);
    double z = 0.0;
    for (int k = 0; k < c; ++k) {
      const double e = std::exp(logits[k * positions + p] - m);
      out[k * positions + p] = e;
      z += e;
    }
    for (int k = 0; k < c; ++k) out[k * positions + p] /= z;
  }
  return out;
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return make_result(std::move(out), {a}, [factor](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

namespace {
thread_local ReluPatternRecorder* g_relu_recorder = nullptr;
}

ReluPatternRecorder::ReluPatternRecorder() : previous_(g_relu_recorder) { g_relu_recorder = this; }
ReluPatternRecorder::~ReluPatternRecorder() { g_relu_recorder = previous_; }

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  if (g_relu_recorder != nullptr) {
    std::uint64_t h = g_relu_recorder->hash_;
    for (double v : out.values()) {
      h ^= v > 0.0 ? 1u : 2u;
      h *= 1099511628211ull;
    }
    g_relu_recorder->hash_ = h;
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var sum_all(const Var& x) {
  return make_result(Tensor({1}, x.value().sum()), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) throw ShapeError("weighted_sum: non-scalar term");
    total += weights[i] * terms[i].value()[0];
  }
  return make_result(Tensor({1}, total), terms, [weights](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node& in = *self.inputs[i];
      if (in.requires_grad) in.grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(xv, 3, "conv2d input");
  require_rank(wv, 4, "conv2d weight");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const int o = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != c) {
    throw ShapeError("conv2d: input has " + std::to_string(c) + " channels, weight expects " +
                     std::to_string(wv.dim(1)));
  }
  if (wv.dim(3) != k) throw ShapeError("conv2d: non-square kernel");
  if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != o)) {
    throw ShapeError("conv2d: bias shape " + shape_to_string(bias.shape()));
  }
  const int out_h = (h + 2 * padding - k) / stride + 1;
  const int out_w = (w + 2 * padding - k) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: empty output");
  const int area = out_h * out_w;
  const int patch = c * k * k;

  const bool pointwise = (k == 1 && stride == 1 && padding == 0);
  auto col = std::make_shared<std::vector<double>>();
  const double* col_ptr = xv.data();
  if (!pointwise) {
    col->resize(static_cast<std::size_t>(patch) * area);
    im2col(xv.data(), c, h, w, k, stride, padding, out_h, out_w, col->data());
    col_ptr = col->data();
  }

  Tensor out({o, out_h, out_w});
  MatrixMap out_m(out.data(), o, area);
  ConstMatrixMap w_m(wv.data(), o, patch);
  ConstMatrixMap col_m(col_ptr, patch, area);
  out_m.noalias() = w_m * col_m;
  if (bias.defined()) {
    for (int i = 0; i < o; ++i) out_m.row(i).array() += bias.value()[i];
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), inputs,
                     [col, pointwise, c, h, w, k, stride, padding, out_h, out_w, o, patch,
                      area](Node& self) {
                       Node& xn = *self.inputs[0];
                       Node& wn = *self.inputs[1];
                       ConstMatrixMap g(self.grad.data(), o, area);
                       const double* col_ptr = pointwise ? xn.value.data() : col->data();
                       ConstMatrixMap col_m(col_ptr, patch, area);
                       if (wn.requires_grad) {
                         MatrixMap gw(wn.grad_buffer().data(), o, patch);
                         gw.noalias() += g * col_m.transpose();
                       }
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         VectorMap gb(self.inputs[2]->grad_buffer().data(), o);
                         gb += g.rowwise().sum();
                       }
                       if (xn.requires_grad) {
                         ConstMatrixMap w_m(wn.value.data(), o, patch);
                         if (pointwise) {
                           MatrixMap gx(xn.grad_buffer().data(), patch, area);
                           gx.noalias() += w_m.transpose() * g;
                         } else {
                           RowMatrix gcol = w_m.transpose() * g;
                           col2im(gcol.data(), c, h, w, k, stride, padding, out_h, out_w,
                                  xn.grad_buffer().data());
                         }
                       }
                     });
}

Var broadcast_conv_window(const Var& d, const Var& weight, int full_h, int full_w, int row0,
                          int col0, int h, int w, int padding) {
  const Tensor& dv = d.value();
  const Tensor& wv = weight.value();
  require_rank(dv, 1, "broadcast_conv_window vector");
  require_rank(wv, 4, "broadcast_conv_window weight");
  const int c = dv.dim(0), o = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != c) throw ShapeError("broadcast_conv_window: channel mismatch");
  if (row0 < 0 || col0 < 0 || row0 + h > full_h || col0 + w > full_w || h <= 0 || w <= 0) {
    throw ShapeError("broadcast_conv_window: window outside grid");
  }
  const int taps = k * k;
  // taps_out[t][o] = Σ_c W[o,c,t] d[c]
  RowMatrix tap_out(taps, o);
  for (int oo = 0; oo < o; ++oo) {
    for (int t = 0; t < taps; ++t) {
      double s = 0.0;
      for (int cc = 0; cc < c; ++cc) s += wv[(static_cast<std::size_t>(oo) * c + cc) * taps + t] * dv[cc];
      tap_out(t, oo) = s;
    }
  }
  auto valid = [=](int r, int col, int t) {
    const int ir = r - padding + t / k;
    const int ic = col - padding + t % k;
    return ir >= 0 && ir < full_h && ic >= 0 && ic < full_w;
  };
  Tensor out({o, h, w});
  for (int r = 0; r < h; ++r) {
    for (int cl = 0; cl < w; ++cl) {
      for (int t = 0; t < taps; ++t) {
        if (!valid(row0 + r, col0 + cl, t)) continue;
        for (int oo = 0; oo < o; ++oo) out.at(oo, r, cl) += tap_out(t, oo);
      }
    }
  }
  return make_result(std::move(out), {d, weight}, [=](Node& self) {
    Node& dn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    RowMatrix g_tap = RowMatrix::Zero(taps, o);
    for (int r = 0; r < h; ++r) {
      for (int cl = 0; cl < w; ++cl) {
        for (int t = 0; t < taps; ++t) {
          if (!valid(row0 + r, col0 + cl, t)) continue;
          for (int oo = 0; oo < o; ++oo) g_tap(t, oo) += self.grad.at(oo, r, cl);
        }
      }
    }
    for (int oo = 0; oo < o; ++oo) {
      for (int cc = 0; cc < c; ++cc) {
        for (int t = 0; t < taps; ++t) {
          const std::size_t wi = (static_cast<std::size_t>(oo) * c + cc) * taps + t;
          if (dn.requires_grad) dn.grad_buffer()[cc] += wn.value[wi] * g_tap(t, oo);
          if (wn.requires_grad) wn.grad_buffer()[wi] += g_tap(t, oo) * dn.value[cc];
        }
      }
    }
  });
}

Var crop(const Var& x, int row0, int col0, int h, int w) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "crop");
  const int c = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (row0 < 0 || col0 < 0 || row0 + h > H || col0 + w > W || h <= 0 || w <= 0) {
    throw ShapeError("crop: window outside map");
  }
  Tensor out({c, h, w});
  for (int cc = 0; cc < c; ++cc)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) out.at(cc, r, q) = xv.at(cc, row0 + r, col0 + q);
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int cc = 0; cc < c; ++cc)
      for (int r = 0; r < h; ++r)
        for (int q = 0; q < w; ++q) g.at(cc, row0 + r, col0 + q) += self.grad.at(cc, r, q);
  });
}

Var resize_nearest(const Var& x, int out_h, int out_w) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "resize_nearest");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  std::vector<int> rows(out_h), cols(out_w);
  for (int r = 0; r < out_h; ++r) rows[r] = std::min(h - 1, static_cast<int>(static_cast<long>(r) * h / out_h));
  for (int q = 0; q < out_w; ++q) cols[q] = std::min(w - 1, static_cast<int>(static_cast<long>(q) * w / out_w));
  Tensor out({c, out_h, out_w});
  for (int cc = 0; cc < c; ++cc)
    for (int r = 0; r < out_h; ++r)
      for (int q = 0; q < out_w; ++q) out.at(cc, r, q) = xv.at(cc, rows[r], cols[q]);
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int cc = 0; cc < c; ++cc)
      for (int r = 0; r < out_h; ++r)
        for (int q = 0; q < out_w; ++q) g.at(cc, rows[r], cols[q]) += self.grad.at(cc, r, q);
  });
}

Tensor resize_bilinear(const Tensor& xv, int out_h, int out_w) {
  require_rank(xv, 3, "resize_bilinear");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const AxisWeights ay = bilinear_axis(h, out_h), ax = bilinear_axis(w, out_w);
  Tensor out({c, out_h, out_w});
  for (int cc = 0; cc < c; ++cc)
    for (int r = 0; r < out_h; ++r)
      for (int q = 0; q < out_w; ++q) {
        out.at(cc, r, q) = ay.w_lo[r] * (ax.w_lo[q] * xv.at(cc, ay.lo[r], ax.lo[q]) +
                                         ax.w_hi[q] * xv.at(cc, ay.lo[r], ax.hi[q])) +
                           ay.w_hi[r] * (ax.w_lo[q] * xv.at(cc, ay.hi[r], ax.lo[q]) +
                                         ax.w_hi[q] * xv.at(cc, ay.hi[r], ax.hi[q]));
      }
  return out;
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Tensor& xv = x.value();
  Tensor out = resize_bilinear(xv, out_h, out_w);
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (h == out_h && w == out_w) {
    return make_result(std::move(out), {x}, [](Node& self) { accumulate(*self.inputs[0], self.grad); });
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    const AxisWeights ay = bilinear_axis(h, out_h), ax = bilinear_axis(w, out_w);
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int cc = 0; cc < c; ++cc)
      for (int r = 0; r < out_h; ++r)
        for (int q = 0; q < out_w; ++q) {
          const double d = self.grad.at(cc, r, q);
          g.at(cc, ay.lo[r], ax.lo[q]) += d * ay.w_lo[r] * ax.w_lo[q];
          g.at(cc, ay.lo[r], ax.hi[q]) += d * ay.w_lo[r] * ax.w_hi[q];
          g.at(cc, ay.hi[r], ax.lo[q]) += d * ay.w_hi[r] * ax.w_lo[q];
          g.at(cc, ay.hi[r], ax.hi[q]) += d * ay.w_hi[r] * ax.w_hi[q];
        }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const int h = parts[0].value().dim(1), w = parts[0].value().dim(2);
  int channels = 0;
  for (const Var& p : parts) {
    require_rank(p.value(), 3, "concat_channels");
    if (p.value().dim(1) != h || p.value().dim(2) != w) {
      throw ShapeError("concat_channels: spatial mismatch");
    }
    channels += p.value().dim(0);
  }
  Tensor out({channels, h, w});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + off);
    off += p.value().size();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node& in = *self.inputs[i];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[offsets[i] + j];
    }
  });
}

Var gather_pixel(const Var& x, int row, int col) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "gather_pixel");
  const int c = xv.dim(0);
  if (row < 0 || row >= xv.dim(1) || col < 0 || col >= xv.dim(2)) {
    throw ShapeError("gather_pixel: location outside map");
  }
  Tensor out({c});
  for (int cc = 0; cc < c; ++cc) out[cc] = xv.at(cc, row, col);
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int cc = 0; cc < c; ++cc) g.at(cc, row, col) += self.grad[cc];
  });
}

Var append_constant(const Var& v, const std::vector<double>& extra) {
  require_rank(v.value(), 1, "append_constant");
  const int n = v.value().dim(0);
  std::vector<double> values(v.value().values().begin(), v.value().values().end());
  values.insert(values.end(), extra.begin(), extra.end());
  const int total = static_cast<int>(values.size());
  return make_result(Tensor({total}, std::move(values)), {v},
                     [n](Node& self) {
                       Tensor& g = self.inputs[0]->grad_buffer();
                       for (int i = 0; i < n; ++i) g[i] += self.grad[i];
                     });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x.value(), 1, "linear input");
  require_rank(weight.value(), 2, "linear weight");
  const int k = x.value().dim(0), o = weight.value().dim(0);
  if (weight.value().dim(1) != k) {
    throw ShapeError("linear: input width " + std::to_string(k) + " vs weight " +
                     shape_to_string(weight.shape()));
  }
  Tensor out({o});
  ConstMatrixMap w_m(weight.value().data(), o, k);
  VectorMap(out.data(), o).noalias() = w_m * ConstVectorMap(x.value().data(), k);
  if (bias.defined()) {
    for (int i = 0; i < o; ++i) out[i] += bias.value()[i];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), inputs, [o, k](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    ConstVectorMap g(self.grad.data(), o);
    if (xn.requires_grad) {
      VectorMap(xn.grad_buffer().data(), k).noalias() +=
          ConstMatrixMap(wn.value.data(), o, k).transpose() * g;
    }
    if (wn.requires_grad) {
      MatrixMap(wn.grad_buffer().data(), o, k).noalias() +=
          g * ConstVectorMap(xn.value.data(), k).transpose();
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      VectorMap(self.inputs[2]->grad_buffer().data(), o) += g;
    }
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const int c = rows[0].value().dim(0);
  Tensor out({static_cast<int>(rows.size()), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_rank(rows[i].value(), 1, "stack_rows");
    if (rows[i].value().dim(0) != c) throw ShapeError("stack_rows: width mismatch");
    std::copy(rows[i].value().values().begin(), rows[i].value().values().end(),
              out.data() + i * c);
  }
  return make_result(std::move(out), rows, [c](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node& in = *self.inputs[i];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      for (int j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

Var transpose(const Var& x) {
  require_rank(x.value(), 2, "transpose");
  const int n = x.value().dim(0), m = x.value().dim(1);
  Tensor out({m, n});
  MatrixMap(out.data(), m, n) = ConstMatrixMap(x.value().data(), n, m).transpose();
  return make_result(std::move(out), {x}, [n, m](Node& self) {
    MatrixMap(self.inputs[0]->grad_buffer().data(), n, m) +=
        ConstMatrixMap(self.grad.data(), m, n).transpose();
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a.value(), 2, "matmul lhs");
  require_rank(b.value(), 2, "matmul rhs");
  const int n = a.value().dim(0), k = a.value().dim(1), m = b.value().dim(1);
  if (b.value().dim(0) != k) {
    throw ShapeError("matmul: " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  Tensor out({n, m});
  MatrixMap(out.data(), n, m).noalias() =
      ConstMatrixMap(a.value().data(), n, k) * ConstMatrixMap(b.value().data(), k, m);
  return make_result(std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    ConstMatrixMap g(self.grad.data(), n, m);
    if (an.requires_grad) {
      MatrixMap(an.grad_buffer().data(), n, k).noalias() +=
          g * ConstMatrixMap(bn.value.data(), k, m).transpose();
    }
    if (bn.requires_grad) {
      MatrixMap(bn.grad_buffer().data(), k, m).noalias() +=
          ConstMatrixMap(an.value.data(), n, k).transpose() * g;
    }
  });
}

Var scaled_gram(const Var& p, double factor, double diag_bias) {
  require_rank(p.value(), 2, "scaled_gram");
  const int n = p.value().dim(0), c = p.value().dim(1);
  Tensor out({n, n});
  ConstMatrixMap pm(p.value().data(), n, c);
  MatrixMap om(out.data(), n, n);
  om.noalias() = factor * (pm * pm.transpose());
  for (int i = 0; i < n; ++i) om(i, i) += diag_bias;
  return make_result(std::move(out), {p}, [n, c, factor](Node& self) {
    Node& pn = *self.inputs[0];
    ConstMatrixMap g(self.grad.data(), n, n);
    ConstMatrixMap pm(pn.value.data(), n, c);
    MatrixMap(pn.grad_buffer().data(), n, c).noalias() += factor * ((g + g.transpose()) * pm);
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels, Reduction reduction) {
  const Tensor& z = logits.value();
  if (z.rank() < 1 || z.dim(0) < 1) throw ShapeError("softmax_cross_entropy: empty logits");
  const int c = z.dim(0);
  const std::size_t positions = z.size() / c;
  if (labels.size() != positions) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_to_string(z.shape()));
  }
  Tensor probs = softmax_channels(z);
  double total = 0.0;
  for (std::size_t p = 0; p < positions; ++p) {
    const int y = labels[p];
    if (y < 0 || y >= c) throw ShapeError("softmax_cross_entropy: label out of range");
    total -= std::log(std::max(probs[y * positions + p], kProbEpsilon));
  }
  const double norm = (reduction == Reduction::kMean && positions > 0) ? 1.0 / positions : 1.0;
  auto shared_probs = std::make_shared<Tensor>(std::move(probs));
  return make_result(Tensor({1}, total * norm), {logits},
                     [shared_probs, labels, positions, c, norm](Node& self) {
                       Tensor& g = self.inputs[0]->grad_buffer();
                       const double d = self.grad[0] * norm;
                       for (std::size_t p = 0; p < positions; ++p) {
                         for (int k = 0; k < c; ++k) {
                           const double target = (labels[p] == k) ? 1.0 : 0.0;
                           g[k * positions + p] += d * ((*shared_probs)[k * positions + p] - target);
                         }
                       }
                     });
}

Var sigmoid_bce(const Var& logits, const Tensor& targets, Reduction reduction) {
  const Tensor& z = logits.value();
  require_same_shape(z, targets, "sigmoid_bce");
  const double log_eps = std::log(kProbEpsilon);
  const double log_one_minus_eps = std::log1p(-kProbEpsilon);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lp = std::clamp(-softplus(-z[i]), log_eps, log_one_minus_eps);
    const double lq = std::clamp(-softplus(z[i]), log_eps, log_one_minus_eps);
    total -= targets[i] * lp + (1.0 - targets[i]) * lq;
  }
  const double norm = (reduction == Reduction::kMean && z.size() > 0) ? 1.0 / z.size() : 1.0;
  return make_result(Tensor({1}, total * norm), {logits}, [targets, norm](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double d = self.grad[0] * norm;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d * (sigmoid(in.value[i]) - targets[i]);
  });
}

Var sigmoid_dice(const Var& logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  require_same_shape(z, targets, "sigmoid_dice");
  Tensor p = sigmoid(z);
  double inter = 0.0, denom = 1.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * targets[i];
    denom += p[i] + targets[i];
  }
  const double num = 2.0 * inter + 1.0;
  auto probs = std::make_shared<Tensor>(std::move(p));
  return make_result(Tensor({1}, 1.0 - num / denom), {logits},
                     [probs, targets, num, denom](Node& self) {
                       Tensor& g = self.inputs[0]->grad_buffer();
                       const double d = self.grad[0];
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double pi = (*probs)[i];
                         const double dloss_dp = -(2.0 * targets[i] * denom - num) / (denom * denom);
                         g[i] += d * dloss_dp * pi * (1.0 - pi);
                       }
                     });
}

Var flip_gradient(const Var& x) {
  return make_result(x.value(), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

}  // namespace pep
