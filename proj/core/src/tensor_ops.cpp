#include "cdi/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdi/errors.hpp"

namespace cdi {

namespace {

// Sigmoid outputs are clamped to this closed float range, which is strictly
// inside (0, 1): the upper rail is the largest float below 1.
constexpr double kSigmoidLo = 1e-12;
constexpr double kSigmoidHi = 0.99999994;

Node* raw(const Tensor& t) { return t.node().get(); }

// Allocates the result node and wires requires_grad / parents from inputs.
// Parents are recorded only when the result needs grad; they both drive the
// backward traversal and keep input nodes alive for captured raw pointers.
Tensor make_result(const Shape& shape, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>(shape);
  for (const Tensor* t : inputs) {
    if (!t->defined()) throw DataError("op on an undefined tensor");
    if (t->node()->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
  }
  return Tensor::wrap(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DataError(std::string(op) + ": shape mismatch " +
                    a.shape().to_string() + " vs " + b.shape().to_string());
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_result(a.shape(), {&a, &b});
  Node* on = raw(out);
  Node* an = raw(a);
  Node* bn = raw(b);
  const std::size_t size = on->value.size();
  for (std::size_t i = 0; i < size; ++i) {
    on->value[i] = an->value[i] + bn->value[i];
  }
  if (on->requires_grad) {
    on->backward_fn = [on, an, bn, size] {
      if (an->requires_grad) {
        for (std::size_t i = 0; i < size; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        for (std::size_t i = 0; i < size; ++i) bn->grad[i] += on->grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_result(a.shape(), {&a, &b});
  Node* on = raw(out);
  Node* an = raw(a);
  Node* bn = raw(b);
  const std::size_t size = on->value.size();
  for (std::size_t i = 0; i < size; ++i) {
    on->value[i] = an->value[i] - bn->value[i];
  }
  if (on->requires_grad) {
    on->backward_fn = [on, an, bn, size] {
      if (an->requires_grad) {
        for (std::size_t i = 0; i < size; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        for (std::size_t i = 0; i < size; ++i) bn->grad[i] -= on->grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_result(a.shape(), {&a, &b});
  Node* on = raw(out);
  Node* an = raw(a);
  Node* bn = raw(b);
  const std::size_t size = on->value.size();
  for (std::size_t i = 0; i < size; ++i) {
    on->value[i] = an->value[i] * bn->value[i];
  }
  if (on->requires_grad) {
    // Aliased inputs (mul(x, x)) work: both writes land in the same grad
    // buffer, which is exactly the product rule for x^2.
    on->backward_fn = [on, an, bn, size] {
      if (an->requires_grad) {
        for (std::size_t i = 0; i < size; ++i) {
          an->grad[i] += bn->value[i] * on->grad[i];
        }
      }
      if (bn->requires_grad) {
        for (std::size_t i = 0; i < size; ++i) {
          bn->grad[i] += an->value[i] * on->grad[i];
        }
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, float factor) {
  Tensor out = make_result(a.shape(), {&a});
  Node* on = raw(out);
  Node* an = raw(a);
  const std::size_t size = on->value.size();
  for (std::size_t i = 0; i < size; ++i) on->value[i] = factor * an->value[i];
  if (on->requires_grad) {
    on->backward_fn = [on, an, size, factor] {
      for (std::size_t i = 0; i < size; ++i) {
        an->grad[i] += factor * on->grad[i];
      }
    };
  }
  return out;
}

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Shape& bs = bias.shape();
  if (ws.h != 3 || ws.w != 3) {
    throw DataError("conv3x3: weight must be (out_c, in_c, 3, 3), got " +
                    ws.to_string());
  }
  if (ws.c != xs.c) {
    throw DataError("conv3x3: weight expects " + std::to_string(ws.c) +
                    " input channels, input has " + std::to_string(xs.c));
  }
  if (!(bs == Shape{1, ws.n, 1, 1})) {
    throw DataError("conv3x3: bias must be (1, out_c, 1, 1), got " +
                    bs.to_string());
  }

  const int batch = xs.n, in_c = xs.c, h = xs.h, w = xs.w;
  const int out_c = ws.n;
  const Shape os{batch, out_c, h, w};
  Tensor out = make_result(os, {&x, &weight, &bias});
  Node* on = raw(out);
  Node* xn = raw(x);
  Node* wn = raw(weight);
  Node* bn = raw(bias);

  const std::size_t plane = xs.plane();
  std::vector<double> acc(plane);
  for (int img = 0; img < batch; ++img) {
    const float* xbase = xn->value.data() + img * in_c * plane;
    float* obase = on->value.data() + img * out_c * plane;
    for (int o = 0; o < out_c; ++o) {
      std::ranges::fill(acc, static_cast<double>(bn->value[o]));
      for (int i = 0; i < in_c; ++i) {
        const float* src = xbase + i * plane;
        const float* taps = wn->value.data() + (o * in_c + i) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int dy = ky - 1;
          const int y_lo = std::max(0, -dy), y_hi = h - std::max(0, dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const int x_lo = std::max(0, -dx), x_hi = w - std::max(0, dx);
            const double coef = taps[ky * 3 + kx];
            for (int y = y_lo; y < y_hi; ++y) {
              const float* srow = src + (y + dy) * w + dx;
              double* drow = acc.data() + static_cast<std::size_t>(y) * w;
              for (int px = x_lo; px < x_hi; ++px) {
                drow[px] += coef * srow[px];
              }
            }
          }
        }
      }
      float* orow = obase + o * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        orow[k] = static_cast<float>(acc[k]);
      }
    }
  }

  if (on->requires_grad) {
    on->backward_fn = [on, xn, wn, bn, batch, in_c, out_c, h, w, plane] {
      if (xn->requires_grad) {
        for (int img = 0; img < batch; ++img) {
          float* gxbase = xn->grad.data() + img * in_c * plane;
          const float* gybase = on->grad.data() + img * out_c * plane;
          for (int o = 0; o < out_c; ++o) {
            const float* gy = gybase + o * plane;
            for (int i = 0; i < in_c; ++i) {
              float* gx = gxbase + i * plane;
              const float* taps = wn->value.data() + (o * in_c + i) * 9;
              for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y_lo = std::max(0, -dy), y_hi = h - std::max(0, dy);
                for (int kx = 0; kx < 3; ++kx) {
                  const int dx = kx - 1;
                  const int x_lo = std::max(0, -dx), x_hi = w - std::max(0, dx);
                  const float coef = taps[ky * 3 + kx];
                  for (int y = y_lo; y < y_hi; ++y) {
                    float* gxrow = gx + (y + dy) * w + dx;
                    const float* gyrow = gy + static_cast<std::size_t>(y) * w;
                    for (int px = x_lo; px < x_hi; ++px) {
                      gxrow[px] += coef * gyrow[px];
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (wn->requires_grad) {
        std::vector<double> wacc(static_cast<std::size_t>(out_c) * in_c * 9, 0.0);
        for (int img = 0; img < batch; ++img) {
          const float* xbase = xn->value.data() + img * in_c * plane;
          const float* gybase = on->grad.data() + img * out_c * plane;
          for (int o = 0; o < out_c; ++o) {
            const float* gy = gybase + o * plane;
            for (int i = 0; i < in_c; ++i) {
              const float* src = xbase + i * plane;
              double* taps = wacc.data() + (o * in_c + i) * 9;
              for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y_lo = std::max(0, -dy), y_hi = h - std::max(0, dy);
                for (int kx = 0; kx < 3; ++kx) {
                  const int dx = kx - 1;
                  const int x_lo = std::max(0, -dx), x_hi = w - std::max(0, dx);
                  double sum = 0.0;
                  for (int y = y_lo; y < y_hi; ++y) {
                    const float* srow = src + (y + dy) * w + dx;
                    const float* gyrow = gy + static_cast<std::size_t>(y) * w;
                    for (int px = x_lo; px < x_hi; ++px) {
                      sum += static_cast<double>(srow[px]) * gyrow[px];
                    }
                  }
                  taps[ky * 3 + kx] += sum;
                }
              }
            }
          }
        }
        for (std::size_t k = 0; k < wacc.size(); ++k) {
          wn->grad[k] += static_cast<float>(wacc[k]);
        }
      }
      if (bn->requires_grad) {
        for (int o = 0; o < out_c; ++o) {
          double sum = 0.0;
          for (int img = 0; img < batch; ++img) {
            const float* gy = on->grad.data() + (img * out_c + o) * plane;
            for (std::size_t k = 0; k < plane; ++k) sum += gy[k];
          }
          bn->grad[o] += static_cast<float>(sum);
        }
      }
    };
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, float negative_slope) {
  Tensor out = make_result(x.shape(), {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  const std::size_t size = on->value.size();
  for (std::size_t i = 0; i < size; ++i) {
    const float v = xn->value[i];
    on->value[i] = v > 0.0f ? v : negative_slope * v;
  }
  if (on->requires_grad) {
    on->backward_fn = [on, xn, size, negative_slope] {
      for (std::size_t i = 0; i < size; ++i) {
        const float g = on->grad[i];
        xn->grad[i] += xn->value[i] > 0.0f ? g : negative_slope * g;
      }
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = make_result(x.shape(), {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  const std::size_t size = on->value.size();
  for (std::size_t i = 0; i < size; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(xn->value[i])));
    on->value[i] = static_cast<float>(std::clamp(s, kSigmoidLo, kSigmoidHi));
  }
  if (on->requires_grad) {
    // Uses the clamped forward value, so the derivative at the rails is ~0
    // and consistent with what the output actually does there.
    on->backward_fn = [on, xn, size] {
      for (std::size_t i = 0; i < size; ++i) {
        const float y = on->value[i];
        xn->grad[i] += y * (1.0f - y) * on->grad[i];
      }
    };
  }
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw DataError("avg_pool2 requires even height and width, got " +
                    xs.to_string());
  }
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Tensor out = make_result(os, {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  const int planes = xs.n * xs.c;
  const int ih = xs.h, iw = xs.w, oh = os.h, ow = os.w;
  for (int p = 0; p < planes; ++p) {
    const float* src = xn->value.data() + static_cast<std::size_t>(p) * ih * iw;
    float* dst = on->value.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const float* r0 = src + (2 * y) * iw;
      const float* r1 = r0 + iw;
      for (int px = 0; px < ow; ++px) {
        dst[y * ow + px] =
            0.25f * (r0[2 * px] + r0[2 * px + 1] + r1[2 * px] + r1[2 * px + 1]);
      }
    }
  }
  if (on->requires_grad) {
    on->backward_fn = [on, xn, planes, ih, iw, oh, ow] {
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->grad.data() + static_cast<std::size_t>(p) * ih * iw;
        const float* gy = on->grad.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          float* r0 = gx + (2 * y) * iw;
          float* r1 = r0 + iw;
          for (int px = 0; px < ow; ++px) {
            const float g = 0.25f * gy[y * ow + px];
            r0[2 * px] += g;
            r0[2 * px + 1] += g;
            r1[2 * px] += g;
            r1[2 * px + 1] += g;
          }
        }
      }
    };
  }
  return out;
}

namespace {

// Half-pixel source taps for one output axis of the 2x upsample.
struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<float> t;  // weight of the hi tap
};

AxisTaps upsample_taps(int in_size) {
  AxisTaps taps;
  const int out_size = 2 * in_size;
  taps.lo.resize(out_size);
  taps.hi.resize(out_size);
  taps.t.resize(out_size);
  for (int i = 0; i < out_size; ++i) {
    const double f = (i + 0.5) / 2.0 - 0.5;
    const int fl = static_cast<int>(std::floor(f));
    taps.lo[i] = std::clamp(fl, 0, in_size - 1);
    taps.hi[i] = std::clamp(fl + 1, 0, in_size - 1);
    taps.t[i] = static_cast<float>(f - fl);
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear2(const Tensor& x) {
  const Shape& xs = x.shape();
  const Shape os{xs.n, xs.c, 2 * xs.h, 2 * xs.w};
  Tensor out = make_result(os, {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  const AxisTaps ty = upsample_taps(xs.h);
  const AxisTaps tx = upsample_taps(xs.w);
  const int planes = xs.n * xs.c;
  const int ih = xs.h, iw = xs.w, oh = os.h, ow = os.w;
  for (int p = 0; p < planes; ++p) {
    const float* src = xn->value.data() + static_cast<std::size_t>(p) * ih * iw;
    float* dst = on->value.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const float* r0 = src + ty.lo[y] * iw;
      const float* r1 = src + ty.hi[y] * iw;
      const float wy = ty.t[y];
      for (int px = 0; px < ow; ++px) {
        const float wx = tx.t[px];
        const float top = (1.0f - wx) * r0[tx.lo[px]] + wx * r0[tx.hi[px]];
        const float bot = (1.0f - wx) * r1[tx.lo[px]] + wx * r1[tx.hi[px]];
        dst[y * ow + px] = (1.0f - wy) * top + wy * bot;
      }
    }
  }
  if (on->requires_grad) {
    on->backward_fn = [on, xn, ty, tx, planes, ih, iw, oh, ow] {
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->grad.data() + static_cast<std::size_t>(p) * ih * iw;
        const float* gy = on->grad.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          float* r0 = gx + ty.lo[y] * iw;
          float* r1 = gx + ty.hi[y] * iw;
          const float wy = ty.t[y];
          for (int px = 0; px < ow; ++px) {
            const float g = gy[y * ow + px];
            const float wx = tx.t[px];
            r0[tx.lo[px]] += (1.0f - wy) * (1.0f - wx) * g;
            r0[tx.hi[px]] += (1.0f - wy) * wx * g;
            r1[tx.lo[px]] += wy * (1.0f - wx) * g;
            r1[tx.hi[px]] += wy * wx * g;
          }
        }
      }
    };
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw DataError("concat_channels: spatial/batch mismatch " +
                    as.to_string() + " vs " + bs.to_string());
  }
  const Shape os{as.n, as.c + bs.c, as.h, as.w};
  Tensor out = make_result(os, {&a, &b});
  Node* on = raw(out);
  Node* an = raw(a);
  Node* bn = raw(b);
  const std::size_t plane = as.plane();
  const std::size_t a_len = static_cast<std::size_t>(as.c) * plane;
  const std::size_t b_len = static_cast<std::size_t>(bs.c) * plane;
  for (int img = 0; img < as.n; ++img) {
    float* dst = on->value.data() + img * (a_len + b_len);
    std::copy_n(an->value.data() + img * a_len, a_len, dst);
    std::copy_n(bn->value.data() + img * b_len, b_len, dst + a_len);
  }
  if (on->requires_grad) {
    const int batch = as.n;
    on->backward_fn = [on, an, bn, batch, a_len, b_len] {
      for (int img = 0; img < batch; ++img) {
        const float* g = on->grad.data() + img * (a_len + b_len);
        if (an->requires_grad) {
          float* ga = an->grad.data() + img * a_len;
          for (std::size_t i = 0; i < a_len; ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
          float* gb = bn->grad.data() + img * b_len;
          for (std::size_t i = 0; i < b_len; ++i) gb[i] += g[a_len + i];
        }
      }
    };
  }
  return out;
}

Tensor diff_x(const Tensor& x) {
  const Shape& xs = x.shape();
  Tensor out = make_result(xs, {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  const int planes = xs.n * xs.c;
  const int h = xs.h, w = xs.w;
  for (int p = 0; p < planes; ++p) {
    const float* src = xn->value.data() + static_cast<std::size_t>(p) * h * w;
    float* dst = on->value.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y) {
      const float* srow = src + static_cast<std::size_t>(y) * w;
      float* drow = dst + static_cast<std::size_t>(y) * w;
      for (int px = 0; px + 1 < w; ++px) drow[px] = srow[px + 1] - srow[px];
      drow[w - 1] = 0.0f;
    }
  }
  if (on->requires_grad) {
    on->backward_fn = [on, xn, planes, h, w] {
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->grad.data() + static_cast<std::size_t>(p) * h * w;
        const float* gy = on->grad.data() + static_cast<std::size_t>(p) * h * w;
        for (int y = 0; y < h; ++y) {
          float* grow = gx + static_cast<std::size_t>(y) * w;
          const float* gyrow = gy + static_cast<std::size_t>(y) * w;
          for (int px = 0; px + 1 < w; ++px) {
            grow[px + 1] += gyrow[px];
            grow[px] -= gyrow[px];
          }
        }
      }
    };
  }
  return out;
}

Tensor diff_y(const Tensor& x) {
  const Shape& xs = x.shape();
  Tensor out = make_result(xs, {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  const int planes = xs.n * xs.c;
  const int h = xs.h, w = xs.w;
  for (int p = 0; p < planes; ++p) {
    const float* src = xn->value.data() + static_cast<std::size_t>(p) * h * w;
    float* dst = on->value.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y + 1 < h; ++y) {
      const float* srow = src + static_cast<std::size_t>(y) * w;
      float* drow = dst + static_cast<std::size_t>(y) * w;
      for (int px = 0; px < w; ++px) drow[px] = srow[px + w] - srow[px];
    }
    std::fill_n(dst + static_cast<std::size_t>(h - 1) * w, w, 0.0f);
  }
  if (on->requires_grad) {
    on->backward_fn = [on, xn, planes, h, w] {
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->grad.data() + static_cast<std::size_t>(p) * h * w;
        const float* gy = on->grad.data() + static_cast<std::size_t>(p) * h * w;
        for (int y = 0; y + 1 < h; ++y) {
          float* grow = gx + static_cast<std::size_t>(y) * w;
          const float* gyrow = gy + static_cast<std::size_t>(y) * w;
          for (int px = 0; px < w; ++px) {
            grow[px + w] += gyrow[px];
            grow[px] -= gyrow[px];
          }
        }
      }
    };
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = make_result(Shape{1, 1, 1, 1}, {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  double sum = 0.0;
  for (const float v : xn->value) sum += v;
  on->value[0] = static_cast<float>(sum);
  if (on->requires_grad) {
    on->backward_fn = [on, xn] {
      const float g = on->grad[0];
      for (float& gv : xn->grad) gv += g;
    };
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  Tensor out = make_result(Shape{1, 1, 1, 1}, {&x});
  Node* on = raw(out);
  Node* xn = raw(x);
  const double inv_n = 1.0 / static_cast<double>(xn->value.size());
  double sum = 0.0;
  for (const float v : xn->value) sum += v;
  on->value[0] = static_cast<float>(sum * inv_n);
  if (on->requires_grad) {
    on->backward_fn = [on, xn, inv_n] {
      const float g = static_cast<float>(inv_n * on->grad[0]);
      for (float& gv : xn->grad) gv += g;
    };
  }
  return out;
}

}  // namespace cdi
