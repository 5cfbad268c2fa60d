#include "cdi/losses.hpp"

#include <string>

#include "cdi/errors.hpp"
#include "cdi/tensor_ops.hpp"

namespace cdi {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  Tensor d = sub(pred, target);
  return mean_all(mul(d, d));
}

Tensor msg_loss(const Tensor& pred, const Tensor& target, int scales) {
  if (scales < 1) throw DataError("msg_loss: scales must be >= 1");
  const Shape& s = pred.shape();
  const int stride = 1 << (scales - 1);
  if (s.h % stride != 0 || s.w % stride != 0) {
    throw DataError("msg_loss: " + std::to_string(scales) +
                    " scales need dims divisible by " + std::to_string(stride) +
                    ", got " + s.to_string());
  }
  Tensor p = pred;
  Tensor t = target;
  Tensor total;
  for (int level = 0; level < scales; ++level) {
    if (level > 0) {
      p = avg_pool2(p);
      t = avg_pool2(t);
    }
    Tensor ex = sub(diff_x(p), diff_x(t));
    Tensor ey = sub(diff_y(p), diff_y(t));
    Tensor term = add(mean_all(mul(ex, ex)), mean_all(mul(ey, ey)));
    total = level == 0 ? term : add(total, term);
  }
  return scale(total, 1.0f / static_cast<float>(scales));
}

double ls_scale_align(std::span<const float> base, std::span<const float> target) {
  if (base.size() != target.size()) {
    throw DataError("ls_scale_align: size mismatch");
  }
  double dot = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double b = base[i];
    dot += b * target[i];
    norm += b * b;
  }
  if (norm == 0.0) return 1.0;
  return dot / norm;
}

}  // namespace cdi
