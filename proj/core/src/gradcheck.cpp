#include "cdi/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cdi/errors.hpp"
#include "cdi/losses.hpp"
#include "cdi/rng.hpp"
#include "cdi/tensor_ops.hpp"

namespace cdi {

std::string GradCheckReport::to_string() const {
  std::string out;
  char line[160];
  for (const GradCheckEntry& e : entries) {
    std::snprintf(line, sizeof(line), "%-16s analytic % .6e  numeric % .6e  rel %.3e\n",
                  e.name.c_str(), e.analytic, e.numeric, e.rel_error);
    out += line;
  }
  std::snprintf(line, sizeof(line), "max relative error %.3e\n", max_rel_error);
  out += line;
  return out;
}

namespace {

std::vector<float> sign_vector(Rng& rng, std::size_t size) {
  std::vector<float> out(size);
  for (float& v : out) v = rng.bernoulli(0.5) ? 1.0f : -1.0f;
  return out;
}

double project(std::span<const float> values, const std::vector<float>& weights) {
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += static_cast<double>(weights[i]) * values[i];
  }
  return sum;
}

}  // namespace

GradCheckReport grad_check_fn(
    const std::function<Tensor()>& fn,
    const std::vector<std::pair<std::string, Tensor>>& leaves,
    std::uint64_t seed, double step) {
  if (leaves.empty()) throw DataError("grad check needs at least one leaf");
  if (!(step > 0.0)) throw DataError("grad check step must be positive");

  Rng rng = Rng::forked(seed, 0x67726164ULL);
  Tensor out = fn();
  const std::vector<float> projection = sign_vector(rng, out.value().size());

  // Analytic pass: backprop the projection weights through a fresh graph.
  for (const auto& [name, leaf] : leaves) {
    Tensor t = leaf;
    t.zero_grad();
  }
  out.backward(projection);

  // Each leaf is probed along the sign pattern of its own gradient: the
  // directional derivative equals the gradient's L1 norm, so near-cancelling
  // components cannot shrink the comparison's denominator into the
  // finite-difference noise floor.
  GradCheckReport report;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto& [name, leaf] = leaves[k];
    std::vector<float> dir(leaf.grad().size());
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] = leaf.grad()[i] < 0.0f ? -1.0f : 1.0f;
    }

    GradCheckEntry entry;
    entry.name = name;
    entry.analytic = project(leaf.grad(), dir);

    Tensor mut = leaf;
    std::span<float> w = mut.value();
    const std::vector<float> saved(w.begin(), w.end());
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<float>(saved[i] + step * dir[i]);
    }
    const double loss_hi = project(fn().value(), projection);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<float>(saved[i] - step * dir[i]);
    }
    const double loss_lo = project(fn().value(), projection);
    std::ranges::copy(saved, w.begin());

    entry.numeric = (loss_hi - loss_lo) / (2.0 * step);
    entry.rel_error = std::abs(entry.analytic - entry.numeric) /
                      std::max({std::abs(entry.analytic),
                                std::abs(entry.numeric), 1e-6});
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport grad_check_network(const EncoderDecoder& net,
                                   const Tensor& input, std::uint64_t seed,
                                   double step) {
  return grad_check_fn([&net, &input] { return net.forward(input); },
                       net.named_parameters(), seed, step);
}

namespace {

Tensor random_leaf(const Shape& shape, Rng& rng, float lo, float hi) {
  std::vector<float> values(shape.numel());
  for (float& v : values) v = rng.uniformf(lo, hi);
  return Tensor::from_vector(shape, std::move(values), true);
}

// Values with |v| >= 0.2 so the finite-difference probe never crosses the
// kink of a piecewise-linear activation.
Tensor random_leaf_off_zero(const Shape& shape, Rng& rng) {
  std::vector<float> values(shape.numel());
  for (float& v : values) {
    const float magnitude = rng.uniformf(0.2f, 1.0f);
    v = rng.bernoulli(0.5) ? magnitude : -magnitude;
  }
  return Tensor::from_vector(shape, std::move(values), true);
}

}  // namespace

std::vector<AuditCase> gradient_audit(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AuditCase> cases;
  const auto run = [&cases, &rng](const std::string& name,
                                  const std::function<Tensor()>& fn,
                                  std::vector<std::pair<std::string, Tensor>> leaves) {
    cases.push_back({name, grad_check_fn(fn, leaves, rng.uniform_int(1, 1 << 30))});
  };

  {
    Tensor x = random_leaf({1, 3, 8, 8}, rng, -1.0f, 1.0f);
    Tensor w = random_leaf({4, 3, 3, 3}, rng, -0.5f, 0.5f);
    Tensor b = random_leaf({1, 4, 1, 1}, rng, -0.2f, 0.2f);
    run("conv3x3", [&] { return conv3x3(x, w, b); },
        {{"x", x}, {"weight", w}, {"bias", b}});
  }
  {
    Tensor x = random_leaf_off_zero({1, 2, 8, 8}, rng);
    run("leaky_relu", [&] { return leaky_relu(x, 0.1f); }, {{"x", x}});
  }
  {
    Tensor x = random_leaf({1, 2, 8, 8}, rng, -3.0f, 3.0f);
    run("sigmoid", [&] { return sigmoid(x); }, {{"x", x}});
  }
  {
    Tensor x = random_leaf({1, 2, 8, 8}, rng, -1.0f, 1.0f);
    run("avg_pool2", [&] { return avg_pool2(x); }, {{"x", x}});
  }
  {
    Tensor x = random_leaf({1, 2, 8, 8}, rng, -1.0f, 1.0f);
    run("upsample_bilinear2", [&] { return upsample_bilinear2(x); }, {{"x", x}});
  }
  {
    Tensor a = random_leaf({1, 2, 8, 8}, rng, -1.0f, 1.0f);
    Tensor b = random_leaf({1, 3, 8, 8}, rng, -1.0f, 1.0f);
    run("concat_channels", [&] { return concat_channels(a, b); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor x = random_leaf({1, 2, 8, 8}, rng, -1.0f, 1.0f);
    run("diff_x", [&] { return diff_x(x); }, {{"x", x}});
    Tensor y = random_leaf({1, 2, 8, 8}, rng, -1.0f, 1.0f);
    run("diff_y", [&] { return diff_y(y); }, {{"y", y}});
  }
  {
    Tensor a = random_leaf({1, 2, 8, 8}, rng, -1.0f, 1.0f);
    Tensor b = random_leaf({1, 2, 8, 8}, rng, -1.0f, 1.0f);
    run("elementwise",
        [&] { return mean_all(mul(add(a, b), scale(sub(a, b), 1.5f))); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor pred = random_leaf({1, 2, 8, 8}, rng, 0.0f, 1.0f);
    Tensor target = random_leaf({1, 2, 8, 8}, rng, 0.0f, 1.0f);
    run("mse_loss", [&] { return mse_loss(pred, target); },
        {{"pred", pred}, {"target", target}});
  }
  {
    Tensor pred = random_leaf({1, 2, 8, 8}, rng, 0.0f, 1.0f);
    Tensor target = random_leaf({1, 2, 8, 8}, rng, 0.0f, 1.0f);
    run("msg_loss", [&] { return msg_loss(pred, target, 3); },
        {{"pred", pred}, {"target", target}});
  }
  return cases;
}

double audit_max_rel_error(const std::vector<AuditCase>& cases) {
  double worst = 0.0;
  for (const AuditCase& c : cases)
    worst = std::max(worst, c.report.max_rel_error);
  return worst;
}

}  // namespace cdi
