#include "seqpool/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "seqpool/kernels.hpp"

namespace seqpool::ops {

namespace {

using detail::NodeImpl;

const kernels::KernelTable& K() { return kernels::active(); }

Tensor scalar_tensor(double v) { return Tensor({1}, {v}); }

}  // namespace

Node affine(Graph& g, Node weight, Node input, Node bias) {
  require_rank(weight.value(), 2, "affine weight");
  require_rank(input.value(), 1, "affine input");
  require_rank(bias.value(), 1, "affine bias");
  const std::size_t rows = weight.value().dim(0);
  const std::size_t cols = weight.value().dim(1);
  if (input.size() != cols || bias.size() != rows)
    throw DimensionError("affine: weight " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " does not accept input " + std::to_string(input.size()) + " / bias " +
                         std::to_string(bias.size()));

  Tensor out({rows});
  K().matvec(weight.value().data(), input.value().data(), rows, cols, out.data());
  K().add(out.data(), bias.value().data(), rows, out.data());

  NodeImpl* w = weight.impl();
  NodeImpl* x = input.impl();
  NodeImpl* b = bias.impl();
  return g.make(std::move(out), {weight, input, bias}, [w, x, b, rows, cols](NodeImpl& node) {
    const double* gout = node.grad.data();
    if (w->requires_grad)
      K().outer_acc(gout, x->value.data(), rows, cols, w->grad_buffer().data());
    if (x->requires_grad)
      K().matvec_t_acc(w->value.data(), gout, rows, cols, x->grad_buffer().data());
    if (b->requires_grad) K().axpy(1.0, gout, rows, b->grad_buffer().data());
  });
}

Node tanh_elem(Graph& g, Node x) {
  Tensor out(x.shape());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);

  NodeImpl* xi = x.impl();
  return g.make(std::move(out), {x}, [xi](NodeImpl& node) {
    if (!xi->requires_grad) return;
    K().tanh_backward_acc(node.value.data(), node.grad.data(), node.value.size(),
                          xi->grad_buffer().data());
  });
}

Node add(Graph& g, Node a, Node b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  K().add(a.value().data(), b.value().data(), out.size(), out.data());
  NodeImpl* ai = a.impl();
  NodeImpl* bi = b.impl();
  return g.make(std::move(out), {a, b}, [ai, bi](NodeImpl& node) {
    const std::size_t n = node.value.size();
    if (ai->requires_grad) K().axpy(1.0, node.grad.data(), n, ai->grad_buffer().data());
    if (bi->requires_grad) K().axpy(1.0, node.grad.data(), n, bi->grad_buffer().data());
  });
}

Node sub(Graph& g, Node a, Node b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.shape());
  K().sub(a.value().data(), b.value().data(), out.size(), out.data());
  NodeImpl* ai = a.impl();
  NodeImpl* bi = b.impl();
  return g.make(std::move(out), {a, b}, [ai, bi](NodeImpl& node) {
    const std::size_t n = node.value.size();
    if (ai->requires_grad) K().axpy(1.0, node.grad.data(), n, ai->grad_buffer().data());
    if (bi->requires_grad) K().axpy(-1.0, node.grad.data(), n, bi->grad_buffer().data());
  });
}

Node scale(Graph& g, Node x, double factor) {
  Tensor out(x.shape());
  K().scale(x.value().data(), factor, out.size(), out.data());
  NodeImpl* xi = x.impl();
  return g.make(std::move(out), {x}, [xi, factor](NodeImpl& node) {
    if (xi->requires_grad)
      K().axpy(factor, node.grad.data(), node.value.size(), xi->grad_buffer().data());
  });
}

Node mean_over_time(Graph& g, std::span<const Node> steps) {
  if (steps.empty()) throw DomainError("mean_over_time: empty sequence");
  for (const Node& s : steps)
    require_same_shape(steps.front().value(), s.value(), "mean_over_time");

  const std::size_t n = steps.front().size();
  const double inv_t = 1.0 / static_cast<double>(steps.size());
  // Fixed left-to-right summation over the stored order.
  Tensor out(steps.front().shape());
  for (const Node& s : steps) K().axpy(1.0, s.value().data(), n, out.data());
  K().scale(out.data(), inv_t, n, out.data());

  std::vector<Node> parents(steps.begin(), steps.end());
  std::vector<NodeImpl*> impls;
  impls.reserve(steps.size());
  for (const Node& s : steps) impls.push_back(s.impl());
  return g.make(std::move(out), std::move(parents), [impls, inv_t, n](NodeImpl& node) {
    for (NodeImpl* p : impls)
      if (p->requires_grad) K().axpy(inv_t, node.grad.data(), n, p->grad_buffer().data());
  });
}

Node dropout_mask(Graph& g, Node x, double p, RngStream& rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw DomainError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;

  const std::size_t n = x.size();
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<Tensor>(x.shape());
  for (std::size_t i = 0; i < n; ++i) (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;

  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = x.value()[i] * (*mask)[i];

  NodeImpl* xi = x.impl();
  return g.make(std::move(out), {x}, [xi, mask, n](NodeImpl& node) {
    if (xi->requires_grad)
      K().mul_acc(node.grad.data(), mask->data(), n, xi->grad_buffer().data());
  });
}

Node euclidean_distance(Graph& g, Node a, Node b) {
  require_same_shape(a.value(), b.value(), "euclidean_distance");
  const std::size_t n = a.size();
  const double d = std::sqrt(K().squared_distance(a.value().data(), b.value().data(), n));

  NodeImpl* ai = a.impl();
  NodeImpl* bi = b.impl();
  return g.make(scalar_tensor(d), {a, b}, [ai, bi, n, d](NodeImpl& node) {
    if (d == 0.0) return;  // subgradient zero at the kink
    const double w = node.grad[0] / d;
    Tensor diff({n});
    K().sub(ai->value.data(), bi->value.data(), n, diff.data());
    if (ai->requires_grad) K().axpy(w, diff.data(), n, ai->grad_buffer().data());
    if (bi->requires_grad) K().axpy(-w, diff.data(), n, bi->grad_buffer().data());
  });
}

Node softmax_xent(Graph& g, Node logits, std::size_t label) {
  require_rank(logits.value(), 1, "softmax_xent logits");
  const std::size_t classes = logits.size();
  if (label >= classes)
    throw DomainError("softmax_xent: label " + std::to_string(label) + " out of range for " +
                      std::to_string(classes) + " classes");

  const Tensor& z = logits.value();
  double zmax = z[0];
  for (std::size_t i = 1; i < classes; ++i) zmax = std::max(zmax, z[i]);
  auto probs = std::make_shared<Tensor>(std::vector<std::size_t>{classes});
  double denom = 0.0;
  for (std::size_t i = 0; i < classes; ++i) {
    (*probs)[i] = std::exp(z[i] - zmax);
    denom += (*probs)[i];
  }
  for (std::size_t i = 0; i < classes; ++i) (*probs)[i] /= denom;
  const double loss = std::log(denom) - (z[label] - zmax);

  NodeImpl* li = logits.impl();
  return g.make(scalar_tensor(loss), {logits}, [li, probs, label, classes](NodeImpl& node) {
    if (!li->requires_grad) return;
    const double g0 = node.grad[0];
    Tensor& acc = li->grad_buffer();
    K().axpy(g0, probs->data(), classes, acc.data());
    acc[label] -= g0;
  });
}

Node square(Graph& g, Node x) {
  if (x.size() != 1) throw DimensionError("square expects a scalar node");
  const double v = x.value()[0];
  NodeImpl* xi = x.impl();
  return g.make(scalar_tensor(v * v), {x}, [xi, v](NodeImpl& node) {
    if (xi->requires_grad) xi->grad_buffer()[0] += 2.0 * v * node.grad[0];
  });
}

Node hinge_squared(Graph& g, Node x, double margin) {
  if (x.size() != 1) throw DimensionError("hinge_squared expects a scalar node");
  const double slack = std::max(0.0, margin - x.value()[0]);
  NodeImpl* xi = x.impl();
  return g.make(scalar_tensor(slack * slack), {x}, [xi, slack](NodeImpl& node) {
    if (xi->requires_grad) xi->grad_buffer()[0] += -2.0 * slack * node.grad[0];
  });
}

Node conv2d(Graph& g, Node input, Node kernel, Node bias) {
  require_rank(input.value(), 3, "conv2d input");
  require_rank(kernel.value(), 4, "conv2d kernel");
  require_rank(bias.value(), 1, "conv2d bias");
  const std::size_t c_in = input.value().dim(0);
  const std::size_t h = input.value().dim(1);
  const std::size_t w = input.value().dim(2);
  const std::size_t c_out = kernel.value().dim(0);
  const std::size_t kh = kernel.value().dim(2);
  const std::size_t kw = kernel.value().dim(3);
  if (kernel.value().dim(1) != c_in || bias.size() != c_out)
    throw DimensionError("conv2d: kernel/bias channels do not match input");
  if (kh > h || kw > w) throw DimensionError("conv2d: kernel larger than input");
  const std::size_t oh = h - kh + 1;
  const std::size_t ow = w - kw + 1;

  const auto in_at = [&](const double* p, std::size_t c, std::size_t y, std::size_t x) {
    return p[(c * h + y) * w + x];
  };
  const auto k_at = [&](const double* p, std::size_t o, std::size_t c, std::size_t y,
                        std::size_t x) { return p[((o * c_in + c) * kh + y) * kw + x]; };

  Tensor out({c_out, oh, ow});
  {
    const double* ip = input.value().data();
    const double* kp = kernel.value().data();
    const double* bp = bias.value().data();
    double* op = out.data();
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double s = bp[o];
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx)
                s += k_at(kp, o, c, dy, dx) * in_at(ip, c, y + dy, x + dx);
          op[(o * oh + y) * ow + x] = s;
        }
  }

  NodeImpl* ii = input.impl();
  NodeImpl* ki = kernel.impl();
  NodeImpl* bi = bias.impl();
  return g.make(std::move(out), {input, kernel, bias},
                [ii, ki, bi, c_in, c_out, h, w, kh, kw, oh, ow](NodeImpl& node) {
    const double* gp = node.grad.data();
    const double* ip = ii->value.data();
    const double* kp = ki->value.data();
    double* gi = ii->requires_grad ? ii->grad_buffer().data() : nullptr;
    double* gk = ki->requires_grad ? ki->grad_buffer().data() : nullptr;
    double* gb = bi->requires_grad ? bi->grad_buffer().data() : nullptr;
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = gp[(o * oh + y) * ow + x];
          if (gb) gb[o] += go;
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const std::size_t k_idx = ((o * c_in + c) * kh + dy) * kw + dx;
                const std::size_t i_idx = (c * h + y + dy) * w + x + dx;
                if (gk) gk[k_idx] += go * ip[i_idx];
                if (gi) gi[i_idx] += go * kp[k_idx];
              }
        }
  });
}

Node maxpool2(Graph& g, Node input) {
  require_rank(input.value(), 3, "maxpool2 input");
  const std::size_t c = input.value().dim(0);
  const std::size_t h = input.value().dim(1);
  const std::size_t w = input.value().dim(2);
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  if (oh == 0 || ow == 0) throw DimensionError("maxpool2: input smaller than the window");

  Tensor out({c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  {
    const double* ip = input.value().data();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          std::size_t best = (ch * h + 2 * y) * w + 2 * x;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
              if (ip[idx] > ip[best]) best = idx;
            }
          const std::size_t o_idx = (ch * oh + y) * ow + x;
          out[o_idx] = ip[best];
          (*argmax)[o_idx] = best;
        }
  }

  NodeImpl* ii = input.impl();
  return g.make(std::move(out), {input}, [ii, argmax](NodeImpl& node) {
    if (!ii->requires_grad) return;
    Tensor& acc = ii->grad_buffer();
    for (std::size_t i = 0; i < node.value.size(); ++i) acc[(*argmax)[i]] += node.grad[i];
  });
}

Node flatten(Graph& g, Node x) {
  Tensor out({x.size()}, std::vector<double>(x.value().data(), x.value().data() + x.size()));
  NodeImpl* xi = x.impl();
  return g.make(std::move(out), {x}, [xi](NodeImpl& node) {
    if (xi->requires_grad)
      K().axpy(1.0, node.grad.data(), node.value.size(), xi->grad_buffer().data());
  });
}

}  // namespace seqpool::ops
