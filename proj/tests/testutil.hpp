#pragma once

// Shared helpers for the unit suites: a central finite-difference gradient
// checker and small comparison utilities.

#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "seqpool/graph.hpp"
#include "seqpool/tensor.hpp"

namespace testutil {

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Compares reverse-mode gradients of a scalar-valued build function against
/// central finite differences over every coordinate of every leaf. The build
/// function must be deterministic: it is re-invoked on a fresh graph for each
/// perturbed evaluation.
template <typename Build>
void check_gradients(const std::vector<seqpool::Tensor>& inits, Build build, double tol = 1e-4,
                     double step = 1e-5) {
  using seqpool::Graph;
  using seqpool::Node;
  using seqpool::Tensor;

  Graph g;
  std::vector<Node> params;
  params.reserve(inits.size());
  for (const Tensor& t : inits) params.push_back(g.parameter(t));
  Node root = build(g, params);
  REQUIRE(root.size() == 1);
  g.backward(root);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Node p : params) analytic.push_back(p.grad());

  auto eval = [&](const std::vector<Tensor>& vals) {
    Graph h;
    std::vector<Node> leaves;
    leaves.reserve(vals.size());
    for (const Tensor& t : vals) leaves.push_back(h.parameter(t));
    return build(h, leaves).value()[0];
  };

  std::vector<Tensor> vals = inits;
  for (std::size_t pi = 0; pi < vals.size(); ++pi) {
    for (std::size_t i = 0; i < vals[pi].size(); ++i) {
      const double keep = vals[pi][i];
      vals[pi][i] = keep + step;
      const double up = eval(vals);
      vals[pi][i] = keep - step;
      const double down = eval(vals);
      vals[pi][i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic[pi][i];
      INFO("leaf ", pi, " coord ", i, ": analytic ", an, " vs finite-difference ", fd);
      CHECK(close_rel(an, fd, tol));
    }
  }
}

}  // namespace testutil
