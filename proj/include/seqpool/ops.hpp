#pragma once

// Differentiable operations over graph nodes. Forward values and backward
// accumulation run on the dispatched kernel table. Shapes are validated
// eagerly; all gradient rules follow the usual reverse-mode forms.

#include <cstddef>
#include <span>

#include "seqpool/graph.hpp"
#include "seqpool/rng.hpp"

namespace seqpool::ops {

/// weight {m, n} * input {n} + bias {m} -> {m}
Node affine(Graph& g, Node weight, Node input, Node bias);

/// Elementwise hyperbolic tangent.
Node tanh_elem(Graph& g, Node x);

Node add(Graph& g, Node a, Node b);
Node sub(Graph& g, Node a, Node b);
Node scale(Graph& g, Node x, double factor);

/// Arithmetic mean of equally shaped steps, summed left to right.
Node mean_over_time(Graph& g, std::span<const Node> steps);

/// Inverted dropout: zeroes each coordinate with probability p and scales
/// survivors by 1/(1-p) while training; identity otherwise. p in [0, 1).
Node dropout_mask(Graph& g, Node x, double p, RngStream& rng, bool training);

/// L2 distance between equally shaped vectors; gradient at zero distance
/// is defined as zero.
Node euclidean_distance(Graph& g, Node a, Node b);

/// Cross-entropy of softmax(logits) against a one-hot label, computed with
/// max subtraction.
Node softmax_xent(Graph& g, Node logits, std::size_t label);

/// Scalar x -> x^2.
Node square(Graph& g, Node x);

/// Scalar x -> max(0, margin - x)^2.
Node hinge_squared(Graph& g, Node x, double margin);

/// input {c, h, w} (*) kernel {k, c, kh, kw} + bias {k} -> {k, h-kh+1, w-kw+1};
/// valid padding, stride one.
Node conv2d(Graph& g, Node input, Node kernel, Node bias);

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Ties route the gradient to the first matching element.
Node maxpool2(Graph& g, Node input);

/// Reshape to rank 1. Values are copied in layout order.
Node flatten(Graph& g, Node x);

}  // namespace seqpool::ops
