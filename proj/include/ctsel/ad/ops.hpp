#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ctsel/ad/tape.hpp"
#include "ctsel/common/rng.hpp"

namespace ctsel::ad {

// Binary elementwise ops accept b with the same shape as a, a 1 x cols row
// (broadcast over rows of a), or a 1 x 1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var square(Var a);
Var exp(Var a);

/// Elementwise map with a caller-supplied derivative (used for constraint
/// mappings and straight-through estimators).
Var unary(Var a, const std::function<double(double)>& f, const std::function<double(double)>& df);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Stack n copies of a 1 x c row.
Var repeat_rows(Var a, std::size_t n);

Var sum(Var a);
Var mean(Var a);
/// Column means, 1 x cols.
Var mean_rows(Var a);

/// Inverted-dropout mask: entries 0 with probability p, else 1/(1-p).
Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng);
/// Same, drawing row r from its own generator rngs[r].
Tensor dropout_mask(std::size_t cols, double p, std::span<Rng> rngs);
Var dropout_mask_apply(Var a, const Tensor& mask);

/// n x n matrix of squared Euclidean distances between the rows of a.
Var pairwise_sq_dists(Var a);
/// H K H with H = I - (1/n) 1 1^T.
Var double_center(Var a);

Var mse(Var prediction, Var target);

}  // namespace ctsel::ad
