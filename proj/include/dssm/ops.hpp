#pragma once

#include <functional>
#include <vector>

#include "dssm/tensor.hpp"

namespace dssm {

// Elementwise arithmetic (shapes must match exactly; no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b); // zero denominator is an error
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);       // negative input is an error
Tensor reciprocal(const Tensor& x); // zero input is an error
Tensor relu(const Tensor& x);       // subgradient at 0 fixed to 0
Tensor softplus(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor clamp_min(const Tensor& x, double floor);

// Structural ops.
Tensor transpose(const Tensor& m);                       // 2-d
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor select_row(const Tensor& m, std::size_t row);     // 2-d -> 1-d
Tensor stack_rows(const std::vector<Tensor>& rows);      // T 1-d -> T x d
Tensor slice(const Tensor& x, std::size_t begin, std::size_t len); // 1-d

// Reductions to a single element.
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);

// Matrix product [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Rowwise bias: [r x c] + [c] broadcast over rows.
Tensor add_rowwise(const Tensor& m, const Tensor& v);

// Zero-padded cross-correlation. input [C_in x H x W], kernels
// [C_out x C_in x k x k] -> [C_out x H' x W'] with H' = H + 2*padding - k + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t padding);

// Per-last-axis standardization followed by gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Last-axis softmax, stabilized by max subtraction.
Tensor softmax(const Tensor& x);

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences at `point`; returns the worst per-coordinate
// relative error |a - n| / max(1, |a|, |n|).
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& point, double step);

} // namespace dssm
