#include "dssm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dssm {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

void ensure_grads(std::initializer_list<Tensor> inputs) {
    for (const auto& t : inputs)
        if (t.requires_grad()) t.impl()->ensure_grad();
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) + b.value(i);
    return make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& o) {
        ensure_grads({a, b});
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            if (a.requires_grad()) a.impl()->grad[i] += o.grad[i];
            if (b.requires_grad()) b.impl()->grad[i] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) - b.value(i);
    return make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& o) {
        ensure_grads({a, b});
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            if (a.requires_grad()) a.impl()->grad[i] += o.grad[i];
            if (b.requires_grad()) b.impl()->grad[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) * b.value(i);
    return make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& o) {
        ensure_grads({a, b});
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            if (a.requires_grad()) a.impl()->grad[i] += o.grad[i] * b.value(i);
            if (b.requires_grad()) b.impl()->grad[i] += o.grad[i] * a.value(i);
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape("div", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (b.value(i) == 0.0)
            throw NumericError("div: zero denominator at index " + std::to_string(i));
        out[i] = a.value(i) / b.value(i);
    }
    return make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& o) {
        ensure_grads({a, b});
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double bv = b.value(i);
            if (a.requires_grad()) a.impl()->grad[i] += o.grad[i] / bv;
            if (b.requires_grad())
                b.impl()->grad[i] -= o.grad[i] * a.value(i) / (bv * bv);
        }
    });
}

Tensor square(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value(i) * x.value(i);
    return make_node(x.shape(), std::move(out), {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            x.impl()->grad[i] += o.grad[i] * 2.0 * x.value(i);
    });
}

Tensor sqrt(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (x.value(i) < 0.0)
            throw NumericError("sqrt: negative input at index " + std::to_string(i));
        out[i] = std::sqrt(x.value(i));
    }
    return make_node(x.shape(), std::move(out), {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double v = o.values[i];
            if (v > 0.0) x.impl()->grad[i] += o.grad[i] / (2.0 * v);
        }
    });
}

Tensor reciprocal(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (x.value(i) == 0.0)
            throw NumericError("reciprocal: zero input at index " + std::to_string(i));
        out[i] = 1.0 / x.value(i);
    }
    return make_node(x.shape(), std::move(out), {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double v = x.value(i);
            x.impl()->grad[i] -= o.grad[i] / (v * v);
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value(i) > 0.0 ? x.value(i) : 0.0;
    return make_node(x.shape(), std::move(out), {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (x.value(i) > 0.0) x.impl()->grad[i] += o.grad[i];
    });
}

Tensor softplus(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = x.value(i);
        out[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    }
    return make_node(x.shape(), std::move(out), {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double v = x.value(i);
            double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                  : std::exp(v) / (1.0 + std::exp(v));
            x.impl()->grad[i] += o.grad[i] * sig;
        }
    });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value(i) * c;
    return make_node(x.shape(), std::move(out), {x}, [x, c](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            x.impl()->grad[i] += o.grad[i] * c;
    });
}

Tensor add_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value(i) + c;
    return make_node(x.shape(), std::move(out), {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            x.impl()->grad[i] += o.grad[i];
    });
}

Tensor clamp_min(const Tensor& x, double floor) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x.value(i), floor);
    return make_node(x.shape(), std::move(out), {x}, [x, floor](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (x.value(i) > floor) x.impl()->grad[i] += o.grad[i];
    });
}

Tensor transpose(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("transpose: expected 2-d, got " + shape_str(m.shape()));
    std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m.value(i * c + j);
    return make_node({c, r}, std::move(out), {m}, [m, r, c](TensorImpl& o) {
        ensure_grads({m});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                m.impl()->grad[i * c + j] += o.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    return make_node(std::move(shape), x.values(), {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            x.impl()->grad[i] += o.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t rank = parts[0].rank();
    if (axis >= rank) throw ShapeError("concat: axis out of range");
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < rank; ++d)
            if (d != axis && p.dim(d) != parts[0].dim(d))
                throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) +
                                 " vs " + shape_str(parts[0].shape()));
    }
    if (rank > 2) throw ShapeError("concat: only rank 1 and 2 supported");

    std::vector<std::size_t> shape = parts[0].shape();
    shape[axis] = 0;
    for (const auto& p : parts) shape[axis] += p.dim(axis);

    std::vector<double> out(shape_numel(shape));
    if (rank == 1 || axis == 0) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p.values().begin(), p.values().end(), out.begin() + off);
            off += p.numel();
        }
    } else { // rank 2, axis 1
        std::size_t rows = shape[0], cols = shape[1];
        std::size_t col_off = 0;
        for (const auto& p : parts) {
            std::size_t pc = p.dim(1);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < pc; ++j)
                    out[i * cols + col_off + j] = p.value(i * pc + j);
            col_off += pc;
        }
    }
    return make_node(shape, std::move(out), parts, [parts, axis, rank](TensorImpl& o) {
        for (const auto& p : parts)
            if (p.requires_grad()) p.impl()->ensure_grad();
        if (rank == 1 || axis == 0) {
            std::size_t off = 0;
            for (const auto& p : parts) {
                if (p.requires_grad())
                    for (std::size_t i = 0; i < p.numel(); ++i)
                        p.impl()->grad[i] += o.grad[off + i];
                off += p.numel();
            }
        } else {
            std::size_t rows = o.shape[0], cols = o.shape[1];
            std::size_t col_off = 0;
            for (const auto& p : parts) {
                std::size_t pc = p.dim(1);
                if (p.requires_grad())
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < pc; ++j)
                            p.impl()->grad[i * pc + j] += o.grad[i * cols + col_off + j];
                col_off += pc;
            }
        }
    });
}

Tensor select_row(const Tensor& m, std::size_t row) {
    if (m.rank() != 2) throw ShapeError("select_row: expected 2-d, got " + shape_str(m.shape()));
    std::size_t cols = m.dim(1);
    if (row >= m.dim(0)) throw ShapeError("select_row: row out of range");
    std::vector<double> out(m.values().begin() + row * cols,
                            m.values().begin() + (row + 1) * cols);
    return make_node({cols}, std::move(out), {m}, [m, row, cols](TensorImpl& o) {
        ensure_grads({m});
        for (std::size_t j = 0; j < cols; ++j)
            m.impl()->grad[row * cols + j] += o.grad[j];
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    std::size_t cols = rows[0].numel();
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.numel() != cols)
            throw ShapeError("stack_rows: row shape mismatch");
    }
    std::vector<double> out;
    out.reserve(rows.size() * cols);
    for (const auto& r : rows) out.insert(out.end(), r.values().begin(), r.values().end());
    return make_node({rows.size(), cols}, std::move(out), rows, [rows, cols](TensorImpl& o) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i].requires_grad()) continue;
            rows[i].impl()->ensure_grad();
            for (std::size_t j = 0; j < cols; ++j)
                rows[i].impl()->grad[j] += o.grad[i * cols + j];
        }
    });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t len) {
    if (x.rank() != 1) throw ShapeError("slice: expected 1-d, got " + shape_str(x.shape()));
    if (begin + len > x.numel()) throw ShapeError("slice: out of range");
    std::vector<double> out(x.values().begin() + begin, x.values().begin() + begin + len);
    return make_node({len}, std::move(out), {x}, [x, begin, len](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < len; ++i)
            x.impl()->grad[begin + i] += o.grad[i];
    });
}

Tensor reduce_sum(const Tensor& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += x.value(i);
    return make_node({1}, {s}, {x}, [x](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t i = 0; i < x.numel(); ++i)
            x.impl()->grad[i] += o.grad[0];
    });
}

Tensor reduce_mean(const Tensor& x) {
    double s = 0.0;
    std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) s += x.value(i);
    return make_node({1}, {s / static_cast<double>(n)}, {x}, [x, n](TensorImpl& o) {
        ensure_grads({x});
        double g = o.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) x.impl()->grad[i] += g;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j)
                out[i * n + j] += aip * bv[p * n + j];
        }
    return make_node({m, n}, std::move(out), {a, b}, [a, b, m, k, n](TensorImpl& o) {
        ensure_grads({a, b});
        const auto& av = a.values();
        const auto& bv = b.values();
        if (a.requires_grad()) {
            auto& ga = a.impl()->grad;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double g = o.grad[i * n + j];
                    if (g == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p)
                        ga[i * k + p] += g * bv[p * n + j];
                }
        }
        if (b.requires_grad()) {
            auto& gb = b.impl()->grad;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double aip = av[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        gb[p * n + j] += aip * o.grad[i * n + j];
                }
        }
    });
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.numel())
        throw ShapeError("add_rowwise: shapes " + shape_str(m.shape()) + " and " +
                         shape_str(v.shape()));
    std::size_t rows = m.dim(0), cols = m.dim(1);
    std::vector<double> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out[i * cols + j] = m.value(i * cols + j) + v.value(j);
    return make_node(m.shape(), std::move(out), {m, v}, [m, v, rows, cols](TensorImpl& o) {
        ensure_grads({m, v});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                double g = o.grad[i * cols + j];
                if (m.requires_grad()) m.impl()->grad[i * cols + j] += g;
                if (v.requires_grad()) v.impl()->grad[j] += g;
            }
    });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t padding) {
    if (input.rank() != 3 || kernels.rank() != 4)
        throw ShapeError("conv2d: expected input [C_in x H x W] and kernels "
                         "[C_out x C_in x k x k], got " + shape_str(input.shape()) +
                         " and " + shape_str(kernels.shape()));
    std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    std::size_t cout = kernels.dim(0), kcin = kernels.dim(1);
    std::size_t kh = kernels.dim(2), kw = kernels.dim(3);
    if (kcin != cin)
        throw ShapeError("conv2d: kernel input channels " + std::to_string(kcin) +
                         " != input channels " + std::to_string(cin));
    if (kh > h + 2 * padding || kw > w + 2 * padding)
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(h + 2 * padding) +
                         "x" + std::to_string(w + 2 * padding));
    std::size_t oh = h + 2 * padding - kh + 1;
    std::size_t ow = w + 2 * padding - kw + 1;

    std::vector<double> out(cout * oh * ow, 0.0);
    const auto& iv = input.values();
    const auto& kv = kernels.values();
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                            static_cast<std::ptrdiff_t>(padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                static_cast<std::ptrdiff_t>(padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += iv[(ci * h + iy) * w + ix] *
                                   kv[((co * cin + ci) * kh + ky) * kw + kx];
                        }
                    }
                out[(co * oh + oy) * ow + ox] = acc;
            }

    auto bwd = [input, kernels, padding, cin, h, w, cout, kh, kw, oh, ow](TensorImpl& o) {
        ensure_grads({input, kernels});
        const auto& iv = input.values();
        const auto& kv = kernels.values();
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double g = o.grad[(co * oh + oy) * ow + ox];
                    if (g == 0.0) continue;
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                                static_cast<std::ptrdiff_t>(padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                    static_cast<std::ptrdiff_t>(padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                std::size_t ii = (ci * h + iy) * w + ix;
                                std::size_t ki = ((co * cin + ci) * kh + ky) * kw + kx;
                                if (kernels.requires_grad())
                                    kernels.impl()->grad[ki] += g * iv[ii];
                                if (input.requires_grad())
                                    input.impl()->grad[ii] += g * kv[ki];
                            }
                        }
                }
    };
    return make_node({cout, oh, ow}, std::move(out), {input, kernels}, std::move(bwd));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
    std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d)
        throw ShapeError("layer_norm: gain/bias length " + std::to_string(gain.numel()) +
                         "/" + std::to_string(bias.numel()) + " vs last axis " +
                         std::to_string(d));
    if (eps <= 0.0) throw NumericError("layer_norm: eps must be positive");
    std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    std::vector<double> inv_sigma(rows);
    std::vector<double> normalized(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            double y = (xr[j] - mean) * is;
            normalized[r * d + j] = y;
            out[r * d + j] = gain.value(j) * y + bias.value(j);
        }
    }
    auto bwd = [x, gain, bias, d, rows, inv_sigma = std::move(inv_sigma),
                normalized = std::move(normalized)](TensorImpl& o) {
        ensure_grads({x, gain, bias});
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = normalized.data() + r * d;
            const double* go = o.grad.data() + r * d;
            double mean_dy = 0.0, mean_dyy = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double dy = go[j] * gain.value(j);
                mean_dy += dy;
                mean_dyy += dy * yr[j];
            }
            mean_dy /= static_cast<double>(d);
            mean_dyy /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
                if (x.requires_grad()) {
                    double dy = go[j] * gain.value(j);
                    x.impl()->grad[r * d + j] +=
                        (dy - mean_dy - yr[j] * mean_dyy) * inv_sigma[r];
                }
                if (gain.requires_grad()) gain.impl()->grad[j] += go[j] * yr[j];
                if (bias.requires_grad()) bias.impl()->grad[j] += go[j];
            }
        }
    };
    return make_node(x.shape(), std::move(out), {x, gain, bias}, std::move(bwd));
}

Tensor softmax(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("softmax: scalar input");
    std::size_t d = x.shape().back();
    std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * d;
        double mx = xr[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double e = std::exp(xr[j] - mx);
            out[r * d + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= sum;
    }
    return make_node(x.shape(), std::move(out), {x}, [x, d, rows](TensorImpl& o) {
        ensure_grads({x});
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = o.values.data() + r * d;
            const double* go = o.grad.data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += go[j] * y[j];
            for (std::size_t j = 0; j < d; ++j)
                x.impl()->grad[r * d + j] += y[j] * (go[j] - dot);
        }
    });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& point, double step) {
    if (step <= 0.0) throw NumericError("grad_check: step must be positive");

    Tensor p = Tensor::from(point.shape(), point.values(), true);
    Tensor y = f(p);
    if (y.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
    if (!std::isfinite(y.scalar_value()))
        throw NumericError("grad_check: non-finite function value at point");
    y.backward();
    std::vector<double> analytic = p.grad();

    double worst = 0.0;
    std::vector<double> vals = point.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        double orig = vals[i];
        vals[i] = orig + step;
        double fp = f(Tensor::from(point.shape(), vals, false)).scalar_value();
        vals[i] = orig - step;
        double fm = f(Tensor::from(point.shape(), vals, false)).scalar_value();
        vals[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: non-finite evaluation near coordinate " +
                               std::to_string(i));
        double numeric = (fp - fm) / (2.0 * step);
        double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

} // namespace dssm
