#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dssm/errors.hpp"

namespace dssm {

struct TensorImpl;

// Dense row-major array of doubles with optional reverse-mode gradient
// tracking. Value semantics via a shared node handle: copying a Tensor
// copies the handle, not the storage. Values are immutable after
// construction except for gradient accumulation.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t i) const { return shape()[i]; }
    std::size_t numel() const;

    const std::vector<double>& values() const;
    double value(std::size_t flat_index) const { return values()[flat_index]; }
    double scalar_value() const; // requires numel() == 1

    // In-place value access for the optimizer; only leaf parameters may be
    // rewritten, and only between training steps.
    std::vector<double>& mutable_values();

    bool requires_grad() const;
    const std::vector<double>& grad() const; // requires requires_grad()
    void zero_grad();

    // Reverse-mode accumulation from this (scalar) node into every
    // reachable leaf. Each graph node is visited exactly once, so
    // gradients of repeated subexpressions accumulate additively.
    void backward(double seed = 1.0) const;

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad; // same size as values once touched

    // Differentiable-op record: parent nodes plus the adjoint step that
    // pushes this node's grad into its parents.
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

// Ordered record of the differentiable operations reachable from a root:
// a topological order over the recorded graph. backward() walks it in
// reverse so every node's adjoint runs exactly once.
struct Graph {
    std::vector<TensorImpl*> topo;
    static Graph build(const Tensor& root);
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// Internal helper for op implementations.
Tensor make_node(std::vector<std::size_t> shape, std::vector<double> values,
                 std::vector<Tensor> inputs,
                 std::function<void(TensorImpl&)> backward_fn);

} // namespace dssm
