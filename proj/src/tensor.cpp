#include "dssm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace dssm {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->values.assign(shape_numel(shape), 0.0);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->values.assign(shape_numel(shape), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                    bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->values.size(); }
const std::vector<double>& Tensor::values() const { return impl_->values; }
std::vector<double>& Tensor::mutable_values() { return impl_->values; }

double Tensor::scalar_value() const {
    if (numel() != 1) throw ShapeError("scalar_value on tensor " + shape_str(shape()));
    return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
    if (!impl_->requires_grad) throw NumericError("grad requested on non-tracked tensor");
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->values.size(), 0.0);
}

Graph Graph::build(const Tensor& root) {
    // Iterative post-order DFS; unrolled filter graphs get deep.
    Graph g;
    std::unordered_set<TensorImpl*> seen;
    struct Frame {
        TensorImpl* node;
        std::size_t next_child;
    };
    std::vector<Frame> stack;
    TensorImpl* r = root.impl();
    if (!r || !r->requires_grad) return g;
    stack.push_back({r, 0});
    seen.insert(r);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            TensorImpl* p = f.node->parents[f.next_child++].get();
            if (p->requires_grad && seen.insert(p).second)
                stack.push_back({p, 0});
        } else {
            g.topo.push_back(f.node);
            stack.pop_back();
        }
    }
    return g;
}

void Tensor::backward(double seed) const {
    if (numel() != 1)
        throw ShapeError("backward requires a scalar root, got " + shape_str(shape()));
    if (!impl_->requires_grad) return;
    Graph g = Graph::build(*this);
    impl_->ensure_grad();
    impl_->grad[0] += seed;
    for (auto it = g.topo.rbegin(); it != g.topo.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

Tensor make_node(std::vector<std::size_t> shape, std::vector<double> values,
                 std::vector<Tensor> inputs,
                 std::function<void(TensorImpl&)> backward_fn) {
    bool track = false;
    for (const auto& in : inputs)
        if (in.requires_grad()) track = true;
    Tensor out = Tensor::from(std::move(shape), std::move(values), track);
    if (track) {
        out.impl()->parents.reserve(inputs.size());
        for (const auto& in : inputs)
            if (in.requires_grad()) out.impl()->parents.push_back(in.impl_ptr());
        out.impl()->backward_fn = std::move(backward_fn);
        out.impl()->ensure_grad();
    }
    return out;
}

} // namespace dssm
