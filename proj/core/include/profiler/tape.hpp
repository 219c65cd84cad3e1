#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "profiler/tensor.hpp"

namespace profiler::ad {

/// A named trainable tensor plus its gradient. Gradients are zeroed between
/// optimizer steps; apply_l2 marks weight matrices (biases and embeddings are
/// exempt from the L2 term).
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool apply_l2 = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool l2 = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), apply_l2(l2) {}

    void zero_grad() { grad.fill(0.0); }
};

/// Recorded computation graph over dense double tensors. Nodes are appended
/// in topological order; backward() replays them in reverse with exact
/// adjoints and a fixed summation order, so gradients are deterministic.
///
/// A tape is single-threaded by construction. Data parallelism happens one
/// level up: one tape per sample, per-sample gradients reduced in index order.
class Tape {
public:
    using Id = std::int32_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Non-differentiable input (data, frozen tables).
    Id constant(Tensor value);

    /// Differentiable leaf; gradients are collected here.
    Id leaf(Tensor value);

    /// Stages a parameter's current value as a leaf.
    Id leaf_of(const Parameter& p) { return leaf(p.value); }

    // ---- primitives (each records an exact adjoint) ----
    Id matmul(Id a, Id b);                  // (m,k) x (k,n) -> (m,n)
    Id vecmat(Id v, Id m);                  // (k,) x (k,n) -> (n,)
    Id matvec(Id m, Id v);                  // (n,k) x (k,) -> (n,)
    Id add(Id a, Id b);                     // same shape | b row-vector | b scalar
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);                     // elementwise, same broadcasts as add
    Id scale(Id a, double c);
    Id tanh(Id a);
    Id sigmoid(Id a);                       // 1 / (1 + exp(-x))
    Id relu(Id a);
    Id log(Id a);
    Id masked_softmax(Id logits, const Tensor& mask);  // (n,), mask 0/1 (n,)
    Id concat(const std::vector<Id>& parts, std::size_t axis);
    Id slice1d(Id a, std::size_t start, std::size_t len);
    Id row(Id matrix, std::size_t index);             // (n,d) -> (d,)
    Id stack_rows(const std::vector<Id>& rows);       // n x (d,) -> (n,d)
    Id reshape(Id a, std::vector<std::size_t> shape);
    Id reduce_sum(Id a);                              // all entries -> scalar
    Id reduce_sum_axis(Id a, std::size_t axis);       // rank-2 only
    Id reduce_max_axis0(Id a);                        // (m,n) -> (n,), first argmax wins
    Id weighted_sum(Id items, Id weights);            // (n,d),(n,) -> (d,)
    Id embedding_rows(Id table, const std::vector<std::int32_t>& ids);  // gather rows
    Id conv1d_valid(Id input, Id kernel, Id bias);    // (T,dc),(w,dc,nf),(nf,) -> (T-w+1,nf)
    Id cross_entropy_from_logits(Id logits, const std::vector<int>& labels);  // (B,C) -> scalar
    Id cross_entropy_from_logits(Id logits, int label);                       // (C,) -> scalar

    /// Reverse-mode sweep from a scalar root. Leaves not on the path keep a
    /// zero gradient.
    void backward(Id root);

    const Tensor& value(Id id) const { return nodes_[check(id)].value; }
    /// Gradient of the last backward() root w.r.t. this node; zeros if the
    /// node is off the path.
    Tensor grad(Id id) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<Id> parents;
        std::function<void(Tape&, Id)> backprop;
        bool differentiable = false;
    };

    Id push(Tensor value, std::vector<Id> parents, std::function<void(Tape&, Id)> backprop);
    std::size_t check(Id id) const;
    bool wants_grad(Id id) const { return nodes_[check(id)].differentiable; }
    /// Gradient buffer for id, allocated as zeros on first touch.
    Tensor& grad_ref(Id id);
    const Tensor* grad_if_any(Id id) const;

    // deques: values/grads keep stable addresses while the tape grows
    std::deque<Node> nodes_;
    std::deque<Tensor> grads_;
};

}  // namespace profiler::ad
