#include "profiler/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "profiler/errors.hpp"
#include "profiler/linalg.hpp"

namespace profiler::ad {

namespace {

[[noreturn]] void shape_error(const std::string& op) {
    throw std::invalid_argument(op + ": shape mismatch");
}

enum class Broadcast { Same, RowVector, Scalar };

Broadcast classify_broadcast(const Tensor& a, const Tensor& b, const std::string& op) {
    if (a.same_shape(b)) return Broadcast::Same;
    if (b.numel() == 1) return Broadcast::Scalar;
    if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) return Broadcast::RowVector;
    shape_error(op);
}

/// Reduce a gradient shaped like `a` down to the shape of the broadcast
/// operand `b`. Sums run in ascending index order.
Tensor reduce_for_broadcast(const Tensor& g, const Tensor& b, Broadcast mode) {
    if (mode == Broadcast::Same) return g;
    if (mode == Broadcast::Scalar) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) s += g[i];
        Tensor out(b.shape());
        out[0] = s;
        return out;
    }
    const std::size_t rows = g.dim(0), cols = g.dim(1);
    Tensor out({cols});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j] += g.at(i, j);
    return out;
}

}  // namespace

Tape::Id Tape::push(Tensor value, std::vector<Id> parents,
                    std::function<void(Tape&, Id)> backprop) {
    bool diff = false;
    for (Id p : parents) diff = diff || nodes_[check(p)].differentiable;
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    if (diff) n.backprop = std::move(backprop);
    n.differentiable = diff;
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return static_cast<Id>(nodes_.size() - 1);
}

std::size_t Tape::check(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::logic_error("tape: invalid node id");
    return static_cast<std::size_t>(id);
}

Tensor& Tape::grad_ref(Id id) {
    const std::size_t i = check(id);
    if (!grads_[i].defined()) grads_[i] = Tensor(nodes_[i].value.shape());
    return grads_[i];
}

const Tensor* Tape::grad_if_any(Id id) const {
    const std::size_t i = check(id);
    return grads_[i].defined() ? &grads_[i] : nullptr;
}

Tensor Tape::grad(Id id) const {
    const std::size_t i = check(id);
    if (grads_[i].defined()) return grads_[i];
    return Tensor(nodes_[i].value.shape());
}

Tape::Id Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::leaf(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.differentiable = true;
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_error("matmul");
    Tensor out;
    linalg::gemm(av, false, bv, false, out, false);
    return push(std::move(out), {a, b}, [](Tape& t, Id self) {
        const auto& n = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        const Id pa = n.parents[0], pb = n.parents[1];
        if (t.wants_grad(pa)) linalg::gemm(g, false, t.value(pb), true, t.grad_ref(pa), true);
        if (t.wants_grad(pb)) linalg::gemm(t.value(pa), true, g, false, t.grad_ref(pb), true);
    });
}

Tape::Id Tape::vecmat(Id v, Id m) {
    const Tensor& vv = value(v);
    const Tensor& mv = value(m);
    if (vv.rank() != 1 || mv.rank() != 2 || vv.dim(0) != mv.dim(0)) shape_error("vecmat");
    const std::size_t k = mv.dim(0), n = mv.dim(1);
    Tensor out({n});
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double x = vv[kk];
        if (x == 0.0) continue;
        const double* row = mv.data() + kk * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += x * row[j];
    }
    return push(std::move(out), {v, m}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        const Id pv = nd.parents[0], pm = nd.parents[1];
        const Tensor& vv = t.value(pv);
        const Tensor& mv = t.value(pm);
        const std::size_t k = mv.dim(0), n = mv.dim(1);
        if (t.wants_grad(pv)) {
            Tensor& dv = t.grad_ref(pv);
            for (std::size_t kk = 0; kk < k; ++kk) {
                double s = 0.0;
                const double* row = mv.data() + kk * n;
                for (std::size_t j = 0; j < n; ++j) s += g[j] * row[j];
                dv[kk] += s;
            }
        }
        if (t.wants_grad(pm)) {
            Tensor& dm = t.grad_ref(pm);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double x = vv[kk];
                if (x == 0.0) continue;
                double* row = dm.data() + kk * n;
                for (std::size_t j = 0; j < n; ++j) row[j] += x * g[j];
            }
        }
    });
}

Tape::Id Tape::matvec(Id m, Id v) {
    const Tensor& mv = value(m);
    const Tensor& vv = value(v);
    if (mv.rank() != 2 || vv.rank() != 1 || mv.dim(1) != vv.dim(0)) shape_error("matvec");
    const std::size_t rows = mv.dim(0), k = mv.dim(1);
    Tensor out({rows});
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        const double* row = mv.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) s += row[kk] * vv[kk];
        out[i] = s;
    }
    return push(std::move(out), {m, v}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        const Id pm = nd.parents[0], pv = nd.parents[1];
        const Tensor& mv = t.value(pm);
        const Tensor& vv = t.value(pv);
        const std::size_t rows = mv.dim(0), k = mv.dim(1);
        if (t.wants_grad(pm)) {
            Tensor& dm = t.grad_ref(pm);
            for (std::size_t i = 0; i < rows; ++i) {
                const double gi = g[i];
                if (gi == 0.0) continue;
                double* row = dm.data() + i * k;
                for (std::size_t kk = 0; kk < k; ++kk) row[kk] += gi * vv[kk];
            }
        }
        if (t.wants_grad(pv)) {
            Tensor& dv = t.grad_ref(pv);
            for (std::size_t kk = 0; kk < k; ++kk) {
                double s = 0.0;
                for (std::size_t i = 0; i < rows; ++i) s += g[i] * mv.at(i, kk);
                dv[kk] += s;
            }
        }
    });
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    const Broadcast mode = classify_broadcast(av, bv, "add");
    Tensor out = av;
    if (mode == Broadcast::Same) {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    } else if (mode == Broadcast::Scalar) {
        const double s = bv[0];
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += s;
    } else {
        for (std::size_t i = 0; i < av.dim(0); ++i)
            for (std::size_t j = 0; j < av.dim(1); ++j) out.at(i, j) += bv[j];
    }
    return push(std::move(out), {a, b}, [mode](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        if (t.wants_grad(nd.parents[0])) t.grad_ref(nd.parents[0]).add_scaled(g, 1.0);
        if (t.wants_grad(nd.parents[1])) {
            Tensor r = reduce_for_broadcast(g, t.value(nd.parents[1]), mode);
            t.grad_ref(nd.parents[1]).add_scaled(r, 1.0);
        }
    });
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    const Broadcast mode = classify_broadcast(av, bv, "sub");
    Tensor out = av;
    if (mode == Broadcast::Same) {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    } else if (mode == Broadcast::Scalar) {
        const double s = bv[0];
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= s;
    } else {
        for (std::size_t i = 0; i < av.dim(0); ++i)
            for (std::size_t j = 0; j < av.dim(1); ++j) out.at(i, j) -= bv[j];
    }
    return push(std::move(out), {a, b}, [mode](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        if (t.wants_grad(nd.parents[0])) t.grad_ref(nd.parents[0]).add_scaled(g, 1.0);
        if (t.wants_grad(nd.parents[1])) {
            Tensor r = reduce_for_broadcast(g, t.value(nd.parents[1]), mode);
            t.grad_ref(nd.parents[1]).add_scaled(r, -1.0);
        }
    });
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    const Broadcast mode = classify_broadcast(av, bv, "mul");
    Tensor out = av;
    if (mode == Broadcast::Same) {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    } else if (mode == Broadcast::Scalar) {
        const double s = bv[0];
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    } else {
        for (std::size_t i = 0; i < av.dim(0); ++i)
            for (std::size_t j = 0; j < av.dim(1); ++j) out.at(i, j) *= bv[j];
    }
    return push(std::move(out), {a, b}, [mode](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        const Id pa = nd.parents[0], pb = nd.parents[1];
        const Tensor& av = t.value(pa);
        const Tensor& bv = t.value(pb);
        if (t.wants_grad(pa)) {
            Tensor& da = t.grad_ref(pa);
            if (mode == Broadcast::Same) {
                for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g[i] * bv[i];
            } else if (mode == Broadcast::Scalar) {
                da.add_scaled(g, bv[0]);
            } else {
                for (std::size_t i = 0; i < av.dim(0); ++i)
                    for (std::size_t j = 0; j < av.dim(1); ++j) da.at(i, j) += g.at(i, j) * bv[j];
            }
        }
        if (t.wants_grad(pb)) {
            Tensor ga = g;  // g .* a, then reduce like the broadcast
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= av[i];
            Tensor r = reduce_for_broadcast(ga, bv, mode);
            t.grad_ref(pb).add_scaled(r, 1.0);
        }
    });
}

Tape::Id Tape::scale(Id a, double c) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return push(std::move(out), {a}, [c](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (t.wants_grad(nd.parents[0]))
            t.grad_ref(nd.parents[0]).add_scaled(*t.grad_if_any(self), c);
    });
}

Tape::Id Tape::tanh(Id a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    return push(std::move(out), {a}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& y = t.value(self);
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < y.numel(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Tape::Id Tape::sigmoid(Id a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return push(std::move(out), {a}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& y = t.value(self);
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < y.numel(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Tape::Id Tape::relu(Id a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return push(std::move(out), {a}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& x = t.value(nd.parents[0]);
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < x.numel(); ++i)
            if (x[i] > 0.0) da[i] += g[i];
    });
}

Tape::Id Tape::log(Id a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    return push(std::move(out), {a}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& x = t.value(nd.parents[0]);
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < x.numel(); ++i) da[i] += g[i] / x[i];
    });
}

Tape::Id Tape::masked_softmax(Id logits, const Tensor& mask) {
    const Tensor& lv = value(logits);
    if (lv.rank() != 1 || !mask.same_shape(lv)) shape_error("masked_softmax");
    const std::size_t n = lv.numel();
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] != 0.0 && mask[i] != 1.0)
            throw std::invalid_argument("masked_softmax: mask entries must be 0 or 1");
        any = any || mask[i] == 1.0;
    }
    if (!any) throw InputError("masked_softmax: all-zero mask");

    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i] == 1.0 && lv[i] > mx) mx = lv[i];
    Tensor out({n});
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = mask[i] == 1.0 ? std::exp(lv[i] - mx) : 0.0;
        denom += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= denom;

    return push(std::move(out), {logits}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& y = t.value(self);
        const Tensor& g = *t.grad_if_any(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < y.numel(); ++i) dot += g[i] * y[i];
        Tensor& da = t.grad_ref(nd.parents[0]);
        // masked slots have y == 0, so their logits get exactly zero gradient
        for (std::size_t i = 0; i < y.numel(); ++i) da[i] += y[i] * (g[i] - dot);
    });
}

Tape::Id Tape::concat(const std::vector<Id>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const std::size_t rank = value(parts[0]).rank();
    if (rank == 0 || rank > 2 || axis >= rank) throw std::invalid_argument("concat: unsupported layout");

    std::vector<Id> parents = parts;
    Tensor out;
    if (rank == 1) {
        std::size_t total = 0;
        for (Id p : parts) {
            if (value(p).rank() != 1) shape_error("concat");
            total += value(p).numel();
        }
        out = Tensor({total});
        std::size_t off = 0;
        for (Id p : parts) {
            const Tensor& t = value(p);
            for (std::size_t i = 0; i < t.numel(); ++i) out[off + i] = t[i];
            off += t.numel();
        }
    } else if (axis == 0) {
        const std::size_t cols = value(parts[0]).dim(1);
        std::size_t rows = 0;
        for (Id p : parts) {
            if (value(p).rank() != 2 || value(p).dim(1) != cols) shape_error("concat");
            rows += value(p).dim(0);
        }
        out = Tensor({rows, cols});
        std::size_t r = 0;
        for (Id p : parts) {
            const Tensor& t = value(p);
            for (std::size_t i = 0; i < t.dim(0); ++i, ++r)
                for (std::size_t j = 0; j < cols; ++j) out.at(r, j) = t.at(i, j);
        }
    } else {
        const std::size_t rows = value(parts[0]).dim(0);
        std::size_t cols = 0;
        for (Id p : parts) {
            if (value(p).rank() != 2 || value(p).dim(0) != rows) shape_error("concat");
            cols += value(p).dim(1);
        }
        out = Tensor({rows, cols});
        std::size_t c = 0;
        for (Id p : parts) {
            const Tensor& t = value(p);
            for (std::size_t j = 0; j < t.dim(1); ++j, ++c)
                for (std::size_t i = 0; i < rows; ++i) out.at(i, c) = t.at(i, j);
        }
    }

    return push(std::move(out), std::move(parents), [rank, axis](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        if (rank == 1) {
            std::size_t off = 0;
            for (Id p : nd.parents) {
                const std::size_t len = t.value(p).numel();
                if (t.wants_grad(p)) {
                    Tensor& dp = t.grad_ref(p);
                    for (std::size_t i = 0; i < len; ++i) dp[i] += g[off + i];
                }
                off += len;
            }
        } else if (axis == 0) {
            std::size_t r = 0;
            for (Id p : nd.parents) {
                const Tensor& pv = t.value(p);
                if (t.wants_grad(p)) {
                    Tensor& dp = t.grad_ref(p);
                    for (std::size_t i = 0; i < pv.dim(0); ++i)
                        for (std::size_t j = 0; j < pv.dim(1); ++j) dp.at(i, j) += g.at(r + i, j);
                }
                r += pv.dim(0);
            }
        } else {
            std::size_t c = 0;
            for (Id p : nd.parents) {
                const Tensor& pv = t.value(p);
                if (t.wants_grad(p)) {
                    Tensor& dp = t.grad_ref(p);
                    for (std::size_t i = 0; i < pv.dim(0); ++i)
                        for (std::size_t j = 0; j < pv.dim(1); ++j) dp.at(i, j) += g.at(i, c + j);
                }
                c += pv.dim(1);
            }
        }
    });
}

Tape::Id Tape::slice1d(Id a, std::size_t start, std::size_t len) {
    const Tensor& av = value(a);
    if (av.rank() != 1 || start + len > av.numel()) throw std::invalid_argument("slice1d: out of range");
    Tensor out({len});
    for (std::size_t i = 0; i < len; ++i) out[i] = av[start + i];
    return push(std::move(out), {a}, [start, len](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < len; ++i) da[start + i] += g[i];
    });
}

Tape::Id Tape::row(Id matrix, std::size_t index) {
    const Tensor& mv = value(matrix);
    if (mv.rank() != 2 || index >= mv.dim(0)) throw std::invalid_argument("row: out of range");
    const std::size_t d = mv.dim(1);
    Tensor out({d});
    for (std::size_t j = 0; j < d; ++j) out[j] = mv.at(index, j);
    return push(std::move(out), {matrix}, [index](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& g = *t.grad_if_any(self);
        Tensor& dm = t.grad_ref(nd.parents[0]);
        for (std::size_t j = 0; j < g.numel(); ++j) dm.at(index, j) += g[j];
    });
}

Tape::Id Tape::stack_rows(const std::vector<Id>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
    const std::size_t d = value(rows[0]).numel();
    for (Id r : rows)
        if (value(r).rank() != 1 || value(r).numel() != d) shape_error("stack_rows");
    Tensor out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& rv = value(rows[i]);
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = rv[j];
    }
    return push(std::move(out), rows, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        for (std::size_t i = 0; i < nd.parents.size(); ++i) {
            const Id p = nd.parents[i];
            if (!t.wants_grad(p)) continue;
            Tensor& dp = t.grad_ref(p);
            for (std::size_t j = 0; j < dp.numel(); ++j) dp[j] += g.at(i, j);
        }
    });
}

Tape::Id Tape::reshape(Id a, std::vector<std::size_t> shape) {
    const Tensor& av = value(a);
    Tensor out(shape);
    if (out.numel() != av.numel()) throw std::invalid_argument("reshape: element count mismatch");
    for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i];
    return push(std::move(out), {a}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    });
}

Tape::Id Tape::reduce_sum(Id a) {
    const Tensor& av = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
    return push(Tensor::scalar(s), {a}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const double g = (*t.grad_if_any(self))[0];
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g;
    });
}

Tape::Id Tape::reduce_sum_axis(Id a, std::size_t axis) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || axis > 1) throw std::invalid_argument("reduce_sum_axis: rank-2 only");
    const std::size_t rows = av.dim(0), cols = av.dim(1);
    Tensor out({axis == 0 ? cols : rows});
    if (axis == 0) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out[j] += av.at(i, j);
    } else {
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += av.at(i, j);
            out[i] = s;
        }
    }
    return push(std::move(out), {a}, [axis](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t i = 0; i < da.dim(0); ++i)
            for (std::size_t j = 0; j < da.dim(1); ++j) da.at(i, j) += axis == 0 ? g[j] : g[i];
    });
}

Tape::Id Tape::reduce_max_axis0(Id a) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || av.dim(0) == 0) throw std::invalid_argument("reduce_max_axis0: bad shape");
    const std::size_t rows = av.dim(0), cols = av.dim(1);
    Tensor out({cols});
    auto argmax = std::make_shared<std::vector<std::size_t>>(cols, 0);
    for (std::size_t j = 0; j < cols; ++j) {
        double best = av.at(0, j);
        std::size_t bi = 0;
        for (std::size_t i = 1; i < rows; ++i) {
            if (av.at(i, j) > best) {  // first maximum wins on ties
                best = av.at(i, j);
                bi = i;
            }
        }
        out[j] = best;
        (*argmax)[j] = bi;
    }
    return push(std::move(out), {a}, [argmax](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& g = *t.grad_if_any(self);
        Tensor& da = t.grad_ref(nd.parents[0]);
        for (std::size_t j = 0; j < g.numel(); ++j) da.at((*argmax)[j], j) += g[j];
    });
}

Tape::Id Tape::weighted_sum(Id items, Id weights) {
    const Tensor& xv = value(items);
    const Tensor& wv = value(weights);
    if (xv.rank() != 2 || wv.rank() != 1 || wv.dim(0) != xv.dim(0)) shape_error("weighted_sum");
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    Tensor out({d});
    for (std::size_t i = 0; i < n; ++i) {
        const double w = wv[i];
        if (w == 0.0) continue;
        const double* row = xv.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) out[j] += w * row[j];
    }
    return push(std::move(out), {items, weights}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        const Id px = nd.parents[0], pw = nd.parents[1];
        const Tensor& xv = t.value(px);
        const Tensor& wv = t.value(pw);
        const std::size_t n = xv.dim(0), d = xv.dim(1);
        if (t.wants_grad(px)) {
            Tensor& dx = t.grad_ref(px);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = wv[i];
                if (w == 0.0) continue;
                double* row = dx.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) row[j] += w * g[j];
            }
        }
        if (t.wants_grad(pw)) {
            Tensor& dw = t.grad_ref(pw);
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                const double* row = xv.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) s += g[j] * row[j];
                dw[i] += s;
            }
        }
    });
}

Tape::Id Tape::embedding_rows(Id table, const std::vector<std::int32_t>& ids) {
    const Tensor& tv = value(table);
    if (tv.rank() != 2) shape_error("embedding_rows");
    const std::size_t d = tv.dim(1);
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.dim(0))
            throw std::invalid_argument("embedding_rows: id out of range");
        const double* src = tv.data() + static_cast<std::size_t>(ids[i]) * d;
        double* dst = out.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    auto ids_copy = std::make_shared<std::vector<std::int32_t>>(ids);
    return push(std::move(out), {table}, [ids_copy](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const Tensor& g = *t.grad_if_any(self);
        Tensor& dt = t.grad_ref(nd.parents[0]);
        const std::size_t d = dt.dim(1);
        for (std::size_t i = 0; i < ids_copy->size(); ++i) {
            double* dst = dt.data() + static_cast<std::size_t>((*ids_copy)[i]) * d;
            const double* src = g.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

Tape::Id Tape::conv1d_valid(Id input, Id kernel, Id bias) {
    const Tensor& xv = value(input);
    const Tensor& kv = value(kernel);
    const Tensor& bv = value(bias);
    if (xv.rank() != 2 || kv.rank() != 3 || bv.rank() != 1) shape_error("conv1d_valid");
    const std::size_t T = xv.dim(0), dc = xv.dim(1);
    const std::size_t w = kv.dim(0), nf = kv.dim(2);
    if (kv.dim(1) != dc || bv.dim(0) != nf) shape_error("conv1d_valid");
    if (T < w) throw std::invalid_argument("conv1d_valid: input shorter than kernel");

    const std::size_t n_out = T - w + 1;
    Tensor out({n_out, nf});
    for (std::size_t t0 = 0; t0 < n_out; ++t0) {
        double* orow = out.data() + t0 * nf;
        for (std::size_t f = 0; f < nf; ++f) orow[f] = bv[f];
        for (std::size_t i = 0; i < w; ++i) {
            const double* xrow = xv.data() + (t0 + i) * dc;
            for (std::size_t c = 0; c < dc; ++c) {
                const double x = xrow[c];
                if (x == 0.0) continue;
                const double* krow = kv.data() + (i * dc + c) * nf;
                for (std::size_t f = 0; f < nf; ++f) orow[f] += x * krow[f];
            }
        }
    }
    return push(std::move(out), {input, kernel, bias}, [](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        const Tensor& g = *t.grad_if_any(self);
        const Id px = nd.parents[0], pk = nd.parents[1], pb = nd.parents[2];
        const Tensor& xv = t.value(px);
        const Tensor& kv = t.value(pk);
        const std::size_t dc = xv.dim(1);
        const std::size_t w = kv.dim(0), nf = kv.dim(2);
        const std::size_t n_out = g.dim(0);
        if (t.wants_grad(pb)) {
            Tensor& db = t.grad_ref(pb);
            for (std::size_t t0 = 0; t0 < n_out; ++t0)
                for (std::size_t f = 0; f < nf; ++f) db[f] += g.at(t0, f);
        }
        if (t.wants_grad(pk)) {
            Tensor& dk = t.grad_ref(pk);
            for (std::size_t t0 = 0; t0 < n_out; ++t0) {
                const double* grow = g.data() + t0 * nf;
                for (std::size_t i = 0; i < w; ++i) {
                    const double* xrow = xv.data() + (t0 + i) * dc;
                    for (std::size_t c = 0; c < dc; ++c) {
                        const double x = xrow[c];
                        if (x == 0.0) continue;
                        double* krow = dk.data() + (i * dc + c) * nf;
                        for (std::size_t f = 0; f < nf; ++f) krow[f] += x * grow[f];
                    }
                }
            }
        }
        if (t.wants_grad(px)) {
            Tensor& dx = t.grad_ref(px);
            for (std::size_t t0 = 0; t0 < n_out; ++t0) {
                const double* grow = g.data() + t0 * nf;
                for (std::size_t i = 0; i < w; ++i) {
                    double* xrow = dx.data() + (t0 + i) * dc;
                    for (std::size_t c = 0; c < dc; ++c) {
                        const double* krow = kv.data() + (i * dc + c) * nf;
                        double s = 0.0;
                        for (std::size_t f = 0; f < nf; ++f) s += grow[f] * krow[f];
                        xrow[c] += s;
                    }
                }
            }
        }
    });
}

Tape::Id Tape::cross_entropy_from_logits(Id logits, const std::vector<int>& labels) {
    const Tensor& lv = value(logits);
    if (lv.rank() != 2 || lv.dim(0) != labels.size())
        shape_error("cross_entropy_from_logits");
    const std::size_t batch = lv.dim(0), classes = lv.dim(1);
    for (int lab : labels)
        if (lab < 0 || static_cast<std::size_t>(lab) >= classes)
            throw std::invalid_argument("cross_entropy_from_logits: label out of range");

    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        const double* row = lv.data() + r * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
        total += mx + std::log(sum) - row[static_cast<std::size_t>(labels[r])];
    }
    auto labs = std::make_shared<std::vector<int>>(labels);
    return push(Tensor::scalar(total / static_cast<double>(batch)), {logits},
                [labs](Tape& t, Id self) {
        const auto& nd = t.nodes_[t.check(self)];
        if (!t.wants_grad(nd.parents[0])) return;
        const double g = (*t.grad_if_any(self))[0];
        const Tensor& lv = t.value(nd.parents[0]);
        const std::size_t batch = lv.dim(0), classes = lv.dim(1);
        Tensor& dl = t.grad_ref(nd.parents[0]);
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t r = 0; r < batch; ++r) {
            const double* row = lv.data() + r * classes;
            double mx = row[0];
            for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
            double sum = 0.0;
            for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
            for (std::size_t c = 0; c < classes; ++c) {
                const double p = std::exp(row[c] - mx) / sum;
                const double onehot = c == static_cast<std::size_t>((*labs)[r]) ? 1.0 : 0.0;
                dl.at(r, c) += g * inv_b * (p - onehot);
            }
        }
    });
}

Tape::Id Tape::cross_entropy_from_logits(Id logits, int label) {
    const Tensor& lv = value(logits);
    if (lv.rank() != 1) shape_error("cross_entropy_from_logits");
    Id wide = reshape(logits, {1, lv.numel()});
    return cross_entropy_from_logits(wide, std::vector<int>{label});
}

void Tape::backward(Id root) {
    const std::size_t r = check(root);
    if (nodes_[r].value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    grads_[r] = Tensor::full(nodes_[r].value.shape(), 1.0);
    for (std::size_t i = r + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.differentiable || !grads_[i].defined() || !n.backprop) continue;
        n.backprop(*this, static_cast<Id>(i));
    }
}

}  // namespace profiler::ad
