#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "slcvae/tensor.hpp"

namespace slcvae {

// Named trainable tensor with a persistent gradient accumulator. The grad is
// only written by backward() when `trainable` is set, which is how the two
// training phases freeze each other's parameter sets.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

    void zero_grad() { grad.fill(0.0); }
};

// One node of the per-forward-pass expression graph. The graph lives only as
// long as the Vars referencing it; it is rebuilt every batch.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by backward()
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // adds into parents' grads
    Parameter* param = nullptr;           // set on parameter leaves
};

using Var = std::shared_ptr<Node>;

inline Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return n;
}

inline Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

inline Var leaf(Parameter& p) {
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->param = &p;
    return n;
}

namespace detail {

inline Var make_node(Tensor value, std::vector<Var> parents,
                     std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    return n;
}

inline Tensor& grad_of(Node& n, std::size_t parent) {
    Node& p = *n.parents[parent];
    if (p.grad.size() == 0) p.grad = Tensor::zeros_like(p.value);
    return p.grad;
}

}  // namespace detail

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return detail::make_node(std::move(out), {a, b}, [](Node& n) {
        Tensor& ga = detail::grad_of(n, 0);
        Tensor& gb = detail::grad_of(n, 1);
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i];
            gb[i] += n.grad[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return detail::make_node(std::move(out), {a, b}, [](Node& n) {
        Tensor& ga = detail::grad_of(n, 0);
        Tensor& gb = detail::grad_of(n, 1);
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i];
            gb[i] -= n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return detail::make_node(std::move(out), {a, b}, [](Node& n) {
        Tensor& ga = detail::grad_of(n, 0);
        Tensor& gb = detail::grad_of(n, 1);
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i] * bv[i];
            gb[i] += n.grad[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, double k) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= k;
    return detail::make_node(std::move(out), {a}, [k](Node& n) {
        Tensor& ga = detail::grad_of(n, 0);
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += k * n.grad[i];
    });
}

enum class Activation { Sigmoid, Tanh, Exp, Relu };

inline Var activation(Activation kind, const Var& x) {
    check_finite(x->value, "activation");
    Tensor out = x->value;
    switch (kind) {
        case Activation::Sigmoid:
            for (auto& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case Activation::Tanh:
            for (auto& v : out.vec()) v = std::tanh(v);
            break;
        case Activation::Exp:
            for (auto& v : out.vec()) v = std::exp(v);
            break;
        case Activation::Relu:
            for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
            break;
    }
    Tensor saved = out;
    return detail::make_node(std::move(out), {x}, [kind, saved](Node& n) {
        Tensor& gx = detail::grad_of(n, 0);
        switch (kind) {
            case Activation::Sigmoid:
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    gx[i] += n.grad[i] * saved[i] * (1.0 - saved[i]);
                break;
            case Activation::Tanh:
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    gx[i] += n.grad[i] * (1.0 - saved[i] * saved[i]);
                break;
            case Activation::Exp:
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    gx[i] += n.grad[i] * saved[i];
                break;
            case Activation::Relu:
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    gx[i] += saved[i] > 0.0 ? n.grad[i] : 0.0;
                break;
        }
    });
}

inline Var sigmoid(const Var& x) { return activation(Activation::Sigmoid, x); }
inline Var tanh_v(const Var& x) { return activation(Activation::Tanh, x); }
inline Var exp_v(const Var& x) { return activation(Activation::Exp, x); }
inline Var relu(const Var& x) { return activation(Activation::Relu, x); }

// Gradient passes only through unclamped elements.
inline Var clamp(const Var& x, double lo, double hi) {
    Tensor out = x->value;
    for (auto& v : out.vec()) v = std::min(hi, std::max(lo, v));
    return detail::make_node(std::move(out), {x}, [lo, hi](Node& n) {
        Tensor& gx = detail::grad_of(n, 0);
        const Tensor& xv = n.parents[0]->value;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (xv[i] > lo && xv[i] < hi) gx[i] += n.grad[i];
        }
    });
}

// ---- matrix ops ----

inline Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
        throw std::invalid_argument("matmul: incompatible shapes " + av.shape_str() +
                                    " and " + bv.shape_str());
    }
    check_finite(av, "matmul lhs");
    check_finite(bv, "matmul rhs");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av.data()[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bv.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return detail::make_node(std::move(out), {a, b}, [m, k, n](Node& nd) {
        const Tensor& av2 = nd.parents[0]->value;
        const Tensor& bv2 = nd.parents[1]->value;
        Tensor& ga = detail::grad_of(nd, 0);
        Tensor& gb = detail::grad_of(nd, 1);
        // dA[i][p] = sum_j dC[i][j] * B[p][j]
        for (std::size_t i = 0; i < m; ++i) {
            const double* grow = nd.grad.data() + i * n;
            double* garow = ga.data() + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = bv2.data() + p * n;
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                garow[p] += s;
            }
        }
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = av2.data() + i * k;
            const double* grow = nd.grad.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double a2 = arow[p];
                if (a2 == 0.0) continue;
                double* gbrow = gb.data() + p * n;
                for (std::size_t j = 0; j < n; ++j) gbrow[j] += a2 * grow[j];
            }
        }
    });
}

// mat [B x D] + bias [D], row-broadcast.
inline Var add_bias(const Var& mat, const Var& bias) {
    const std::size_t rows = mat->value.rows(), cols = mat->value.cols();
    if (bias->value.size() != cols) {
        throw std::invalid_argument("add_bias: bias " + bias->value.shape_str() +
                                    " vs matrix " + mat->value.shape_str());
    }
    Tensor out = mat->value;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.data()[r * cols + c] += bias->value[c];
    return detail::make_node(std::move(out), {mat, bias}, [rows, cols](Node& n) {
        Tensor& gm = detail::grad_of(n, 0);
        Tensor& gb = detail::grad_of(n, 1);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double g = n.grad.data()[r * cols + c];
                gm.data()[r * cols + c] += g;
                gb[c] += g;
            }
        }
    });
}

// Column-wise concat of [B x m] and [B x n].
inline Var concat_cols(const Var& a, const Var& b) {
    const std::size_t rows = a->value.rows();
    if (b->value.rows() != rows) {
        throw std::invalid_argument("concat_cols: row mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
    }
    const std::size_t ca = a->value.cols(), cb = b->value.cols();
    Tensor out({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a->value.data() + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(b->value.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    return detail::make_node(std::move(out), {a, b}, [rows, ca, cb](Node& n) {
        Tensor& ga = detail::grad_of(n, 0);
        Tensor& gb = detail::grad_of(n, 1);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = n.grad.data() + r * (ca + cb);
            for (std::size_t c = 0; c < ca; ++c) ga.data()[r * ca + c] += g[c];
            for (std::size_t c = 0; c < cb; ++c) gb.data()[r * cb + c] += g[ca + c];
        }
    });
}

inline Var slice_cols(const Var& x, std::size_t from, std::size_t len) {
    const std::size_t rows = x->value.rows(), cols = x->value.cols();
    if (from + len > cols) {
        throw std::invalid_argument("slice_cols: [" + std::to_string(from) + ", " +
                                    std::to_string(from + len) + ") out of " +
                                    x->value.shape_str());
    }
    Tensor out({rows, len});
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(x->value.data() + r * cols + from, len, out.data() + r * len);
    return detail::make_node(std::move(out), {x}, [rows, cols, from, len](Node& n) {
        Tensor& gx = detail::grad_of(n, 0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < len; ++c)
                gx.data()[r * cols + from + c] += n.grad.data()[r * len + c];
    });
}

// Gathers rows of `table` [V x E] by id, producing [B x E]. The embedding lookup.
inline Var gather_rows(const Var& table, const std::vector<std::size_t>& ids) {
    const std::size_t v = table->value.rows(), e = table->value.cols();
    for (std::size_t id : ids) {
        if (id >= v) {
            throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                                    " >= table rows " + std::to_string(v));
        }
    }
    Tensor out({ids.size(), e});
    for (std::size_t r = 0; r < ids.size(); ++r)
        std::copy_n(table->value.data() + ids[r] * e, e, out.data() + r * e);
    return detail::make_node(std::move(out), {table}, [ids, e](Node& n) {
        Tensor& gt = detail::grad_of(n, 0);
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t c = 0; c < e; ++c)
                gt.data()[ids[r] * e + c] += n.grad.data()[r * e + c];
    });
}

// ---- reductions ----

inline Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x->value.vec()) s += v;
    return detail::make_node(Tensor::scalar(s), {x}, [](Node& n) {
        Tensor& gx = detail::grad_of(n, 0);
        const double g = n.grad[0];
        for (auto& v : gx.vec()) v += g;
    });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x->value.size())); }

// Row-wise sum of [B x D] -> [B].
inline Var sum_rows(const Var& x) {
    const std::size_t rows = x->value.rows(), cols = x->value.cols();
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += x->value.data()[r * cols + c];
        out[r] = s;
    }
    return detail::make_node(std::move(out), {x}, [rows, cols](Node& n) {
        Tensor& gx = detail::grad_of(n, 0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gx.data()[r * cols + c] += n.grad[r];
    });
}

// Weighted dot of a vector [B] with constant weights, -> scalar. Used for
// masked means over batch entries.
inline Var dot_const(const Var& x, const std::vector<double>& w) {
    if (x->value.size() != w.size()) {
        throw std::invalid_argument("dot_const: size mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += x->value[i] * w[i];
    return detail::make_node(Tensor::scalar(s), {x}, [w](Node& n) {
        Tensor& gx = detail::grad_of(n, 0);
        for (std::size_t i = 0; i < w.size(); ++i) gx[i] += n.grad[0] * w[i];
    });
}

// Per-row softmax cross-entropy: logits [B x V], one target id per row,
// -> losses [B]. Stabilized by max-subtraction. Rows with target == SIZE_MAX
// are skipped (loss 0, no gradient) so padded decoder steps drop out.
inline Var softmax_cross_entropy_rows(const Var& logits,
                                      const std::vector<std::size_t>& targets) {
    const std::size_t rows = logits->value.rows(), v = logits->value.cols();
    if (targets.size() != rows) {
        throw std::invalid_argument("softmax_cross_entropy_rows: targets size " +
                                    std::to_string(targets.size()) + " vs rows " +
                                    std::to_string(rows));
    }
    check_finite(logits->value, "softmax_cross_entropy");
    for (std::size_t t : targets) {
        if (t != static_cast<std::size_t>(-1) && t >= v) {
            throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(t) +
                                    " >= vocab " + std::to_string(v));
        }
    }
    Tensor out({rows});
    Tensor softmax({rows, v});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* lrow = logits->value.data() + r * v;
        double mx = lrow[0];
        for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, lrow[c]);
        double z = 0.0;
        double* srow = softmax.data() + r * v;
        for (std::size_t c = 0; c < v; ++c) {
            srow[c] = std::exp(lrow[c] - mx);
            z += srow[c];
        }
        for (std::size_t c = 0; c < v; ++c) srow[c] /= z;
        if (targets[r] == static_cast<std::size_t>(-1)) {
            out[r] = 0.0;
        } else {
            out[r] = -(lrow[targets[r]] - mx - std::log(z));
        }
    }
    return detail::make_node(
        std::move(out), {logits},
        [rows, v, targets, softmax = std::move(softmax)](Node& n) {
            Tensor& gl = detail::grad_of(n, 0);
            for (std::size_t r = 0; r < rows; ++r) {
                if (targets[r] == static_cast<std::size_t>(-1)) continue;
                const double g = n.grad[r];
                if (g == 0.0) continue;
                const double* srow = softmax.data() + r * v;
                double* grow = gl.data() + r * v;
                for (std::size_t c = 0; c < v; ++c) grow[c] += g * srow[c];
                grow[targets[r]] -= g;
            }
        });
}

inline Var softmax_cross_entropy(const Var& logits, std::size_t target) {
    Var flat = logits;
    if (logits->value.rank() == 1) {
        flat = detail::make_node(Tensor({1, logits->value.size()}, logits->value.vec()),
                                 {logits}, [](Node& n) {
                                     Tensor& gx = detail::grad_of(n, 0);
                                     for (std::size_t i = 0; i < n.grad.size(); ++i)
                                         gx[i] += n.grad[i];
                                 });
    }
    Var row = softmax_cross_entropy_rows(flat, {target});
    return sum(row);
}

// Detach: value flows forward, gradient stops here.
inline Var detach(const Var& x) { return constant(x->value); }

// ---- backward ----

// Reverse sweep from a scalar root. Gradients accumulate (+=) into every
// trainable Parameter encountered; intermediate node grads are discarded with
// the graph.
inline void backward(const Var& root) {
    if (root->value.size() != 1) {
        throw std::logic_error("backward: root must be scalar, got " +
                               root->value.shape_str());
    }
    // Iterative topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad = Tensor::scalar(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->grad.size() == 0) continue;  // unreachable from root
        if (n->backprop) n->backprop(*n);
        if (n->param && n->param->trainable) {
            Tensor& g = n->param->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n->grad[i];
        }
    }
}

}  // namespace slcvae
