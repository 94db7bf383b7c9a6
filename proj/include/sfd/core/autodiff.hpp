#pragma once

// Reverse-mode automatic differentiation over a linear tape.
//
// Nodes are appended in execution order, so the tape is topologically sorted
// by construction; backward() walks it once in reverse and sums gradient
// contributions over fan-out.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include "sfd/core/tensor.hpp"

namespace sfd::ad {

struct TapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Accumulator type for reductions: at least 64-bit.
template <class T>
using Acc = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

template <class T>
class Tape;

template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    const Tensor<T>& value() const { return tape->value(id); }
    const Shape& shape() const { return value().shape(); }
    int rows() const { return value().rows(); }
    int cols() const { return value().cols(); }
};

template <class T>
class Tape {
public:
    // Receives the output gradient and one accumulator slot per input
    // (nullptr when that input does not need a gradient).
    using BackwardFn = std::function<void(const Tensor<T>& grad_out, std::vector<Tensor<T>*>& grad_in)>;

    struct Node {
        Tensor<T> value;
        bool requires_grad = false;
        std::vector<int> inputs;
        BackwardFn backward;
        const char* op = "leaf";
    };

    Var<T> leaf(Tensor<T> value, bool requires_grad = false)
    {
        require_finite(value, "leaf");
        nodes_.push_back(Node{std::move(value), requires_grad, {}, {}, "leaf"});
        return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
    }

    Var<T> record(const char* op, Tensor<T> value, std::vector<int> inputs, BackwardFn backward)
    {
        require_finite(value, op);
        bool rg = false;
        for (int i : inputs) {
            if (i < 0 || i >= static_cast<int>(nodes_.size())) {
                throw TapeError(std::string(op) + ": input node does not precede output");
            }
            rg = rg || nodes_[static_cast<std::size_t>(i)].requires_grad;
        }
        nodes_.push_back(Node{std::move(value), rg, std::move(inputs), rg ? std::move(backward) : BackwardFn{}, op});
        return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor<T>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Test hook: lets tests build malformed tapes to exercise validation.
    std::vector<Node>& nodes_for_testing() { return nodes_; }

private:
    std::vector<Node> nodes_;
};

// Gradient of the loss with respect to every requires_grad node. Nodes with no
// path to the loss get a zero tensor.
template <class T>
class Gradients {
public:
    explicit Gradients(std::vector<Tensor<T>> g, std::vector<bool> present)
        : grads_(std::move(g)), present_(std::move(present))
    {
    }

    bool has(int id) const { return id >= 0 && id < static_cast<int>(present_.size()) && present_[id]; }
    const Tensor<T>& at(int id) const
    {
        if (!has(id)) {
            throw TapeError("no gradient recorded for node " + std::to_string(id));
        }
        return grads_[static_cast<std::size_t>(id)];
    }
    const Tensor<T>& operator[](const Var<T>& v) const { return at(v.id); }

private:
    std::vector<Tensor<T>> grads_;
    std::vector<bool> present_;
};

template <class T>
Gradients<T> backward(const Tape<T>& tape, int loss_id)
{
    const auto n = static_cast<int>(tape.size());
    if (loss_id < 0 || loss_id >= n) {
        throw TapeError("loss node out of range");
    }
    if (tape.value(loss_id).size() != 1) {
        throw TapeError("backward requires a scalar loss, got shape " + to_string(tape.value(loss_id).shape()));
    }
    for (int i = 0; i < n; ++i) {
        for (int in : tape.node(i).inputs) {
            if (in >= i) {
                throw TapeError("tape is not topologically ordered (cycle or forward reference at node " +
                                std::to_string(i) + ")");
            }
        }
    }

    std::vector<Tensor<T>> grads(static_cast<std::size_t>(n));
    std::vector<bool> seeded(static_cast<std::size_t>(n), false);
    if (tape.node(loss_id).requires_grad) {
        grads[static_cast<std::size_t>(loss_id)] = Tensor<T>(tape.value(loss_id).shape(), T(1));
        seeded[static_cast<std::size_t>(loss_id)] = true;
    }

    std::vector<Tensor<T>*> slots;
    for (int i = loss_id; i >= 0; --i) {
        const auto& node = tape.node(i);
        if (!seeded[static_cast<std::size_t>(i)] || !node.backward) {
            continue;
        }
        slots.assign(node.inputs.size(), nullptr);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const int in = node.inputs[k];
            if (!tape.node(in).requires_grad) {
                continue;
            }
            if (!seeded[static_cast<std::size_t>(in)]) {
                grads[static_cast<std::size_t>(in)] = Tensor<T>(tape.value(in).shape(), T(0));
                seeded[static_cast<std::size_t>(in)] = true;
            }
            slots[k] = &grads[static_cast<std::size_t>(in)];
        }
        node.backward(grads[static_cast<std::size_t>(i)], slots);
    }

    std::vector<bool> present(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n; ++i) {
        if (!tape.node(i).requires_grad) {
            continue;
        }
        if (!seeded[static_cast<std::size_t>(i)]) {
            grads[static_cast<std::size_t>(i)] = Tensor<T>(tape.value(i).shape(), T(0));
        }
        present[static_cast<std::size_t>(i)] = true;
    }
    return Gradients<T>(std::move(grads), std::move(present));
}

template <class T>
Gradients<T> backward(const Var<T>& loss)
{
    return backward(*loss.tape, loss.id);
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op)
{
    if (a.tape != b.tape) {
        throw TapeError(std::string(op) + ": operands live on different tapes");
    }
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

template <class T>
void check_rank2(const Var<T>& a, const char* op)
{
    if (a.value().rank() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + to_string(a.shape()));
    }
}

template <class T, class F, class DF>
Var<T> unary(const char* op, const Var<T>& x, F f, DF df)
{
    const auto& xv = x.value();
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = f(xv[i]);
    }
    Tape<T>* tape = x.tape;
    const int xid = x.id;
    const int oid = static_cast<int>(tape->size());
    return tape->record(op, std::move(out), {xid}, [tape, xid, oid, df](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) {
            return;
        }
        const auto& xv = tape->value(xid);
        const auto& yv = tape->value(oid);
        auto& dx = *gi[0];
        for (std::size_t i = 0; i < xv.size(); ++i) {
            dx[i] += g[i] * df(xv[i], yv[i]);
        }
    });
}

} // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    detail::check_same(a, b, "add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] + b.value()[i];
    }
    return a.tape->record("add", std::move(out), {a.id, b.id}, [](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        for (auto* d : gi) {
            if (d) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    (*d)[i] += g[i];
                }
            }
        }
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    detail::check_same(a, b, "sub");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] - b.value()[i];
    }
    return a.tape->record("sub", std::move(out), {a.id, b.id}, [](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[0])[i] += g[i];
            }
        }
        if (gi[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[1])[i] -= g[i];
            }
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    detail::check_same(a, b, "mul");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] * b.value()[i];
    }
    Tape<T>* tape = a.tape;
    const int aid = a.id, bid = b.id;
    return tape->record("mul", std::move(out), {aid, bid}, [tape, aid, bid](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        const auto& av = tape->value(aid);
        const auto& bv = tape->value(bid);
        if (gi[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[0])[i] += g[i] * bv[i];
            }
        }
        if (gi[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[1])[i] += g[i] * av[i];
            }
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& x, T c)
{
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x.value()[i] * c;
    }
    return x.tape->record("scale", std::move(out), {x.id}, [c](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[0])[i] += g[i] * c;
            }
        }
    });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T c)
{
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x.value()[i] + c;
    }
    return x.tape->record("add_scalar", std::move(out), {x.id}, [](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[0])[i] += g[i];
            }
        }
    });
}

// x [m x n] + row [1 x n], broadcast over rows.
template <class T>
Var<T> add_row(const Var<T>& x, const Var<T>& row)
{
    detail::check_rank2(x, "add_row");
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw ShapeError("add_row: row shape " + to_string(row.shape()) + " incompatible with " + to_string(x.shape()));
    }
    const int m = x.rows(), n = x.cols();
    Tensor<T> out(x.shape());
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            out.at(r, c) = x.value().at(r, c) + row.value()[static_cast<std::size_t>(c)];
        }
    }
    return x.tape->record("add_row", std::move(out), {x.id, row.id}, [m, n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[0])[i] += g[i];
            }
        }
        if (gi[1]) {
            for (int c = 0; c < n; ++c) {
                Acc<T> s = 0;
                for (int r = 0; r < m; ++r) {
                    s += g.at(r, c);
                }
                (*gi[1])[static_cast<std::size_t>(c)] += static_cast<T>(s);
            }
        }
    });
}

// x [m x n] * row [1 x n], broadcast over rows.
template <class T>
Var<T> mul_row(const Var<T>& x, const Var<T>& row)
{
    detail::check_rank2(x, "mul_row");
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw ShapeError("mul_row: row shape " + to_string(row.shape()) + " incompatible with " + to_string(x.shape()));
    }
    const int m = x.rows(), n = x.cols();
    Tensor<T> out(x.shape());
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            out.at(r, c) = x.value().at(r, c) * row.value()[static_cast<std::size_t>(c)];
        }
    }
    Tape<T>* tape = x.tape;
    const int xid = x.id, rid = row.id;
    return tape->record("mul_row", std::move(out), {xid, rid}, [tape, xid, rid, m, n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        const auto& xv = tape->value(xid);
        const auto& rv = tape->value(rid);
        if (gi[0]) {
            for (int r = 0; r < m; ++r) {
                for (int c = 0; c < n; ++c) {
                    gi[0]->at(r, c) += g.at(r, c) * rv[static_cast<std::size_t>(c)];
                }
            }
        }
        if (gi[1]) {
            for (int c = 0; c < n; ++c) {
                Acc<T> s = 0;
                for (int r = 0; r < m; ++r) {
                    s += g.at(r, c) * xv.at(r, c);
                }
                (*gi[1])[static_cast<std::size_t>(c)] += static_cast<T>(s);
            }
        }
    });
}

namespace detail {

// out[m x n] = A[m x k] * B[k x n] with wide accumulation.
template <class T>
void gemm(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out, int m, int k, int n)
{
    std::vector<Acc<T>> row(static_cast<std::size_t>(n));
    for (int i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), Acc<T>(0));
        for (int p = 0; p < k; ++p) {
            const Acc<T> av = a.at(i, p);
            if (av == Acc<T>(0)) {
                continue;
            }
            const T* brow = &b.data()[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) {
                row[static_cast<std::size_t>(j)] += av * brow[j];
            }
        }
        for (int j = 0; j < n; ++j) {
            out.at(i, j) = static_cast<T>(row[static_cast<std::size_t>(j)]);
        }
    }
}

} // namespace detail

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b)
{
    detail::check_rank2(a, "matmul");
    detail::check_rank2(b, "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    Tensor<T> out({m, n});
    detail::gemm(a.value(), b.value(), out, m, k, n);
    Tape<T>* tape = a.tape;
    const int aid = a.id, bid = b.id;
    return tape->record("matmul", std::move(out), {aid, bid}, [tape, aid, bid, m, k, n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        const auto& av = tape->value(aid);
        const auto& bv = tape->value(bid);
        if (gi[0]) {
            // dA = G * B^T
            for (int i = 0; i < m; ++i) {
                for (int p = 0; p < k; ++p) {
                    Acc<T> s = 0;
                    for (int j = 0; j < n; ++j) {
                        s += static_cast<Acc<T>>(g.at(i, j)) * bv.at(p, j);
                    }
                    gi[0]->at(i, p) += static_cast<T>(s);
                }
            }
        }
        if (gi[1]) {
            // dB = A^T * G
            std::vector<Acc<T>> acc(static_cast<std::size_t>(k) * n, Acc<T>(0));
            for (int i = 0; i < m; ++i) {
                for (int p = 0; p < k; ++p) {
                    const Acc<T> a_ip = av.at(i, p);
                    for (int j = 0; j < n; ++j) {
                        acc[static_cast<std::size_t>(p) * n + j] += a_ip * g.at(i, j);
                    }
                }
            }
            for (std::size_t q = 0; q < acc.size(); ++q) {
                (*gi[1])[q] += static_cast<T>(acc[q]);
            }
        }
    });
}

template <class T>
Var<T> transpose(const Var<T>& x)
{
    detail::check_rank2(x, "transpose");
    const int m = x.rows(), n = x.cols();
    Tensor<T> out({n, m});
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            out.at(c, r) = x.value().at(r, c);
        }
    }
    return x.tape->record("transpose", std::move(out), {x.id}, [m, n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (int r = 0; r < m; ++r) {
                for (int c = 0; c < n; ++c) {
                    gi[0]->at(r, c) += g.at(c, r);
                }
            }
        }
    });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape)
{
    if (numel(shape) != x.value().size()) {
        throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
    }
    Tensor<T> out(std::move(shape), x.value().data());
    return x.tape->record("reshape", std::move(out), {x.id}, [](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[0])[i] += g[i];
            }
        }
    });
}

// Stack along axis 0 (rows). All parts must share the column count.
template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts)
{
    if (parts.empty()) {
        throw ShapeError("concat_rows: no inputs");
    }
    const int n = parts[0].cols();
    int m = 0;
    std::vector<int> ids;
    std::vector<int> offsets;
    for (const auto& p : parts) {
        detail::check_rank2(p, "concat_rows");
        if (p.cols() != n) {
            throw ShapeError("concat_rows: column mismatch");
        }
        offsets.push_back(m);
        m += p.rows();
        ids.push_back(p.id);
    }
    Tensor<T> out({m, n});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[k]) * n);
    }
    return parts[0].tape->record("concat_rows", std::move(out), ids, [offsets, n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        for (std::size_t k = 0; k < gi.size(); ++k) {
            if (!gi[k]) {
                continue;
            }
            const std::size_t base = static_cast<std::size_t>(offsets[k]) * n;
            for (std::size_t i = 0; i < gi[k]->size(); ++i) {
                (*gi[k])[i] += g[base + i];
            }
        }
    });
}

// Join along axis 1 (columns). All parts must share the row count.
template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts)
{
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    const int m = parts[0].rows();
    int n = 0;
    std::vector<int> ids;
    std::vector<int> offsets;
    std::vector<int> widths;
    for (const auto& p : parts) {
        detail::check_rank2(p, "concat_cols");
        if (p.rows() != m) {
            throw ShapeError("concat_cols: row mismatch");
        }
        offsets.push_back(n);
        widths.push_back(p.cols());
        n += p.cols();
        ids.push_back(p.id);
    }
    Tensor<T> out({m, n});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < widths[k]; ++c) {
                out.at(r, offsets[k] + c) = v.at(r, c);
            }
        }
    }
    return parts[0].tape->record("concat_cols", std::move(out), ids, [offsets, widths, m](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        for (std::size_t k = 0; k < gi.size(); ++k) {
            if (!gi[k]) {
                continue;
            }
            for (int r = 0; r < m; ++r) {
                for (int c = 0; c < widths[k]; ++c) {
                    gi[k]->at(r, c) += g.at(r, offsets[k] + c);
                }
            }
        }
    });
}

// Rows [r0, r1).
template <class T>
Var<T> slice_rows(const Var<T>& x, int r0, int r1)
{
    detail::check_rank2(x, "slice_rows");
    if (r0 < 0 || r1 > x.rows() || r0 >= r1) {
        throw ShapeError("slice_rows: bad range");
    }
    const int n = x.cols();
    Tensor<T> out({r1 - r0, n});
    std::copy(x.value().data().begin() + static_cast<std::ptrdiff_t>(r0) * n,
              x.value().data().begin() + static_cast<std::ptrdiff_t>(r1) * n, out.data().begin());
    return x.tape->record("slice_rows", std::move(out), {x.id}, [r0, n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            const std::size_t base = static_cast<std::size_t>(r0) * n;
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gi[0])[base + i] += g[i];
            }
        }
    });
}

// Columns [c0, c1).
template <class T>
Var<T> slice_cols(const Var<T>& x, int c0, int c1)
{
    detail::check_rank2(x, "slice_cols");
    if (c0 < 0 || c1 > x.cols() || c0 >= c1) {
        throw ShapeError("slice_cols: bad range");
    }
    const int m = x.rows();
    Tensor<T> out({m, c1 - c0});
    for (int r = 0; r < m; ++r) {
        for (int c = c0; c < c1; ++c) {
            out.at(r, c - c0) = x.value().at(r, c);
        }
    }
    return x.tape->record("slice_cols", std::move(out), {x.id}, [c0, c1, m](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (int r = 0; r < m; ++r) {
                for (int c = c0; c < c1; ++c) {
                    gi[0]->at(r, c) += g.at(r, c - c0);
                }
            }
        }
    });
}

template <class T>
Var<T> sum(const Var<T>& x)
{
    Acc<T> s = 0;
    for (const auto& v : x.value().data()) {
        s += v;
    }
    return x.tape->record("sum", Tensor<T>::scalar(static_cast<T>(s)), {x.id}, [](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            for (auto& d : gi[0]->data()) {
                d += g[0];
            }
        }
    });
}

template <class T>
Var<T> mean(const Var<T>& x)
{
    Acc<T> s = 0;
    for (const auto& v : x.value().data()) {
        s += v;
    }
    const auto n = static_cast<Acc<T>>(x.value().size());
    return x.tape->record("mean", Tensor<T>::scalar(static_cast<T>(s / n)), {x.id}, [n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (gi[0]) {
            const T share = static_cast<T>(static_cast<Acc<T>>(g[0]) / n);
            for (auto& d : gi[0]->data()) {
                d += share;
            }
        }
    });
}

template <class T>
Var<T> tanh(const Var<T>& x)
{
    return detail::unary<T>(
        "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> exp(const Var<T>& x)
{
    return detail::unary<T>(
        "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(const Var<T>& x)
{
    return detail::unary<T>(
        "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x)
{
    return detail::unary<T>(
        "sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

// tanh approximation of GELU.
template <class T>
Var<T> gelu(const Var<T>& x)
{
    constexpr T k = static_cast<T>(0.7978845608028654); // sqrt(2/pi)
    constexpr T c = static_cast<T>(0.044715);
    return detail::unary<T>(
        "gelu", x,
        [](T v) { return T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v))); },
        [](T v, T) {
            const T u = k * (v + c * v * v * v);
            const T th = std::tanh(u);
            const T du = k * (T(1) + T(3) * c * v * v);
            return T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du;
        });
}

// Elementwise clamp; the gradient is zero where the input was clipped.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi)
{
    return detail::unary<T>(
        "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
        [lo, hi](T v, T) { return (v < lo || v > hi) ? T(0) : T(1); });
}

template <class T>
Var<T> softmax_rows(const Var<T>& x)
{
    detail::check_rank2(x, "softmax_rows");
    const int m = x.rows(), n = x.cols();
    Tensor<T> out(x.shape());
    for (int r = 0; r < m; ++r) {
        T mx = x.value().at(r, 0);
        for (int c = 1; c < n; ++c) {
            mx = std::max(mx, x.value().at(r, c));
        }
        Acc<T> s = 0;
        for (int c = 0; c < n; ++c) {
            const Acc<T> e = std::exp(static_cast<Acc<T>>(x.value().at(r, c) - mx));
            out.at(r, c) = static_cast<T>(e);
            s += e;
        }
        for (int c = 0; c < n; ++c) {
            out.at(r, c) = static_cast<T>(static_cast<Acc<T>>(out.at(r, c)) / s);
        }
    }
    Tape<T>* tape = x.tape;
    const int oid = static_cast<int>(tape->size());
    return tape->record("softmax_rows", std::move(out), {x.id}, [tape, oid, m, n](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) {
            return;
        }
        const auto& y = tape->value(oid);
        for (int r = 0; r < m; ++r) {
            Acc<T> dot = 0;
            for (int c = 0; c < n; ++c) {
                dot += static_cast<Acc<T>>(g.at(r, c)) * y.at(r, c);
            }
            for (int c = 0; c < n; ++c) {
                gi[0]->at(r, c) += static_cast<T>(y.at(r, c) * (g.at(r, c) - dot));
            }
        }
    });
}

// Per-row normalization to zero mean, unit variance (no affine part).
template <class T>
Var<T> layernorm_rows(const Var<T>& x, T eps = static_cast<T>(1e-5))
{
    detail::check_rank2(x, "layernorm_rows");
    const int m = x.rows(), n = x.cols();
    Tensor<T> out(x.shape());
    std::vector<T> inv_std(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) {
        Acc<T> mu = 0;
        for (int c = 0; c < n; ++c) {
            mu += x.value().at(r, c);
        }
        mu /= n;
        Acc<T> var = 0;
        for (int c = 0; c < n; ++c) {
            const Acc<T> d = x.value().at(r, c) - mu;
            var += d * d;
        }
        var /= n;
        const Acc<T> is = Acc<T>(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = static_cast<T>(is);
        for (int c = 0; c < n; ++c) {
            out.at(r, c) = static_cast<T>((x.value().at(r, c) - mu) * is);
        }
    }
    Tape<T>* tape = x.tape;
    const int oid = static_cast<int>(tape->size());
    return tape->record("layernorm_rows", std::move(out), {x.id}, [tape, oid, m, n, inv_std](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) {
            return;
        }
        const auto& y = tape->value(oid);
        for (int r = 0; r < m; ++r) {
            Acc<T> gm = 0, gy = 0;
            for (int c = 0; c < n; ++c) {
                gm += g.at(r, c);
                gy += static_cast<Acc<T>>(g.at(r, c)) * y.at(r, c);
            }
            gm /= n;
            gy /= n;
            const Acc<T> is = inv_std[static_cast<std::size_t>(r)];
            for (int c = 0; c < n; ++c) {
                gi[0]->at(r, c) += static_cast<T>(is * (g.at(r, c) - gm - y.at(r, c) * gy));
            }
        }
    });
}

// Embedding lookup: rows of table [V x d] selected by ids -> [ids.size() x d].
template <class T>
Var<T> gather_rows(const Var<T>& table, std::vector<int> ids)
{
    detail::check_rank2(table, "gather_rows");
    const int v = table.rows(), d = table.cols();
    if (ids.empty()) {
        throw ShapeError("gather_rows: empty index list");
    }
    Tensor<T> out({static_cast<int>(ids.size()), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw ShapeError("gather_rows: index out of range");
        }
        for (int c = 0; c < d; ++c) {
            out.at(static_cast<int>(i), c) = table.value().at(ids[i], c);
        }
    }
    return table.tape->record("gather_rows", std::move(out), {table.id}, [ids, d](const Tensor<T>& g, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) {
            return;
        }
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (int c = 0; c < d; ++c) {
                gi[0]->at(ids[i], c) += g.at(static_cast<int>(i), c);
            }
        }
    });
}

} // namespace sfd::ad
