#include "cep3/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "cep3/nn.hpp"

namespace cep3::ad {

void Tape::check_finite(const Tensor& t, const char* op) {
    for (double x : t.v) {
        if (!std::isfinite(x)) {
            throw NonFiniteError(std::string("non-finite value produced by ") + op);
        }
    }
}

Var Tape::push(Tensor val, std::vector<std::size_t> parents,
               std::function<void(Tape&, std::size_t)> back) {
    Node n;
    n.grad = Tensor(val.rows, val.cols, 0.0);
    n.val = std::move(val);
    n.parents = std::move(parents);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor value, bool /*requires_grad*/) {
    check_finite(value, "leaf");
    return push(std::move(value), {}, nullptr);
}

Var Tape::param(const ParameterSet& ps, const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = leaf(ps.get(name), true);
    param_nodes_[name] = v.i;
    return v;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols != B.rows) throw ShapeError("matmul: inner dimensions differ");
    Tensor C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double aik = A.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = &B.v[k * B.cols];
            double* crow = &C.v[i * C.cols];
            for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    check_finite(C, "matmul");
    return push(std::move(C), {a.i, b.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& g = n.grad;
        const Tensor& A = t.nodes_[n.parents[0]].val;
        const Tensor& B = t.nodes_[n.parents[1]].val;
        Tensor& ga = t.grad_mut(n.parents[0]);
        Tensor& gb = t.grad_mut(n.parents[1]);
        // dA = g B^T
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t k = 0; k < A.cols; ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < B.cols; ++j)
                    s += g.at(i, j) * B.at(k, j);
                ga.at(i, k) += s;
            }
        // dB = A^T g
        for (std::size_t k = 0; k < B.rows; ++k)
            for (std::size_t j = 0; j < B.cols; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < A.rows; ++i)
                    s += A.at(i, k) * g.at(i, j);
                gb.at(k, j) += s;
            }
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.v[i] += B.v[i];
    check_finite(C, "add");
    return push(std::move(C), {a.i, b.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        for (std::size_t p = 0; p < 2; ++p) {
            Tensor& g = t.grad_mut(n.parents[p]);
            for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i];
        }
    });
}

Var Tape::add_rowvec(Var m, Var b) {
    const Tensor& M = value(m);
    const Tensor& B = value(b);
    if (B.rows != 1 || B.cols != M.cols)
        throw ShapeError("add_rowvec: bias must be 1 x cols(m)");
    Tensor C = M;
    for (std::size_t i = 0; i < M.rows; ++i)
        for (std::size_t j = 0; j < M.cols; ++j) C.at(i, j) += B.v[j];
    check_finite(C, "add_rowvec");
    return push(std::move(C), {m.i, b.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& gm = t.grad_mut(n.parents[0]);
        Tensor& gb = t.grad_mut(n.parents[1]);
        for (std::size_t i = 0; i < gm.rows; ++i)
            for (std::size_t j = 0; j < gm.cols; ++j) {
                gm.at(i, j) += n.grad.at(i, j);
                gb.v[j] += n.grad.at(i, j);
            }
    });
}

Var Tape::sub(Var a, Var b) { return add(a, neg(b)); }

Var Tape::mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ShapeError("mul: shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.v[i] *= B.v[i];
    check_finite(C, "mul");
    return push(std::move(C), {a.i, b.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& A = t.nodes_[n.parents[0]].val;
        const Tensor& B = t.nodes_[n.parents[1]].val;
        Tensor& ga = t.grad_mut(n.parents[0]);
        Tensor& gb = t.grad_mut(n.parents[1]);
        for (std::size_t i = 0; i < A.size(); ++i) {
            ga.v[i] += n.grad.v[i] * B.v[i];
            gb.v[i] += n.grad.v[i] * A.v[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor C = value(a);
    for (double& x : C.v) x *= c;
    check_finite(C, "scale");
    return push(std::move(C), {a.i}, [c](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += c * n.grad.v[i];
    });
}

Var Tape::add_scalar(Var a, double c) {
    Tensor C = value(a);
    for (double& x : C.v) x += c;
    check_finite(C, "add_scalar");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i];
    });
}

Var Tape::concat_cols(Var a, Var b) { return concat_cols(std::vector<Var>{a, b}); }

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input");
    std::size_t rows = value(xs[0]).rows;
    std::size_t cols = 0;
    for (Var x : xs) {
        if (value(x).rows != rows) throw ShapeError("concat_cols: row mismatch");
        cols += value(x).cols;
    }
    Tensor C(rows, cols);
    std::size_t off = 0;
    std::vector<std::size_t> parents;
    for (Var x : xs) {
        const Tensor& X = value(x);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < X.cols; ++j)
                C.at(i, off + j) = X.at(i, j);
        off += X.cols;
        parents.push_back(x.i);
    }
    return push(std::move(C), std::move(parents), [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        std::size_t off = 0;
        for (std::size_t p : n.parents) {
            Tensor& g = t.grad_mut(p);
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j)
                    g.at(i, j) += n.grad.at(i, off + j);
            off += g.cols;
        }
    });
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: empty input");
    std::size_t cols = value(rows[0]).cols;
    for (Var r : rows) {
        const Tensor& R = value(r);
        if (R.rows != 1 || R.cols != cols)
            throw ShapeError("stack_rows: inputs must be 1 x C rows");
    }
    Tensor C(rows.size(), cols);
    std::vector<std::size_t> parents;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& R = value(rows[i]);
        std::copy(R.v.begin(), R.v.end(), C.v.begin() + i * cols);
        parents.push_back(rows[i].i);
    }
    return push(std::move(C), std::move(parents), [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            Tensor& g = t.grad_mut(n.parents[i]);
            for (std::size_t j = 0; j < g.cols; ++j)
                g.v[j] += n.grad.at(i, j);
        }
    });
}

Var Tape::transpose(Var a) {
    const Tensor& A = value(a);
    Tensor C(A.cols, A.rows);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) C.at(j, i) = A.at(i, j);
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < g.cols; ++j)
                g.at(i, j) += n.grad.at(j, i);
    });
}

Var Tape::reshape(Var a, std::size_t r, std::size_t c) {
    const Tensor& A = value(a);
    if (A.size() != r * c) throw ShapeError("reshape: element count mismatch");
    Tensor C = A;
    C.rows = r;
    C.cols = c;
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i];
    });
}

Var Tape::row(Var m, std::size_t r) {
    const Tensor& M = value(m);
    if (r >= M.rows) throw ShapeError("row: index out of range");
    Tensor C(1, M.cols);
    for (std::size_t j = 0; j < M.cols; ++j) C.v[j] = M.at(r, j);
    return push(std::move(C), {m.i}, [r](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t j = 0; j < g.cols; ++j) g.at(r, j) += n.grad.v[j];
    });
}

Var Tape::pick(Var m, std::size_t r, std::size_t c) {
    const Tensor& M = value(m);
    if (r >= M.rows || c >= M.cols) throw ShapeError("pick: index out of range");
    Tensor C = Tensor::scalar(M.at(r, c));
    return push(std::move(C), {m.i}, [r, c](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        t.grad_mut(n.parents[0]).at(r, c) += n.grad.v[0];
    });
}

Var Tape::softmax_rows(Var m) {
    const Tensor& M = value(m);
    Tensor C(M.rows, M.cols);
    for (std::size_t i = 0; i < M.rows; ++i) {
        double mx = M.at(i, 0);
        for (std::size_t j = 1; j < M.cols; ++j) mx = std::max(mx, M.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < M.cols; ++j) {
            double e = std::exp(M.at(i, j) - mx);
            C.at(i, j) = e;
            z += e;
        }
        for (std::size_t j = 0; j < M.cols; ++j) C.at(i, j) /= z;
    }
    check_finite(C, "softmax");
    return push(std::move(C), {m.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& y = n.val;
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < y.rows; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols; ++j)
                dot += n.grad.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < y.cols; ++j)
                g.at(i, j) += y.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

namespace {
double softplus_stable(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
double sigmoid_stable(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

Var Tape::softplus(Var a) {
    Tensor C = value(a);
    for (double& x : C.v) x = softplus_stable(x);
    check_finite(C, "softplus");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& X = t.nodes_[n.parents[0]].val;
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < X.size(); ++i)
            g.v[i] += n.grad.v[i] * sigmoid_stable(X.v[i]);
    });
}

Var Tape::cos(Var a) {
    Tensor C = value(a);
    for (double& x : C.v) x = std::cos(x);
    check_finite(C, "cos");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& X = t.nodes_[n.parents[0]].val;
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < X.size(); ++i)
            g.v[i] += -n.grad.v[i] * std::sin(X.v[i]);
    });
}

Var Tape::tanh(Var a) {
    Tensor C = value(a);
    for (double& x : C.v) x = std::tanh(x);
    check_finite(C, "tanh");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < n.val.size(); ++i)
            g.v[i] += n.grad.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
    });
}

Var Tape::sigmoid(Var a) {
    Tensor C = value(a);
    for (double& x : C.v) x = sigmoid_stable(x);
    check_finite(C, "sigmoid");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < n.val.size(); ++i)
            g.v[i] += n.grad.v[i] * n.val.v[i] * (1.0 - n.val.v[i]);
    });
}

Var Tape::log(Var a) {
    Tensor C = value(a);
    for (double& x : C.v) x = std::log(x);
    check_finite(C, "log");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& X = t.nodes_[n.parents[0]].val;
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < X.size(); ++i)
            g.v[i] += n.grad.v[i] / X.v[i];
    });
}

Var Tape::exp(Var a) {
    Tensor C = value(a);
    for (double& x : C.v) x = std::exp(x);
    check_finite(C, "exp");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < n.val.size(); ++i)
            g.v[i] += n.grad.v[i] * n.val.v[i];
    });
}

Var Tape::clamp_min(Var a, double floor) {
    Tensor C = value(a);
    for (double& x : C.v) x = std::max(x, floor);
    return push(std::move(C), {a.i}, [floor](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& X = t.nodes_[n.parents[0]].val;
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < X.size(); ++i)
            if (X.v[i] > floor) g.v[i] += n.grad.v[i];
    });
}

Var Tape::clamp_max(Var a, double ceil) {
    Tensor C = value(a);
    for (double& x : C.v) x = std::min(x, ceil);
    return push(std::move(C), {a.i}, [ceil](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        const Tensor& X = t.nodes_[n.parents[0]].val;
        Tensor& g = t.grad_mut(n.parents[0]);
        for (std::size_t i = 0; i < X.size(); ++i)
            if (X.v[i] < ceil) g.v[i] += n.grad.v[i];
    });
}

Var Tape::sum_all(Var a) {
    const Tensor& A = value(a);
    double s = 0.0;
    // Fixed left-to-right order so superposition sums are reproducible.
    for (double x : A.v) s += x;
    Tensor C = Tensor::scalar(s);
    check_finite(C, "sum_all");
    return push(std::move(C), {a.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        for (double& x : g.v) x += n.grad.v[0];
    });
}

Var Tape::mean_rows(Var m) {
    const Tensor& M = value(m);
    if (M.rows == 0) throw ShapeError("mean_rows: empty matrix");
    Tensor C(1, M.cols);
    for (std::size_t i = 0; i < M.rows; ++i)
        for (std::size_t j = 0; j < M.cols; ++j) C.v[j] += M.at(i, j);
    for (double& x : C.v) x /= static_cast<double>(M.rows);
    check_finite(C, "mean_rows");
    return push(std::move(C), {m.i}, [](Tape& t, std::size_t self) {
        Node& n = t.nodes_[self];
        Tensor& g = t.grad_mut(n.parents[0]);
        const double inv = 1.0 / static_cast<double>(g.rows);
        for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < g.cols; ++j)
                g.at(i, j) += n.grad.v[j] * inv;
    });
}

void Tape::backward(Var loss) {
    if (!value(loss).is_scalar())
        throw ShapeError("backward: loss must be scalar");
    for (Node& n : nodes_) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
    nodes_[loss.i].grad.v[0] = 1.0;
    for (std::size_t i = loss.i + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this, i);
    }
}

GradMap Tape::collect_grads(const ParameterSet& ps) const {
    GradMap out;
    for (const auto& [name, tensor] : ps.all()) {
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) {
            out[name] = nodes_[it->second].grad;
        } else {
            out[name] = Tensor(tensor.rows, tensor.cols, 0.0);
        }
    }
    return out;
}

}  // namespace cep3::ad
