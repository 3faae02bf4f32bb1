#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cep3::ad {

// Dense row-major matrix. Vectors are 1xN rows, scalars 1x1.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), v(r * c, fill) {}

    static Tensor scalar(double x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }
    static Tensor row(std::vector<double> xs) {
        Tensor t;
        t.rows = 1;
        t.cols = xs.size();
        t.v = std::move(xs);
        return t;
    }

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return rows * cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    bool same_shape(const Tensor& o) const {
        return rows == o.rows && cols == o.cols;
    }
    double item() const {
        if (!is_scalar()) throw std::invalid_argument("Tensor::item: not a scalar");
        return v[0];
    }
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ParameterSet;

// Handle to a node on a Tape.
struct Var {
    std::size_t i = static_cast<std::size_t>(-1);
    bool valid() const { return i != static_cast<std::size_t>(-1); }
};

using GradMap = std::map<std::string, Tensor>;

// Reverse-mode tape. Single-threaded; distinct tapes may run concurrently
// over a shared read-only ParameterSet.
class Tape {
  public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var constant_scalar(double x) { return leaf(Tensor::scalar(x), false); }

    // Registers a named parameter as a leaf; repeated calls with the same
    // name return the same node so gradients accumulate.
    Var param(const ParameterSet& ps, const std::string& name);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);          // elementwise, same shape
    Var add_rowvec(Var m, Var b);   // broadcast 1xC row over the rows of m
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);          // elementwise
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }

    Var concat_cols(Var a, Var b);
    Var concat_cols(const std::vector<Var>& xs);
    Var stack_rows(const std::vector<Var>& rows);  // each 1xC
    Var transpose(Var a);
    Var reshape(Var a, std::size_t r, std::size_t c);
    Var row(Var m, std::size_t r);
    Var pick(Var m, std::size_t r, std::size_t c);  // scalar element

    Var softmax_rows(Var m);
    Var softplus(Var a);
    Var cos(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var log(Var a);
    Var exp(Var a);
    Var clamp_min(Var a, double floor);
    Var clamp_max(Var a, double ceil);

    Var sum_all(Var a);             // 1x1
    Var mean_rows(Var m);           // 1xC column means

    const Tensor& value(Var x) const { return nodes_[x.i].val; }
    const Tensor& grad(Var x) const { return nodes_[x.i].grad; }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse.
    void backward(Var loss);

    // Gradients of every parameter registered via param(); parameters never
    // touched by the forward pass get zero gradients of matching shape.
    GradMap collect_grads(const ParameterSet& ps) const;

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::vector<std::size_t> parents;
        std::function<void(Tape&, std::size_t)> back;  // pulls grad into parents
    };

    Var push(Tensor val, std::vector<std::size_t> parents,
             std::function<void(Tape&, std::size_t)> back);
    Tensor& grad_mut(std::size_t i) { return nodes_[i].grad; }
    static void check_finite(const Tensor& t, const char* op);

    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> param_nodes_;
};

}  // namespace cep3::ad
