#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace chase::ad {

// A named learnable tensor with a persistent gradient accumulator.
struct Tensor {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;

    Tensor() = default;
    Tensor(std::string n, Eigen::MatrixXd v)
        : name(std::move(n)), value(std::move(v)) {
        zero_grad();
    }

    void zero_grad() { grad = Eigen::MatrixXd::Zero(value.rows(), value.cols()); }
    Eigen::Index size() const { return value.size(); }
};

// Lightweight handle into the tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Wengert-list reverse-mode differentiation over the operator set the model
// needs: linear maps, row selection/gather, concatenation, per-head reshapes,
// softmax, LeakyReLU, attention head mixing, and cross-entropy. Nodes are
// appended in evaluation order, so the list itself is a topological order and
// the backward sweep is a single reverse pass.
//
// Leaf nodes reference external Tensors; backward() accumulates into
// Tensor::grad without copying parameter values onto the tape.
class Tape {
public:
    Var leaf(Tensor& t);
    Var constant(Eigen::MatrixXd v);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    // alpha*a + beta*b with compile-time-known scalars (Eq. 9 style blends).
    Var blend(double alpha, Var a, double beta, Var b);
    Var scale(Var a, double s);
    // a * (s(0,0) * c) where s is a 1x1 variable (the per-kind prior phi).
    Var scale_by(Var a, Var s, double c);

    Var row(Var a, int r);
    // Mean of the selected rows; repeated indices contribute repeatedly.
    Var mean_rows(Var a, std::vector<int> rows);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);

    // 1 x d row vector -> heads x (d/heads), one head per row.
    Var reshape_heads(Var a, int heads);
    // Row-wise dot product of two equally shaped matrices -> column vector.
    Var rows_dot(Var a, Var b);
    // scores: H x N attention weights, values: N x d with per-head column
    // blocks; returns the 1 x d concatenation of per-head weighted sums.
    Var mix_heads(Var scores, Var values);

    Var softmax_rows(Var a);
    Var leaky_relu(Var a, double slope);
    // logits: column vector; returns 1x1 = -log softmax(logits)[target].
    Var cross_entropy_pick(Var logits, int target);
    // Arithmetic mean of 1x1 variables.
    Var mean_scalars(const std::vector<Var>& scalars);

    const Eigen::MatrixXd& value(Var v) const;
    // Gradient buffer of a node after backward(); empty if off the path.
    const Eigen::MatrixXd& grad(Var v) const;

    // Seeds d(seed)/d(seed) = 1 and sweeps the list in reverse. seed must be
    // 1x1. Leaf gradients accumulate into their Tensors (call zero_grad()
    // between batches).
    void backward(Var seed);

    void reset();
    size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf,
        Constant,
        MatMul,
        Add,
        Blend,
        Scale,
        ScaleBy,
        Row,
        MeanRows,
        ConcatRows,
        ConcatCols,
        ReshapeHeads,
        RowsDot,
        MixHeads,
        SoftmaxRows,
        LeakyRelu,
        CrossEntropyPick,
        MeanScalars,
    };

    struct Node {
        Op op;
        Eigen::MatrixXd value;  // unused for Leaf (lives in the Tensor)
        Eigen::MatrixXd grad;
        Eigen::MatrixXd aux;    // softmax caches, etc.
        int a = -1, b = -1;
        double s0 = 0.0, s1 = 0.0;
        int i0 = 0;
        Tensor* tensor = nullptr;
        std::vector<int> inputs;
        std::vector<int> indices;
    };

    const Eigen::MatrixXd& val(int id) const {
        const Node& n = nodes_[id];
        return n.op == Op::Leaf ? n.tensor->value : n.value;
    }
    void accumulate(int id, const Eigen::MatrixXd& delta);
    int push(Node&& n);
    void backward_node(int id);

    std::vector<Node> nodes_;
};

} // namespace chase::ad
