#include "chase/tape.hpp"

#include <cmath>

#include "chase/errors.hpp"

namespace chase::ad {

namespace {
void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionMismatch(msg);
}
} // namespace

int Tape::push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Tensor& t) {
    Node n;
    n.op = Op::Leaf;
    n.tensor = &t;
    return {push(std::move(n))};
}

Var Tape::constant(Eigen::MatrixXd v) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(v);
    return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
    const auto& av = val(a.id);
    const auto& bv = val(b.id);
    require(av.cols() == bv.rows(), "matmul " + std::to_string(av.cols()) + " vs " +
                                        std::to_string(bv.rows()));
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.value.noalias() = av * bv;
    return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return blend(1.0, a, 1.0, b); }

Var Tape::blend(double alpha, Var a, double beta, Var b) {
    const auto& av = val(a.id);
    const auto& bv = val(b.id);
    require(av.rows() == bv.rows() && av.cols() == bv.cols(), "blend shapes differ");
    Node n;
    n.op = Op::Blend;
    n.a = a.id;
    n.b = b.id;
    n.s0 = alpha;
    n.s1 = beta;
    n.value = alpha * av + beta * bv;
    return {push(std::move(n))};
}

Var Tape::scale(Var a, double s) {
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.s0 = s;
    n.value = s * val(a.id);
    return {push(std::move(n))};
}

Var Tape::scale_by(Var a, Var s, double c) {
    const auto& sv = val(s.id);
    require(sv.rows() == 1 && sv.cols() == 1, "scale_by expects a 1x1 scalar");
    Node n;
    n.op = Op::ScaleBy;
    n.a = a.id;
    n.b = s.id;
    n.s0 = c;
    n.value = val(a.id) * (sv(0, 0) * c);
    return {push(std::move(n))};
}

Var Tape::row(Var a, int r) {
    const auto& av = val(a.id);
    require(r >= 0 && r < av.rows(), "row index");
    Node n;
    n.op = Op::Row;
    n.a = a.id;
    n.i0 = r;
    n.value = av.row(r);
    return {push(std::move(n))};
}

Var Tape::mean_rows(Var a, std::vector<int> rows) {
    const auto& av = val(a.id);
    require(!rows.empty(), "mean_rows needs at least one row");
    Node n;
    n.op = Op::MeanRows;
    n.a = a.id;
    n.value = Eigen::MatrixXd::Zero(1, av.cols());
    for (int r : rows) {
        require(r >= 0 && r < av.rows(), "mean_rows index");
        n.value += av.row(r);
    }
    n.value /= static_cast<double>(rows.size());
    n.indices = std::move(rows);
    return {push(std::move(n))};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows of nothing");
    Eigen::Index rows = 0;
    Eigen::Index cols = val(parts[0].id).cols();
    for (Var p : parts) {
        require(val(p.id).cols() == cols, "concat_rows column mismatch");
        rows += val(p.id).rows();
    }
    Node n;
    n.op = Op::ConcatRows;
    n.value.resize(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
        const auto& pv = val(p.id);
        n.value.middleRows(at, pv.rows()) = pv;
        at += pv.rows();
        n.inputs.push_back(p.id);
    }
    return {push(std::move(n))};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols of nothing");
    Eigen::Index cols = 0;
    Eigen::Index rows = val(parts[0].id).rows();
    for (Var p : parts) {
        require(val(p.id).rows() == rows, "concat_cols row mismatch");
        cols += val(p.id).cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.value.resize(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
        const auto& pv = val(p.id);
        n.value.middleCols(at, pv.cols()) = pv;
        at += pv.cols();
        n.inputs.push_back(p.id);
    }
    return {push(std::move(n))};
}

Var Tape::reshape_heads(Var a, int heads) {
    const auto& av = val(a.id);
    require(av.rows() == 1, "reshape_heads expects a row vector");
    require(av.cols() % heads == 0, "dim not divisible by head count");
    const Eigen::Index dh = av.cols() / heads;
    Node n;
    n.op = Op::ReshapeHeads;
    n.a = a.id;
    n.i0 = heads;
    n.value.resize(heads, dh);
    for (int h = 0; h < heads; ++h) n.value.row(h) = av.middleCols(h * dh, dh);
    return {push(std::move(n))};
}

Var Tape::rows_dot(Var a, Var b) {
    const auto& av = val(a.id);
    const auto& bv = val(b.id);
    require(av.rows() == bv.rows() && av.cols() == bv.cols(), "rows_dot shapes differ");
    Node n;
    n.op = Op::RowsDot;
    n.a = a.id;
    n.b = b.id;
    n.value = av.cwiseProduct(bv).rowwise().sum();
    return {push(std::move(n))};
}

Var Tape::mix_heads(Var scores, Var values) {
    const auto& sv = val(scores.id);
    const auto& vv = val(values.id);
    const Eigen::Index heads = sv.rows();
    require(vv.cols() % heads == 0, "mix_heads dim not divisible by head count");
    const Eigen::Index dh = vv.cols() / heads;
    require(sv.cols() == vv.rows(), "mix_heads neighbor count mismatch");
    Node n;
    n.op = Op::MixHeads;
    n.a = scores.id;
    n.b = values.id;
    n.value.resize(1, vv.cols());
    for (Eigen::Index h = 0; h < heads; ++h) {
        n.value.middleCols(h * dh, dh).noalias() = sv.row(h) * vv.middleCols(h * dh, dh);
    }
    return {push(std::move(n))};
}

Var Tape::softmax_rows(Var a) {
    const auto& av = val(a.id);
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a.id;
    n.value.resize(av.rows(), av.cols());
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
        const double m = av.row(r).maxCoeff();
        Eigen::RowVectorXd e = (av.row(r).array() - m).exp();
        n.value.row(r) = e / e.sum();
    }
    return {push(std::move(n))};
}

Var Tape::leaky_relu(Var a, double slope) {
    const auto& av = val(a.id);
    Node n;
    n.op = Op::LeakyRelu;
    n.a = a.id;
    n.s0 = slope;
    n.value = av.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
    return {push(std::move(n))};
}

Var Tape::cross_entropy_pick(Var logits, int target) {
    const auto& lv = val(logits.id);
    require(lv.cols() == 1, "cross_entropy_pick expects a column vector");
    require(target >= 0 && target < lv.rows(), "cross_entropy_pick target");
    const double m = lv.maxCoeff();
    Eigen::VectorXd e = (lv.array() - m).exp();
    const double z = e.sum();
    Node n;
    n.op = Op::CrossEntropyPick;
    n.a = logits.id;
    n.i0 = target;
    n.aux = e / z;  // softmax, reused in backward
    n.value.resize(1, 1);
    n.value(0, 0) = std::log(z) + m - lv(target, 0);
    return {push(std::move(n))};
}

Var Tape::mean_scalars(const std::vector<Var>& scalars) {
    require(!scalars.empty(), "mean_scalars of nothing");
    Node n;
    n.op = Op::MeanScalars;
    n.value = Eigen::MatrixXd::Zero(1, 1);
    for (Var s : scalars) {
        const auto& svv = val(s.id);
        require(svv.rows() == 1 && svv.cols() == 1, "mean_scalars expects 1x1 inputs");
        n.value(0, 0) += svv(0, 0);
        n.inputs.push_back(s.id);
    }
    n.value(0, 0) /= static_cast<double>(scalars.size());
    return {push(std::move(n))};
}

const Eigen::MatrixXd& Tape::value(Var v) const { return val(v.id); }

const Eigen::MatrixXd& Tape::grad(Var v) const { return nodes_[v.id].grad; }

void Tape::accumulate(int id, const Eigen::MatrixXd& delta) {
    Node& n = nodes_[id];
    if (n.op == Op::Leaf) {
        n.tensor->grad += delta;
        return;
    }
    if (n.grad.size() == 0) {
        n.grad = delta;
    } else {
        n.grad += delta;
    }
}

void Tape::backward_node(int id) {
    Node& n = nodes_[id];
    const Eigen::MatrixXd& g = n.grad;
    switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
            break;
        case Op::MatMul:
            accumulate(n.a, g * val(n.b).transpose());
            accumulate(n.b, val(n.a).transpose() * g);
            break;
        case Op::Blend:
            accumulate(n.a, n.s0 * g);
            accumulate(n.b, n.s1 * g);
            break;
        case Op::Scale:
            accumulate(n.a, n.s0 * g);
            break;
        case Op::ScaleBy: {
            const double s = val(n.b)(0, 0);
            accumulate(n.a, (s * n.s0) * g);
            Eigen::MatrixXd ds(1, 1);
            ds(0, 0) = n.s0 * g.cwiseProduct(val(n.a)).sum();
            accumulate(n.b, ds);
            break;
        }
        case Op::Row: {
            Eigen::MatrixXd da = Eigen::MatrixXd::Zero(val(n.a).rows(), val(n.a).cols());
            da.row(n.i0) = g;
            accumulate(n.a, da);
            break;
        }
        case Op::MeanRows: {
            Eigen::MatrixXd da = Eigen::MatrixXd::Zero(val(n.a).rows(), val(n.a).cols());
            const double w = 1.0 / static_cast<double>(n.indices.size());
            for (int r : n.indices) da.row(r) += w * g;
            accumulate(n.a, da);
            break;
        }
        case Op::ConcatRows: {
            Eigen::Index at = 0;
            for (int in : n.inputs) {
                const Eigen::Index r = val(in).rows();
                accumulate(in, g.middleRows(at, r));
                at += r;
            }
            break;
        }
        case Op::ConcatCols: {
            Eigen::Index at = 0;
            for (int in : n.inputs) {
                const Eigen::Index c = val(in).cols();
                accumulate(in, g.middleCols(at, c));
                at += c;
            }
            break;
        }
        case Op::ReshapeHeads: {
            const Eigen::Index dh = g.cols();
            Eigen::MatrixXd da(1, g.rows() * dh);
            for (Eigen::Index h = 0; h < g.rows(); ++h) da.middleCols(h * dh, dh) = g.row(h);
            accumulate(n.a, da);
            break;
        }
        case Op::RowsDot: {
            const auto& av = val(n.a);
            const auto& bv = val(n.b);
            accumulate(n.a, g.col(0).asDiagonal() * bv);
            accumulate(n.b, g.col(0).asDiagonal() * av);
            break;
        }
        case Op::MixHeads: {
            const auto& sv = val(n.a);
            const auto& vv = val(n.b);
            const Eigen::Index heads = sv.rows();
            const Eigen::Index dh = vv.cols() / heads;
            Eigen::MatrixXd ds(sv.rows(), sv.cols());
            Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(vv.rows(), vv.cols());
            for (Eigen::Index h = 0; h < heads; ++h) {
                const auto gh = g.middleCols(h * dh, dh);  // 1 x dh
                ds.row(h).noalias() = gh * vv.middleCols(h * dh, dh).transpose();
                dv.middleCols(h * dh, dh).noalias() = sv.row(h).transpose() * gh;
            }
            accumulate(n.a, ds);
            accumulate(n.b, dv);
            break;
        }
        case Op::SoftmaxRows: {
            const auto& y = n.value;
            Eigen::MatrixXd da(y.rows(), y.cols());
            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                const double dot = g.row(r).cwiseProduct(y.row(r)).sum();
                da.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
            }
            accumulate(n.a, da);
            break;
        }
        case Op::LeakyRelu: {
            const auto& av = val(n.a);
            const double slope = n.s0;
            Eigen::MatrixXd da =
                g.binaryExpr(av, [slope](double gg, double x) { return x > 0.0 ? gg : slope * gg; });
            accumulate(n.a, da);
            break;
        }
        case Op::CrossEntropyPick: {
            Eigen::MatrixXd da = n.aux * g(0, 0);
            da(n.i0, 0) -= g(0, 0);
            accumulate(n.a, da);
            break;
        }
        case Op::MeanScalars: {
            Eigen::MatrixXd share = g / static_cast<double>(n.inputs.size());
            for (int in : n.inputs) accumulate(in, share);
            break;
        }
    }
}

void Tape::backward(Var seed) {
    Node& s = nodes_[seed.id];
    const auto& sv = val(seed.id);
    require(sv.rows() == 1 && sv.cols() == 1, "backward seed must be 1x1");
    s.grad = Eigen::MatrixXd::Ones(1, 1);
    for (int id = seed.id; id >= 0; --id) {
        if (nodes_[id].grad.size() == 0) continue;  // not on the path to the seed
        backward_node(id);
    }
}

void Tape::reset() { nodes_.clear(); }

} // namespace chase::ad
