#include "chase/hypergraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "chase/errors.hpp"
#include "chase/graph.hpp"

namespace chase {

IncidenceMatrix build_causal_hyperedges(const InvocationGraph& g, bool dedup) {
    const int n = g.num_instances();
    if (!is_dag(n, g.invocation_edges)) {
        throw NotADAG("invocation edges contain a cycle");
    }

    // Ancestor/descendant sets once per node.
    std::vector<std::set<int>> anc(n), desc(n);
    for (int v = 0; v < n; ++v) {
        anc[v] = topological_ancestors(g, v);
        desc[v] = topological_descendants(g, v);
    }

    std::vector<int> by_order(n);
    for (int i = 0; i < n; ++i) by_order[i] = i;
    std::sort(by_order.begin(), by_order.end(),
              [&](int a, int b) { return g.instances[a].order_k < g.instances[b].order_k; });

    std::vector<std::vector<int>> columns;
    for (int v : by_order) {
        std::vector<int> parents = g.parents[v];
        std::sort(parents.begin(), parents.end());
        for (int p : parents) {
            std::set<int> members = anc[p];
            members.insert(v);
            members.insert(p);
            columns.emplace_back(members.begin(), members.end());
        }
        std::set<int> members = desc[v];
        members.insert(v);
        columns.emplace_back(members.begin(), members.end());
    }

    if (dedup) {
        std::vector<std::vector<int>> unique;
        for (auto& c : columns) {
            if (std::find(unique.begin(), unique.end(), c) == unique.end()) {
                unique.push_back(c);
            }
        }
        columns = std::move(unique);
    }

    IncidenceMatrix inc;
    inc.columns = columns;
    inc.h = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(columns.size()));
    for (size_t e = 0; e < columns.size(); ++e) {
        for (int v : columns[e]) inc.h(v, static_cast<Eigen::Index>(e)) = 1.0;
    }
    inc.edge_weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(columns.size()));
    inc.d_v = inc.h * inc.edge_weights;            // Eq. 11
    inc.d_e = inc.h.colwise().sum().transpose();   // Eq. 12
    return inc;
}

Eigen::MatrixXd normalized_operator(const IncidenceMatrix& inc) {
    const int n = inc.num_vertices();
    for (int i = 0; i < n; ++i) {
        if (inc.d_v(i) <= 0.0) {
            throw ZeroDegree("vertex " + std::to_string(i) + " lies in no hyperedge");
        }
    }
    const Eigen::VectorXd dv_inv_sqrt = inc.d_v.array().rsqrt();
    const Eigen::VectorXd de_inv = inc.d_e.array().inverse();
    // Delta = Dv^-1/2 H W De^-1 H^T Dv^-1/2, materialized via B B^T so the
    // result is symmetric to machine precision.
    const Eigen::MatrixXd b = dv_inv_sqrt.asDiagonal() * inc.h *
                              (inc.edge_weights.array() * de_inv.array()).sqrt().matrix().asDiagonal();
    return b * b.transpose();
}

Eigen::MatrixXd hypergraph_convolution(const IncidenceMatrix& inc, const Eigen::MatrixXd& x,
                                       const HypergraphLayerParams& params, int layers,
                                       double leaky_slope) {
    if (x.rows() != inc.num_vertices()) {
        throw DimensionMismatch("row count " + std::to_string(x.rows()) + " vs " +
                                std::to_string(inc.num_vertices()) + " vertices");
    }
    if (params.theta.value.rows() != x.cols()) {
        throw DimensionMismatch("theta rows " + std::to_string(params.theta.value.rows()));
    }
    const Eigen::MatrixXd delta = normalized_operator(inc);
    Eigen::MatrixXd out = x;
    for (int l = 0; l < layers; ++l) {
        out = (delta * out * params.theta.value)
                  .unaryExpr([leaky_slope](double v) { return v > 0.0 ? v : leaky_slope * v; });
    }
    return out;
}

Eigen::VectorXd root_cause_scores(const Eigen::MatrixXd& x_l,
                                  const HypergraphLayerParams& params) {
    if (x_l.cols() != params.head.value.rows()) {
        throw DimensionMismatch("head rows " + std::to_string(params.head.value.rows()));
    }
    return x_l * params.head.value;
}

Eigen::VectorXd root_cause_distribution(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp();
    return e / e.sum();
}

} // namespace chase
