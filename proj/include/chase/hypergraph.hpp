#pragma once

#include <Eigen/Dense>
#include <vector>

#include "chase/tape.hpp"
#include "chase/types.hpp"

namespace chase {

// Hypergraph incidence structure over the instance nodes of one trace.
// Column epsilon holds the member set of hyperedge epsilon; h(i, eps) = 1 iff
// instance i belongs to it. Degrees follow Eqs. 11-12 with the edge-weight
// slot kept explicit (identity by default: every hyperedge carries the same
// significance).
struct IncidenceMatrix {
    Eigen::MatrixXd h;             // |I| x |E|
    Eigen::VectorXd edge_weights;  // diagonal of W_H
    Eigen::VectorXd d_v;           // vertex degrees
    Eigen::VectorXd d_e;           // hyperedge degrees
    std::vector<std::vector<int>> columns;  // member lists, sorted ascending

    int num_vertices() const { return static_cast<int>(h.rows()); }
    int num_edges() const { return static_cast<int>(h.cols()); }
};

struct HypergraphLayerParams {
    ad::Tensor theta;  // d x d' causal projection; absent under V3
    ad::Tensor head;   // d' x 1 detection head
};

// Trace-level causality hyperedge construction. For every instance v, taken
// in ascending order_k: one hyperedge {v, v_p} ∪ ancestors(v_p) per parent
// v_p (parents in ascending index order), then one hyperedge
// {v} ∪ descendants(v). Duplicate columns are kept as generated unless
// dedup is set. Throws NotADAG when the invocation edges contain a cycle.
IncidenceMatrix build_causal_hyperedges(const InvocationGraph& g, bool dedup = false);

// Delta = D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2}; symmetric PSD with top
// eigenvalue 1. Throws ZeroDegree when a vertex lies in no hyperedge.
Eigen::MatrixXd normalized_operator(const IncidenceMatrix& inc);

// X^(l) = LeakyReLU(Delta * X^(l-1) * Theta), applied `layers` times.
Eigen::MatrixXd hypergraph_convolution(const IncidenceMatrix& inc, const Eigen::MatrixXd& x,
                                       const HypergraphLayerParams& params, int layers = 1,
                                       double leaky_slope = 0.3);

// Per-instance root-cause logits: x_l * head.
Eigen::VectorXd root_cause_scores(const Eigen::MatrixXd& x_l, const HypergraphLayerParams& params);

// Softmax over the instances of one trace.
Eigen::VectorXd root_cause_distribution(const Eigen::VectorXd& logits);

} // namespace chase
