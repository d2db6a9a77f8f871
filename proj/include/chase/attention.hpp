#pragma once

#include <map>
#include <string>
#include <vector>

#include "chase/tape.hpp"
#include "chase/types.hpp"

namespace chase {

enum class NeighborKind { Log, Metric };

// One data-node neighbor of an instance, already encoded.
struct NeighborRef {
    NeighborKind kind = NeighborKind::Log;
    std::string metric_name;  // empty for the log neighbor
    Eigen::RowVectorXd emb;   // 1 x d
    std::string neighbor_id;  // for weight export
};

// Projections for one neighbor kind. K and V projections store all H head
// blocks side by side as d x d matrices; A is shared among heads; phi is the
// learnable prior significance of the kind, initialized to 1.
struct AttentionKindParams {
    ad::Tensor W;    // d x d        key projection
    ad::Tensor Wp;   // d x d        value projection
    ad::Tensor A;    // d/H x d/H    score bilinear form, shared across heads
    ad::Tensor phi;  // 1 x 1        prior significance
};

// Parameters of one attention layer. Metric groups are keyed by metric_name;
// names unseen at inference fall back to the reserved unknown-metric group.
// Under the homogeneous (V2) ablation a single shared group serves every
// neighbor kind and no metric groups exist.
struct AttentionLayerParams {
    ad::Tensor W_instance;  // d x d query projection
    ad::Tensor W_hat;       // d x d output projection (Eq. 9)
    AttentionKindParams log_kind;
    std::map<std::string, AttentionKindParams> metric_kinds;
    AttentionKindParams unknown_metric;

    int heads = 8;
    int d = 128;
    double gamma = 0.5;
    double leaky_slope = 0.3;
    bool homogeneous = false;

    const AttentionKindParams& kind_for(const NeighborRef& n) const {
        return kind_for(n.kind, n.metric_name);
    }
    const AttentionKindParams& kind_for(NeighborKind kind, const std::string& name) const;
    AttentionKindParams& kind_for_mut(NeighborKind kind, const std::string& name);
};

// Pre-softmax scores, one row per head, one column per neighbor (Eq. 4).
Eigen::MatrixXd raw_anomaly_scores(const Eigen::RowVectorXd& instance_emb,
                                   const std::vector<NeighborRef>& neighbors,
                                   const AttentionLayerParams& lp);

// Softmax-normalized scores of one head over all neighbors (Eq. 5); the
// returned vector sums to 1. Throws NoNeighbors on an empty neighbor list.
Eigen::VectorXd compute_anomaly_scores(const Eigen::RowVectorXd& instance_emb,
                                       const std::vector<NeighborRef>& neighbors,
                                       const AttentionLayerParams& lp, int head);

// Eqs. 6-8: per-head weighted sum of value projections, concatenated across
// heads into a 1 x d anomaly embedding. scores has one row per head.
Eigen::RowVectorXd aggregate_anomaly_information(const std::vector<NeighborRef>& neighbors,
                                                 const AttentionLayerParams& lp,
                                                 const Eigen::MatrixXd& scores);

// Eq. 9: (1-gamma) * LeakyReLU(x_hat) * W_hat + gamma * instance_emb.
Eigen::RowVectorXd update_instance_embedding(const Eigen::RowVectorXd& x_hat,
                                             const Eigen::RowVectorXd& instance_emb,
                                             const AttentionLayerParams& lp);

// One attention weight observation, exported to CSV for inspection.
struct AttentionRecord {
    int layer = 0;
    int head = 0;
    std::string instance_id;
    std::string neighbor_id;
    double weight = 0.0;
};

// Full stack: applies compute -> aggregate -> update per instance per layer.
// Instance embeddings flow layer to layer on the query side; log/metric
// embeddings stay fixed at the encoder outputs. Returns |I| x d.
Eigen::MatrixXd attention_forward(const Eigen::MatrixXd& instance_emb,
                                  const std::vector<std::vector<NeighborRef>>& neighbors,
                                  const std::vector<AttentionLayerParams>& layers,
                                  const std::vector<std::string>* instance_ids = nullptr,
                                  std::vector<AttentionRecord>* records = nullptr);

// Reuses one leaf node per tensor within a tape.
class LeafCache {
public:
    ad::Var get(ad::Tape& tape, ad::Tensor& t) {
        auto it = cache_.find(&t);
        if (it != cache_.end()) return it->second;
        ad::Var v = tape.leaf(t);
        cache_.emplace(&t, v);
        return v;
    }

private:
    std::map<const ad::Tensor*, ad::Var> cache_;
};

struct TapedNeighbor {
    NeighborKind kind = NeighborKind::Log;
    std::string metric_name;
    ad::Var emb;
};

// Tape-recorded single-instance layer forward; value-identical to composing
// the plain operations above.
ad::Var attention_instance_forward(ad::Tape& tape, ad::Var instance_emb,
                                   const std::vector<TapedNeighbor>& neighbors,
                                   AttentionLayerParams& lp, LeafCache& leaves);

} // namespace chase
