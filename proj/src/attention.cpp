#include "chase/attention.hpp"

#include <cmath>

#include "chase/errors.hpp"

namespace chase {

const AttentionKindParams& AttentionLayerParams::kind_for(NeighborKind kind,
                                                          const std::string& name) const {
    if (homogeneous || kind == NeighborKind::Log) return log_kind;
    auto it = metric_kinds.find(name);
    return it != metric_kinds.end() ? it->second : unknown_metric;
}

AttentionKindParams& AttentionLayerParams::kind_for_mut(NeighborKind kind,
                                                        const std::string& name) {
    return const_cast<AttentionKindParams&>(
        static_cast<const AttentionLayerParams*>(this)->kind_for(kind, name));
}

Eigen::MatrixXd raw_anomaly_scores(const Eigen::RowVectorXd& instance_emb,
                                   const std::vector<NeighborRef>& neighbors,
                                   const AttentionLayerParams& lp) {
    if (neighbors.empty()) {
        throw NoNeighbors("instance has no attached data nodes");
    }
    if (instance_emb.size() != lp.d) {
        throw DimensionMismatch("instance embedding size " + std::to_string(instance_emb.size()));
    }
    const int H = lp.heads;
    const int dh = lp.d / H;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(lp.d));

    const Eigen::RowVectorXd q_full = instance_emb * lp.W_instance.value;
    Eigen::MatrixXd raw(H, static_cast<Eigen::Index>(neighbors.size()));
    for (size_t j = 0; j < neighbors.size(); ++j) {
        const auto& kind = lp.kind_for(neighbors[j]);
        if (neighbors[j].emb.size() != lp.d) {
            throw DimensionMismatch("neighbor embedding size");
        }
        const Eigen::RowVectorXd k_full = neighbors[j].emb * kind.W.value;
        const double phi = kind.phi.value(0, 0);
        for (int h = 0; h < H; ++h) {
            const auto k_h = k_full.segment(h * dh, dh);
            const auto q_h = q_full.segment(h * dh, dh);
            raw(h, static_cast<Eigen::Index>(j)) =
                (k_h * kind.A.value).dot(q_h) * phi * inv_sqrt_d;
        }
    }
    return raw;
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
    const double m = x.maxCoeff();
    Eigen::VectorXd e = (x.array() - m).exp();
    return e / e.sum();
}

} // namespace

Eigen::VectorXd compute_anomaly_scores(const Eigen::RowVectorXd& instance_emb,
                                       const std::vector<NeighborRef>& neighbors,
                                       const AttentionLayerParams& lp, int head) {
    if (head < 0 || head >= lp.heads) {
        throw IndexOutOfRange("head " + std::to_string(head));
    }
    const Eigen::MatrixXd raw = raw_anomaly_scores(instance_emb, neighbors, lp);
    return softmax(raw.row(head).transpose());
}

Eigen::RowVectorXd aggregate_anomaly_information(const std::vector<NeighborRef>& neighbors,
                                                 const AttentionLayerParams& lp,
                                                 const Eigen::MatrixXd& scores) {
    if (neighbors.empty()) throw NoNeighbors("aggregate over empty neighborhood");
    if (scores.rows() != lp.heads ||
        scores.cols() != static_cast<Eigen::Index>(neighbors.size())) {
        throw DimensionMismatch("scores must be heads x |N|");
    }
    const int H = lp.heads;
    const int dh = lp.d / H;

    Eigen::MatrixXd v_stack(static_cast<Eigen::Index>(neighbors.size()), lp.d);
    for (size_t j = 0; j < neighbors.size(); ++j) {
        const auto& kind = lp.kind_for(neighbors[j]);
        v_stack.row(static_cast<Eigen::Index>(j)) = neighbors[j].emb * kind.Wp.value;
    }
    Eigen::RowVectorXd x_hat(lp.d);
    for (int h = 0; h < H; ++h) {
        x_hat.segment(h * dh, dh) = scores.row(h) * v_stack.middleCols(h * dh, dh);
    }
    return x_hat;
}

Eigen::RowVectorXd update_instance_embedding(const Eigen::RowVectorXd& x_hat,
                                             const Eigen::RowVectorXd& instance_emb,
                                             const AttentionLayerParams& lp) {
    const double slope = lp.leaky_slope;
    const Eigen::RowVectorXd act =
        x_hat.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
    return (1.0 - lp.gamma) * (act * lp.W_hat.value) + lp.gamma * instance_emb;
}

Eigen::MatrixXd attention_forward(const Eigen::MatrixXd& instance_emb,
                                  const std::vector<std::vector<NeighborRef>>& neighbors,
                                  const std::vector<AttentionLayerParams>& layers,
                                  const std::vector<std::string>* instance_ids,
                                  std::vector<AttentionRecord>* records) {
    if (layers.empty()) throw DimensionMismatch("attention stack is empty");
    Eigen::MatrixXd x = instance_emb;
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& lp = layers[l];
        Eigen::MatrixXd next(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const auto& nbrs = neighbors[static_cast<size_t>(i)];
            const Eigen::RowVectorXd xi = x.row(i);
            Eigen::MatrixXd raw = raw_anomaly_scores(xi, nbrs, lp);
            Eigen::MatrixXd scores(raw.rows(), raw.cols());
            for (Eigen::Index h = 0; h < raw.rows(); ++h) {
                scores.row(h) = softmax(raw.row(h).transpose()).transpose();
            }
            if (records != nullptr && instance_ids != nullptr) {
                for (Eigen::Index h = 0; h < scores.rows(); ++h) {
                    for (size_t j = 0; j < nbrs.size(); ++j) {
                        records->push_back({static_cast<int>(l), static_cast<int>(h),
                                            (*instance_ids)[static_cast<size_t>(i)],
                                            nbrs[j].neighbor_id,
                                            scores(h, static_cast<Eigen::Index>(j))});
                    }
                }
            }
            const Eigen::RowVectorXd x_hat = aggregate_anomaly_information(nbrs, lp, scores);
            next.row(i) = update_instance_embedding(x_hat, xi, lp);
        }
        x = std::move(next);
    }
    return x;
}

ad::Var attention_instance_forward(ad::Tape& tape, ad::Var instance_emb,
                                   const std::vector<TapedNeighbor>& neighbors,
                                   AttentionLayerParams& lp, LeafCache& leaves) {
    if (neighbors.empty()) throw NoNeighbors("instance has no attached data nodes");
    const int H = lp.heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(lp.d));

    ad::Var q_full = tape.matmul(instance_emb, leaves.get(tape, lp.W_instance));
    ad::Var q_heads = tape.reshape_heads(q_full, H);

    std::vector<ad::Var> raw_cols;
    std::vector<ad::Var> v_rows;
    raw_cols.reserve(neighbors.size());
    v_rows.reserve(neighbors.size());
    for (const auto& nbr : neighbors) {
        auto& kind = lp.kind_for_mut(nbr.kind, nbr.metric_name);
        ad::Var k_full = tape.matmul(nbr.emb, leaves.get(tape, kind.W));
        ad::Var k_heads = tape.reshape_heads(k_full, H);
        ad::Var ka = tape.matmul(k_heads, leaves.get(tape, kind.A));
        ad::Var raw = tape.rows_dot(ka, q_heads);  // H x 1
        raw_cols.push_back(tape.scale_by(raw, leaves.get(tape, kind.phi), inv_sqrt_d));
        v_rows.push_back(tape.matmul(nbr.emb, leaves.get(tape, kind.Wp)));
    }
    ad::Var scores = tape.softmax_rows(tape.concat_cols(raw_cols));  // H x |N|
    ad::Var x_hat = tape.mix_heads(scores, tape.concat_rows(v_rows));
    ad::Var act = tape.leaky_relu(x_hat, lp.leaky_slope);
    ad::Var proj = tape.matmul(act, leaves.get(tape, lp.W_hat));
    return tape.blend(1.0 - lp.gamma, proj, lp.gamma, instance_emb);
}

} // namespace chase
