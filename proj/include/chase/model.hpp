#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "chase/attention.hpp"
#include "chase/encoders.hpp"
#include "chase/hypergraph.hpp"
#include "chase/types.hpp"

namespace chase {

// V1: no learnable instance embedding (positional part kept).
// V2: homogeneous message passing (one shared neighbor projection group).
// V3: no hypergraph convolution (detection head applied to the attention
//     output directly).
enum class Ablation { none, V1, V2, V3 };

Ablation parse_ablation(const std::string& s);
const char* ablation_name(Ablation a);

struct TrainConfig {
    int layers_attn = 3;
    int heads = 8;
    int dim = 128;
    double gamma = 0.5;
    double leaky_slope = 0.3;
    int hyper_layers = 1;
    double lr = 1e-3;
    int epochs = 30;
    int batch_size = 8;
    std::uint64_t seed = 42;
    Ablation ablation = Ablation::none;
    double n_base = 20000.0;
    int token_buckets = 4096;

    void validate() const;  // throws InvalidConfig
};

// Every learnable tensor of the assembled model plus the calibrated anomaly
// threshold. Tensor set depends on the ablation flag; tensors() exposes the
// registry in a fixed order used by the optimizer, the checkpoint format and
// gradient checking alike.
struct ModelParams {
    TrainConfig config;
    EncoderParams encoders;
    std::vector<AttentionLayerParams> layers;
    HypergraphLayerParams hyper;
    std::vector<std::string> metric_names;  // sorted; defines the metric groups
    double anomaly_threshold = std::numeric_limits<double>::infinity();

    static ModelParams init(const TrainConfig& cfg, std::vector<std::string> metric_names,
                            std::mt19937_64& rng);

    std::vector<ad::Tensor*> tensors();
    std::vector<const ad::Tensor*> tensors() const;
    void zero_grads();
    long parameter_count() const;
};

// Constant per-trace features, computed once and reused every epoch.
struct PreparedTrace {
    std::string trace_id;
    InvocationGraph graph;
    TraceLabel label;
    int root_index = -1;      // resolved root-cause instance, -1 when normal
    double timestamp = 0.0;   // earliest instance start_ts

    std::vector<int> category_idx;
    std::vector<Eigen::RowVectorXd> pos_enc;       // per instance
    std::vector<std::vector<int>> log_buckets;     // per instance
    std::vector<Eigen::RowVectorXd> metric_stats;  // per metric node
    IncidenceMatrix incidence;
    Eigen::MatrixXd delta;
};

PreparedTrace prepare_trace(const TraceBundle& bundle, const TrainConfig& cfg);

// Full forward pass to per-instance root-cause logits. When records and the
// graph's instance ids are supplied, attention weights are appended per
// (layer, head, instance, neighbor).
Eigen::VectorXd model_logits(const PreparedTrace& t, const ModelParams& m,
                             std::vector<AttentionRecord>* records = nullptr);

// Tape-recorded forward; value-identical to model_logits.
ad::Var model_logits_taped(ad::Tape& tape, const PreparedTrace& t, ModelParams& m,
                           LeafCache& leaves);

// Eq. 15 over resolved root indices: mean over traces of
// -log softmax(logits)[root]. Throws MissingLabel on an invalid index.
double rca_loss(const std::vector<Eigen::VectorXd>& logits_per_trace,
                const std::vector<int>& root_index_per_trace);

// Label-resolving overload; every label must be anomalous with a root cause
// present among that trace's instance ids.
double rca_loss(const std::vector<Eigen::VectorXd>& logits_per_trace,
                const std::vector<TraceLabel>& labels,
                const std::vector<std::vector<std::string>>& instance_ids_per_trace);

// Ranking (logit descending, ties by instance id ascending) plus the
// thresholded binary anomaly decision.
RankedDiagnosis diagnose(const PreparedTrace& t, const ModelParams& m);

} // namespace chase
