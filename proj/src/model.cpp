#include "chase/model.hpp"

#include <algorithm>
#include <cmath>

#include "chase/errors.hpp"
#include "chase/graph.hpp"

namespace chase {

Ablation parse_ablation(const std::string& s) {
    if (s == "none" || s.empty()) return Ablation::none;
    if (s == "V1" || s == "v1") return Ablation::V1;
    if (s == "V2" || s == "v2") return Ablation::V2;
    if (s == "V3" || s == "v3") return Ablation::V3;
    throw InvalidConfig("ablation must be one of none|V1|V2|V3, got '" + s + "'");
}

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::V1: return "V1";
        case Ablation::V2: return "V2";
        case Ablation::V3: return "V3";
    }
    return "none";
}

void TrainConfig::validate() const {
    if (dim < 1) throw InvalidConfig("dim must be positive");
    if (heads < 1) throw InvalidConfig("heads must be positive");
    if (dim % heads != 0) throw InvalidConfig("dim must be divisible by heads");
    if (gamma < 0.0 || gamma > 1.0) throw InvalidConfig("gamma must lie in [0,1]");
    if (layers_attn < 1) throw InvalidConfig("attn_layers must be positive");
    if (hyper_layers < 1) throw InvalidConfig("hyper_layers must be positive");
    if (lr <= 0.0) throw InvalidConfig("lr must be positive");
    if (epochs < 0) throw InvalidConfig("epochs must be non-negative");
    if (batch_size < 1) throw InvalidConfig("batch_size must be positive");
    if (n_base <= 0.0) throw InvalidConfig("n_base must be positive");
    if (token_buckets < 1) throw InvalidConfig("token_buckets must be positive");
}

namespace {

Eigen::MatrixXd uniform_matrix(int rows, int cols, double lim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-lim, lim);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

AttentionKindParams init_kind(const std::string& name, int d, int heads, double lim,
                              std::mt19937_64& rng) {
    AttentionKindParams k;
    k.W = ad::Tensor(name + ".W", uniform_matrix(d, d, lim, rng));
    k.Wp = ad::Tensor(name + ".Wp", uniform_matrix(d, d, lim, rng));
    k.A = ad::Tensor(name + ".A", uniform_matrix(d / heads, d / heads, lim, rng));
    k.phi = ad::Tensor(name + ".phi", Eigen::MatrixXd::Ones(1, 1));
    return k;
}

void collect_kind(std::vector<const ad::Tensor*>& out, const AttentionKindParams& k) {
    out.push_back(&k.W);
    out.push_back(&k.Wp);
    out.push_back(&k.A);
    out.push_back(&k.phi);
}

} // namespace

ModelParams ModelParams::init(const TrainConfig& cfg, std::vector<std::string> metric_names,
                              std::mt19937_64& rng) {
    cfg.validate();
    std::sort(metric_names.begin(), metric_names.end());
    metric_names.erase(std::unique(metric_names.begin(), metric_names.end()),
                       metric_names.end());

    ModelParams m;
    m.config = cfg;
    m.metric_names = std::move(metric_names);
    const int d = cfg.dim;
    const double lim = 1.0 / std::sqrt(static_cast<double>(d));

    m.encoders.d = d;
    m.encoders.n_base = cfg.n_base;
    m.encoders.buckets = cfg.token_buckets;
    m.encoders.use_instance_embedding = cfg.ablation != Ablation::V1;
    if (m.encoders.use_instance_embedding) {
        m.encoders.theta_e =
            ad::Tensor("encoder.theta_e", uniform_matrix(kNumCategories, d, lim, rng));
    }
    m.encoders.token_table =
        ad::Tensor("encoder.token_table", uniform_matrix(cfg.token_buckets, d, lim, rng));
    m.encoders.metric_proj =
        ad::Tensor("encoder.metric_proj", uniform_matrix(kMetricStats, d, lim, rng));

    m.layers.resize(cfg.layers_attn);
    for (int l = 0; l < cfg.layers_attn; ++l) {
        auto& lp = m.layers[l];
        lp.heads = cfg.heads;
        lp.d = d;
        lp.gamma = cfg.gamma;
        lp.leaky_slope = cfg.leaky_slope;
        lp.homogeneous = cfg.ablation == Ablation::V2;
        const std::string prefix = "attn." + std::to_string(l) + ".";
        lp.W_instance = ad::Tensor(prefix + "W_instance", uniform_matrix(d, d, lim, rng));
        lp.W_hat = ad::Tensor(prefix + "W_hat", Eigen::MatrixXd::Identity(d, d) +
                                                    uniform_matrix(d, d, 0.01, rng));
        if (lp.homogeneous) {
            lp.log_kind = init_kind(prefix + "shared", d, cfg.heads, lim, rng);
        } else {
            lp.log_kind = init_kind(prefix + "log", d, cfg.heads, lim, rng);
            for (const auto& name : m.metric_names) {
                lp.metric_kinds[name] =
                    init_kind(prefix + "metric." + name, d, cfg.heads, lim, rng);
            }
            lp.unknown_metric =
                init_kind(prefix + "metric.__unknown__", d, cfg.heads, lim, rng);
        }
    }

    if (cfg.ablation != Ablation::V3) {
        m.hyper.theta = ad::Tensor("hyper.theta", uniform_matrix(d, d, lim, rng));
    }
    m.hyper.head = ad::Tensor("hyper.head", uniform_matrix(d, 1, lim, rng));
    return m;
}

std::vector<const ad::Tensor*> ModelParams::tensors() const {
    std::vector<const ad::Tensor*> out;
    if (encoders.theta_e.size() > 0) out.push_back(&encoders.theta_e);
    out.push_back(&encoders.token_table);
    out.push_back(&encoders.metric_proj);
    for (const auto& lp : layers) {
        out.push_back(&lp.W_instance);
        out.push_back(&lp.W_hat);
        collect_kind(out, lp.log_kind);
        for (const auto& [name, kind] : lp.metric_kinds) collect_kind(out, kind);
        if (!lp.homogeneous) collect_kind(out, lp.unknown_metric);
    }
    if (hyper.theta.size() > 0) out.push_back(&hyper.theta);
    out.push_back(&hyper.head);
    return out;
}

std::vector<ad::Tensor*> ModelParams::tensors() {
    std::vector<ad::Tensor*> out;
    for (const ad::Tensor* t : static_cast<const ModelParams*>(this)->tensors()) {
        out.push_back(const_cast<ad::Tensor*>(t));
    }
    return out;
}

void ModelParams::zero_grads() {
    for (ad::Tensor* t : tensors()) t->zero_grad();
}

long ModelParams::parameter_count() const {
    long n = 0;
    for (const ad::Tensor* t : tensors()) n += static_cast<long>(t->size());
    return n;
}

PreparedTrace prepare_trace(const TraceBundle& bundle, const TrainConfig& cfg) {
    PreparedTrace t;
    t.trace_id = bundle.trace_id;
    t.graph = build_invocation_graph(bundle);
    t.label = bundle.label;

    const int n = t.graph.num_instances();
    if (t.label.is_anomalous) {
        if (!t.label.root_cause_instance.has_value()) {
            throw MissingLabel("anomalous trace '" + bundle.trace_id + "' lacks a root cause");
        }
        t.root_index = t.graph.index_of(*t.label.root_cause_instance);
        if (t.root_index < 0) {
            throw MissingLabel("root cause '" + *t.label.root_cause_instance +
                               "' is not an instance of trace '" + bundle.trace_id + "'");
        }
    }

    t.timestamp = t.graph.instances[0].start_ts;
    for (const auto& inst : t.graph.instances) t.timestamp = std::min(t.timestamp, inst.start_ts);

    t.category_idx.resize(n);
    t.pos_enc.resize(n);
    t.log_buckets.resize(n);
    for (int i = 0; i < n; ++i) {
        t.category_idx[i] = static_cast<int>(t.graph.instances[i].category);
        t.pos_enc[i] = positional_encoding(t.graph.instances[i].order_k, cfg.dim, cfg.n_base);
        t.log_buckets[i] = log_bucket_indices(t.graph.logs[i], cfg.token_buckets);
    }
    t.metric_stats.reserve(t.graph.metrics.size());
    for (const auto& mn : t.graph.metrics) t.metric_stats.push_back(metric_summary(mn));

    t.incidence = build_causal_hyperedges(t.graph);
    t.delta = normalized_operator(t.incidence);
    return t;
}

namespace {

std::vector<std::vector<NeighborRef>> build_neighbors(const PreparedTrace& t,
                                                      const ModelParams& m) {
    const int n = t.graph.num_instances();
    std::vector<Eigen::RowVectorXd> metric_emb(t.graph.metrics.size());
    for (size_t j = 0; j < t.graph.metrics.size(); ++j) {
        metric_emb[j] = t.metric_stats[j] * m.encoders.metric_proj.value;
    }
    std::vector<std::vector<NeighborRef>> neighbors(n);
    for (int i = 0; i < n; ++i) {
        const auto& inst_id = t.graph.instances[i].id;
        Eigen::RowVectorXd log_emb = Eigen::RowVectorXd::Zero(m.encoders.d);
        for (int b : t.log_buckets[i]) log_emb += m.encoders.token_table.value.row(b);
        log_emb /= static_cast<double>(t.log_buckets[i].size());
        neighbors[i].push_back({NeighborKind::Log, "", log_emb, "log:" + inst_id});
        for (int mi : t.graph.instance_metrics[i]) {
            const auto& name = t.graph.metrics[mi].metric_name;
            neighbors[i].push_back(
                {NeighborKind::Metric, name, metric_emb[mi], "metric:" + inst_id + ":" + name});
        }
    }
    return neighbors;
}

Eigen::MatrixXd instance_embeddings(const PreparedTrace& t, const ModelParams& m) {
    const int n = t.graph.num_instances();
    Eigen::MatrixXd x(n, m.encoders.d);
    for (int i = 0; i < n; ++i) {
        x.row(i) = t.pos_enc[i];
        if (m.encoders.use_instance_embedding) {
            x.row(i) += m.encoders.theta_e.value.row(t.category_idx[i]);
        }
    }
    return x;
}

} // namespace

Eigen::VectorXd model_logits(const PreparedTrace& t, const ModelParams& m,
                             std::vector<AttentionRecord>* records) {
    const auto neighbors = build_neighbors(t, m);
    std::vector<std::string> ids;
    for (const auto& inst : t.graph.instances) ids.push_back(inst.id);
    const Eigen::MatrixXd x0 = instance_embeddings(t, m);
    Eigen::MatrixXd x = attention_forward(x0, neighbors, m.layers, &ids, records);

    if (m.config.ablation == Ablation::V3) {
        return root_cause_scores(x, m.hyper);
    }
    const double slope = m.config.leaky_slope;
    for (int l = 0; l < m.config.hyper_layers; ++l) {
        x = (t.delta * x * m.hyper.theta.value)
                .unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    }
    return root_cause_scores(x, m.hyper);
}

ad::Var model_logits_taped(ad::Tape& tape, const PreparedTrace& t, ModelParams& m,
                           LeafCache& leaves) {
    const int n = t.graph.num_instances();

    std::vector<ad::Var> metric_emb(t.graph.metrics.size());
    for (size_t j = 0; j < t.graph.metrics.size(); ++j) {
        metric_emb[j] = tape.matmul(tape.constant(t.metric_stats[j]),
                                    leaves.get(tape, m.encoders.metric_proj));
    }
    std::vector<std::vector<TapedNeighbor>> neighbors(n);
    std::vector<ad::Var> x(n);
    for (int i = 0; i < n; ++i) {
        ad::Var log_emb = tape.mean_rows(leaves.get(tape, m.encoders.token_table),
                                         t.log_buckets[i]);
        neighbors[i].push_back({NeighborKind::Log, "", log_emb});
        for (int mi : t.graph.instance_metrics[i]) {
            neighbors[i].push_back(
                {NeighborKind::Metric, t.graph.metrics[mi].metric_name, metric_emb[mi]});
        }
        ad::Var pe = tape.constant(t.pos_enc[i]);
        x[i] = m.encoders.use_instance_embedding
                   ? tape.add(tape.row(leaves.get(tape, m.encoders.theta_e),
                                       t.category_idx[i]),
                              pe)
                   : pe;
    }

    for (auto& lp : m.layers) {
        std::vector<ad::Var> next(n);
        for (int i = 0; i < n; ++i) {
            next[i] = attention_instance_forward(tape, x[i], neighbors[i], lp, leaves);
        }
        x = std::move(next);
    }

    ad::Var stacked = tape.concat_rows(x);
    if (m.config.ablation == Ablation::V3) {
        return tape.matmul(stacked, leaves.get(tape, m.hyper.head));
    }
    ad::Var delta = tape.constant(t.delta);
    ad::Var cur = stacked;
    for (int l = 0; l < m.config.hyper_layers; ++l) {
        cur = tape.leaky_relu(
            tape.matmul(tape.matmul(delta, cur), leaves.get(tape, m.hyper.theta)),
            m.config.leaky_slope);
    }
    return tape.matmul(cur, leaves.get(tape, m.hyper.head));
}

double rca_loss(const std::vector<Eigen::VectorXd>& logits_per_trace,
                const std::vector<int>& root_index_per_trace) {
    if (logits_per_trace.size() != root_index_per_trace.size()) {
        throw DimensionMismatch("loss inputs differ in length");
    }
    if (logits_per_trace.empty()) throw EmptyTrainingSet("loss over zero traces");
    double total = 0.0;
    for (size_t i = 0; i < logits_per_trace.size(); ++i) {
        const auto& logits = logits_per_trace[i];
        const int root = root_index_per_trace[i];
        if (root < 0 || root >= logits.size()) {
            throw MissingLabel("root index " + std::to_string(root) + " for trace " +
                               std::to_string(i));
        }
        const double mx = logits.maxCoeff();
        const double lse = std::log((logits.array() - mx).exp().sum()) + mx;
        total += lse - logits(root);
    }
    return total / static_cast<double>(logits_per_trace.size());
}

double rca_loss(const std::vector<Eigen::VectorXd>& logits_per_trace,
                const std::vector<TraceLabel>& labels,
                const std::vector<std::vector<std::string>>& instance_ids_per_trace) {
    if (logits_per_trace.size() != labels.size() ||
        labels.size() != instance_ids_per_trace.size()) {
        throw DimensionMismatch("loss inputs differ in length");
    }
    std::vector<int> roots(labels.size(), -1);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i].is_anomalous || !labels[i].root_cause_instance.has_value()) {
            throw MissingLabel("trace '" + labels[i].trace_id +
                               "' is not an anomalous trace with a root cause");
        }
        const auto& ids = instance_ids_per_trace[i];
        auto it = std::find(ids.begin(), ids.end(), *labels[i].root_cause_instance);
        if (it == ids.end()) {
            throw MissingLabel("root cause '" + *labels[i].root_cause_instance +
                               "' missing from trace '" + labels[i].trace_id + "'");
        }
        roots[i] = static_cast<int>(it - ids.begin());
    }
    return rca_loss(logits_per_trace, roots);
}

RankedDiagnosis diagnose(const PreparedTrace& t, const ModelParams& m) {
    const Eigen::VectorXd logits = model_logits(t, m);
    RankedDiagnosis d;
    d.trace_id = t.trace_id;
    d.timestamp = t.timestamp;
    std::vector<int> order(t.graph.num_instances());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (logits(a) != logits(b)) return logits(a) > logits(b);
        return t.graph.instances[a].id < t.graph.instances[b].id;
    });
    for (int i : order) d.ranking.emplace_back(t.graph.instances[i].id, logits(i));
    d.max_logit = logits.maxCoeff();
    d.is_anomalous = d.max_logit > m.anomaly_threshold;
    return d;
}

} // namespace chase
