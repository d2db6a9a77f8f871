#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace chase {

// Closed set of instance categories. Anything else is rejected at ingestion.
enum class InstanceCategory {
    application = 0,
    message = 1,
    gateway = 2,
    database = 3,
    other = 4,
};

constexpr int kNumCategories = 5;

InstanceCategory parse_category(const std::string& s);
const char* category_name(InstanceCategory c);

// One deployed service component participating in a trace.
struct InstanceNode {
    std::string id;
    InstanceCategory category = InstanceCategory::other;
    int order_k = 0;        // temporal invocation order within the trace
    double start_ts = 0.0;  // invocation start, epoch seconds
};

// One monitored metric window attached to an instance.
struct MetricNode {
    std::string instance_id;
    std::string metric_name;
    std::vector<double> series;  // uniform sampling, no NaN after ingestion
    double interval_s = 1.0;
    int window_len = 0;  // == series.size()
};

// All log output of one instance, merged into a single node.
struct LogNode {
    std::string instance_id;
    std::vector<std::string> messages;
};

struct InvocationEdge {
    int caller = -1;
    int callee = -1;
    // Stored for inspection; every computation treats sync and async alike.
    bool asynchronous = false;
};

struct AttachmentEdge {
    bool is_metric = false;  // false => log node
    int data_index = -1;     // index into metrics or logs
    int instance_index = -1;
};

// Heterogeneous graph of one trace: instance nodes joined by invocation
// edges, with metric and log data nodes attached to their source instance.
// Immutable after build_invocation_graph; safe to share across workers.
struct InvocationGraph {
    std::vector<InstanceNode> instances;
    std::vector<MetricNode> metrics;
    std::vector<LogNode> logs;  // logs[i] belongs to instances[i]
    std::vector<InvocationEdge> invocation_edges;
    std::vector<AttachmentEdge> attachment_edges;

    // Derived adjacency, filled by build_invocation_graph.
    std::vector<std::vector<int>> parents;   // instance -> caller indices
    std::vector<std::vector<int>> children;  // instance -> callee indices
    std::vector<std::vector<int>> instance_metrics;  // instance -> metric node indices

    int num_instances() const { return static_cast<int>(instances.size()); }
    int index_of(const std::string& instance_id) const;  // -1 when absent
};

// Ground truth for one trace.
struct TraceLabel {
    std::string trace_id;
    bool is_anomalous = false;
    std::optional<std::string> root_cause_instance;  // required when anomalous
    std::optional<std::string> fault_type;
    std::optional<double> fault_ts;  // epoch seconds
};

// Raw payload of one trace before graph assembly. Mirrors the JSONL schemas.
struct RawInstance {
    std::string id;
    std::string category;
    double start_ts = 0.0;
};
struct RawEdge {
    std::string src;
    std::string dst;
    bool asynchronous = false;
};
struct RawMetric {
    std::string instance_id;
    std::string metric_name;
    double interval_s = 1.0;
    std::vector<double> values;  // may contain NaN; imputed at build time
};
struct RawLog {
    std::string instance_id;
    std::vector<std::string> messages;
};

struct TraceBundle {
    std::string trace_id;
    std::vector<RawInstance> instances;
    std::vector<RawEdge> edges;
    std::vector<RawMetric> metrics;
    std::vector<RawLog> logs;
    TraceLabel label;
};

// Output of the localizer for one trace: instances sorted by logit
// descending (ties broken by id), plus the binary anomaly decision.
struct RankedDiagnosis {
    std::string trace_id;
    std::vector<std::pair<std::string, double>> ranking;  // (instance id, logit)
    bool is_anomalous = false;
    double max_logit = 0.0;
    double timestamp = 0.0;  // trace start, used by Percentage@n
};

} // namespace chase
