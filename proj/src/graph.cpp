#include "chase/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

#include "chase/errors.hpp"

namespace chase {

bool is_dag(int num_nodes, const std::vector<InvocationEdge>& edges) {
    std::vector<std::vector<int>> adj(num_nodes);
    std::vector<int> indeg(num_nodes, 0);
    for (const auto& e : edges) {
        adj[e.caller].push_back(e.callee);
        ++indeg[e.callee];
    }
    std::queue<int> q;
    for (int i = 0; i < num_nodes; ++i) {
        if (indeg[i] == 0) q.push(i);
    }
    int seen = 0;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        ++seen;
        for (int v : adj[u]) {
            if (--indeg[v] == 0) q.push(v);
        }
    }
    return seen == num_nodes;
}

namespace {

std::vector<double> impute_series(const std::vector<double>& values) {
    std::vector<double> out(values.size(), 0.0);
    double last = 0.0;
    bool have_last = false;
    for (size_t i = 0; i < values.size(); ++i) {
        double v = values[i];
        if (std::isfinite(v)) {
            out[i] = v;
            last = v;
            have_last = true;
        } else {
            out[i] = have_last ? last : 0.0;  // LOCF, leading gaps become zero
        }
    }
    return out;
}

} // namespace

InvocationGraph build_invocation_graph(const TraceBundle& bundle) {
    if (bundle.instances.empty()) {
        throw EmptyTrace("trace '" + bundle.trace_id + "' has no instances");
    }

    InvocationGraph g;

    // Collapse duplicate ids, keeping the earliest start_ts.
    std::map<std::string, int> index;
    for (const auto& ri : bundle.instances) {
        auto it = index.find(ri.id);
        if (it == index.end()) {
            InstanceNode node;
            node.id = ri.id;
            node.category = parse_category(ri.category);
            node.start_ts = ri.start_ts;
            index.emplace(ri.id, static_cast<int>(g.instances.size()));
            g.instances.push_back(std::move(node));
        } else if (ri.start_ts < g.instances[it->second].start_ts) {
            g.instances[it->second].start_ts = ri.start_ts;
        }
    }
    const int n = g.num_instances();

    auto resolve = [&](const std::string& id, const char* what) {
        auto it = index.find(id);
        if (it == index.end()) {
            throw DanglingReference(std::string(what) + " names unknown instance '" + id +
                                    "' in trace '" + bundle.trace_id + "'");
        }
        return it->second;
    };

    for (const auto& re : bundle.edges) {
        InvocationEdge e;
        e.caller = resolve(re.src, "edge src");
        e.callee = resolve(re.dst, "edge dst");
        e.asynchronous = re.asynchronous;
        g.invocation_edges.push_back(e);
    }
    if (!is_dag(n, g.invocation_edges)) {
        throw CycleDetected("invocation edges of trace '" + bundle.trace_id + "'");
    }

    // order_k from start timestamps, ties broken by id.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& x = g.instances[a];
        const auto& y = g.instances[b];
        if (x.start_ts != y.start_ts) return x.start_ts < y.start_ts;
        return x.id < y.id;
    });
    for (int k = 0; k < n; ++k) g.instances[order[k]].order_k = k;

    g.parents.assign(n, {});
    g.children.assign(n, {});
    for (const auto& e : g.invocation_edges) {
        g.children[e.caller].push_back(e.callee);
        g.parents[e.callee].push_back(e.caller);
    }

    // Metric nodes.
    g.instance_metrics.assign(n, {});
    for (const auto& rm : bundle.metrics) {
        int owner = resolve(rm.instance_id, "metric record");
        if (rm.values.empty()) {
            throw EmptySeries("metric '" + rm.metric_name + "' of instance '" +
                              rm.instance_id + "'");
        }
        MetricNode m;
        m.instance_id = rm.instance_id;
        m.metric_name = rm.metric_name;
        m.interval_s = rm.interval_s;
        m.series = impute_series(rm.values);
        m.window_len = static_cast<int>(m.series.size());
        int mi = static_cast<int>(g.metrics.size());
        g.metrics.push_back(std::move(m));
        g.instance_metrics[owner].push_back(mi);
        g.attachment_edges.push_back({true, mi, owner});
    }

    // Exactly one log node per instance; multiple records concatenate.
    g.logs.resize(n);
    for (int i = 0; i < n; ++i) g.logs[i].instance_id = g.instances[i].id;
    for (const auto& rl : bundle.logs) {
        int owner = resolve(rl.instance_id, "log record");
        auto& msgs = g.logs[owner].messages;
        msgs.insert(msgs.end(), rl.messages.begin(), rl.messages.end());
    }
    for (int i = 0; i < n; ++i) g.attachment_edges.push_back({false, i, i});

    return g;
}

namespace {

std::set<int> reachable(const std::vector<std::vector<int>>& adj, int from) {
    std::set<int> seen;
    std::vector<int> stack = adj[from];
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        if (seen.insert(u).second) {
            stack.insert(stack.end(), adj[u].begin(), adj[u].end());
        }
    }
    seen.erase(from);
    return seen;
}

} // namespace

std::set<int> topological_ancestors(const InvocationGraph& g, int v) {
    if (v < 0 || v >= g.num_instances()) {
        throw IndexOutOfRange("instance index " + std::to_string(v));
    }
    return reachable(g.parents, v);
}

std::set<int> topological_descendants(const InvocationGraph& g, int v) {
    if (v < 0 || v >= g.num_instances()) {
        throw IndexOutOfRange("instance index " + std::to_string(v));
    }
    return reachable(g.children, v);
}

} // namespace chase
