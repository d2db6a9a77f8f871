#include "chase/data_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <set>

#include <json.hpp>

#include "chase/encoders.hpp"
#include "chase/errors.hpp"
#include "chase/graph.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace chase {

void SplitRatios::validate() const {
    if (train < 0 || val < 0 || test < 0) {
        throw InvalidConfig("split ratios must be non-negative");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        throw InvalidConfig("split ratios must sum to 1");
    }
}

TopologyMode parse_topology_mode(const std::string& s) {
    if (s == "static") return TopologyMode::static_topology;
    if (s == "dynamic") return TopologyMode::dynamic_topology;
    throw InvalidConfig("topology mode must be static|dynamic, got '" + s + "'");
}

const char* topology_mode_name(TopologyMode m) {
    return m == TopologyMode::static_topology ? "static" : "dynamic";
}

void SynthConfig::validate() const {
    if (num_traces < 1) throw InvalidConfig("num_traces must be positive");
    if (instances_min < 2) throw InvalidConfig("instances_min must be >= 2");
    if (instances_max < instances_min) {
        throw InvalidConfig("instances_max must be >= instances_min");
    }
    if (metric_names.empty()) throw InvalidConfig("metric_names must not be empty");
    if (window_len < 1) throw InvalidConfig("window_len must be positive");
    if (fault_rate < 0.0 || fault_rate > 1.0) throw InvalidConfig("fault_rate must lie in [0,1]");
    if (signal_strength < 0.0) throw InvalidConfig("signal_strength must be >= 0");
    if (propagation_decay < 0.0 || propagation_decay > 1.0) {
        throw InvalidConfig("propagation_decay must lie in [0,1]");
    }
}

namespace {

constexpr double kEpochBase = 1.6e9;  // synthetic timeline origin
constexpr double kTraceSpacing = 10.0;
constexpr double kBackgroundErrorRate = 0.15;  // instances with stray error chatter

const std::vector<std::string>& benign_templates() {
    static const std::vector<std::string> pool = {
        "request processed in %d ms",
        "connection established to upstream-%d",
        "cache refreshed with %d entries",
        "heartbeat ok latency %d ms",
        "session token renewed for client-%d",
        "scheduled job completed in %d ms",
    };
    return pool;
}

// Fault lines and background error chatter share one template pool, so a
// single error line never proves an instance is the root cause; only the
// line count and the surrounding metric evidence separate them.
const std::vector<std::string>& error_templates() {
    static const std::vector<std::string> pool = {
        "error timeout while calling downstream after %d ms",
        "error connection refused by backend-%d",
        "error request failed with status %d",
        "fatal worker crashed with exit code %d",
    };
    return pool;
}

std::string render(const std::string& tmpl, int value) {
    const auto pos = tmpl.find("%d");
    if (pos == std::string::npos) return tmpl;
    return tmpl.substr(0, pos) + std::to_string(value) + tmpl.substr(pos + 2);
}

const char* kCategoryCycle[kNumCategories] = {"application", "message", "gateway", "database",
                                              "other"};

struct Topology {
    int n = 0;
    std::vector<std::string> ids;
    std::vector<std::string> categories;
    std::vector<std::pair<int, int>> edges;  // topo-position pairs, src < dst
    std::vector<int> topo_to_node;           // permutation: position -> node index
};

// Random permutation as topological order; each feasible forward edge kept
// with p = min(1, 2/remaining); orphans link back to a random predecessor so
// the DAG stays weakly connected.
Topology sample_topology(std::mt19937_64& rng, const SynthConfig& cfg) {
    Topology t;
    std::uniform_int_distribution<int> size_dist(cfg.instances_min, cfg.instances_max);
    t.n = size_dist(rng);
    for (int i = 0; i < t.n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "inst-%02d", i);
        t.ids.emplace_back(buf);
        t.categories.emplace_back(kCategoryCycle[i % kNumCategories]);
    }
    t.topo_to_node.resize(t.n);
    for (int i = 0; i < t.n; ++i) t.topo_to_node[i] = i;
    std::shuffle(t.topo_to_node.begin(), t.topo_to_node.end(), rng);

    std::vector<bool> has_parent(t.n, false);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int i = 0; i < t.n; ++i) {
        const int max_out = t.n - 1 - i;
        if (max_out <= 0) continue;
        const double p = std::min(1.0, 2.0 / max_out);
        for (int j = i + 1; j < t.n; ++j) {
            if (coin(rng) < p) {
                t.edges.emplace_back(i, j);
                has_parent[j] = true;
            }
        }
    }
    for (int j = 1; j < t.n; ++j) {
        if (!has_parent[j]) {
            std::uniform_int_distribution<int> pred(0, j - 1);
            t.edges.emplace_back(pred(rng), j);
            has_parent[j] = true;
        }
    }
    std::sort(t.edges.begin(), t.edges.end());
    return t;
}

double metric_base_level(const std::string& name) {
    return 20.0 + static_cast<double>(fnv1a64(name) % 600) / 10.0;
}

std::vector<int> hop_distances(const Topology& t, int source_pos) {
    std::vector<std::vector<int>> children(t.n);
    for (const auto& [a, b] : t.edges) children[a].push_back(b);
    std::vector<int> dist(t.n, -1);
    std::queue<int> q;
    dist[source_pos] = 0;
    q.push(source_pos);
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : children[u]) {
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
        }
    }
    return dist;
}

} // namespace

std::vector<TraceBundle> generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();

    Topology shared;
    if (cfg.topology_mode == TopologyMode::static_topology) {
        std::mt19937_64 topo_rng(cfg.seed);
        shared = sample_topology(topo_rng, cfg);
    }

    std::vector<TraceBundle> bundles;
    bundles.reserve(cfg.num_traces);
    for (int idx = 0; idx < cfg.num_traces; ++idx) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(idx));
        const Topology topo = cfg.topology_mode == TopologyMode::static_topology
                                  ? shared
                                  : sample_topology(rng, cfg);

        TraceBundle b;
        char tid[32];
        std::snprintf(tid, sizeof(tid), "trace-%05d", idx);
        b.trace_id = tid;
        const double trace_start = kEpochBase + kTraceSpacing * idx;

        // Instances in node-index order; start_ts follows the topo position.
        std::vector<int> node_to_pos(topo.n);
        for (int pos = 0; pos < topo.n; ++pos) node_to_pos[topo.topo_to_node[pos]] = pos;
        for (int node = 0; node < topo.n; ++node) {
            RawInstance ri;
            ri.id = topo.ids[node];
            ri.category = topo.categories[node];
            ri.start_ts = trace_start + 0.01 * node_to_pos[node];
            b.instances.push_back(std::move(ri));
        }
        for (const auto& [pa, pb] : topo.edges) {
            RawEdge e;
            e.src = topo.ids[topo.topo_to_node[pa]];
            e.dst = topo.ids[topo.topo_to_node[pb]];
            e.asynchronous = topo.categories[topo.topo_to_node[pa]] == "message" ||
                             topo.categories[topo.topo_to_node[pb]] == "message";
            b.edges.push_back(std::move(e));
        }

        // Fault placement.
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        const bool anomalous = coin(rng) < cfg.fault_rate;
        int fault_pos = -1;
        std::vector<int> hops;
        if (anomalous) {
            std::uniform_int_distribution<int> pick(0, topo.n - 1);
            fault_pos = pick(rng);
            hops = hop_distances(topo, fault_pos);
        }

        // Metric windows: unit-variance noise around the per-metric base. On
        // affected instances the final sample reads the shifted level
        // directly, so the injected deviation is exactly
        // signal_strength * decay^hops (descendants only).
        std::normal_distribution<double> noise(0.0, 1.0);
        for (int node = 0; node < topo.n; ++node) {
            const int pos = node_to_pos[node];
            for (const auto& name : cfg.metric_names) {
                RawMetric m;
                m.instance_id = topo.ids[node];
                m.metric_name = name;
                m.interval_s = 1.0;
                m.values.resize(cfg.window_len);
                const double base = metric_base_level(name);
                for (int s = 0; s < cfg.window_len; ++s) m.values[s] = base + noise(rng);
                if (anomalous && hops[pos] >= 0) {
                    m.values[cfg.window_len - 1] =
                        base + cfg.signal_strength * std::pow(cfg.propagation_decay, hops[pos]);
                }
                b.metrics.push_back(std::move(m));
            }
        }

        // Logs: benign chatter everywhere, occasional background error
        // chatter anywhere, and injected error lines at the root cause that
        // follow the fault downstream, thinning by the same per-hop decay.
        const int fault_lines =
            std::max(1, static_cast<int>(std::lround(cfg.signal_strength / 2.0)));
        std::uniform_int_distribution<int> n_benign(2, 4);
        std::uniform_int_distribution<int> small(1, 997);
        for (int node = 0; node < topo.n; ++node) {
            const int pos = node_to_pos[node];
            RawLog l;
            l.instance_id = topo.ids[node];
            const int lines = n_benign(rng);
            for (int k = 0; k < lines; ++k) {
                const auto& pool = benign_templates();
                l.messages.push_back(render(pool[small(rng) % pool.size()], small(rng)));
            }
            if (coin(rng) < kBackgroundErrorRate) {
                const auto& pool = error_templates();
                l.messages.push_back(render(pool[small(rng) % pool.size()], small(rng)));
            }
            if (anomalous && hops[pos] >= 0) {
                const double keep = std::pow(cfg.propagation_decay, hops[pos]);
                for (int k = 0; k < fault_lines; ++k) {
                    if (hops[pos] == 0 || coin(rng) < keep) {
                        const auto& pool = error_templates();
                        l.messages.push_back(render(pool[small(rng) % pool.size()], small(rng)));
                    }
                }
            }
            b.logs.push_back(std::move(l));
        }

        b.label.trace_id = b.trace_id;
        b.label.is_anomalous = anomalous;
        if (anomalous) {
            b.label.root_cause_instance = topo.ids[topo.topo_to_node[fault_pos]];
            static const char* kFaultTypes[] = {"latency_spike", "cpu_saturation",
                                                "memory_leak", "io_error"};
            b.label.fault_type = kFaultTypes[small(rng) % 4];
            b.label.fault_ts = trace_start;
        }
        bundles.push_back(std::move(b));
    }
    return bundles;
}

// ---------------------------------------------------------------------------
// JSONL writing
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw Error("cannot open '" + p.string() + "' for writing");
    return out;
}

} // namespace

void write_dataset(const std::vector<TraceBundle>& bundles, const std::string& dir,
                   const SplitRatios& split, std::uint64_t seed) {
    split.validate();
    fs::create_directories(dir);
    const fs::path base(dir);

    auto traces = open_out(base / "traces.jsonl");
    auto metrics = open_out(base / "metrics.jsonl");
    auto logs = open_out(base / "logs.jsonl");
    auto labels = open_out(base / "labels.jsonl");

    for (const auto& b : bundles) {
        json jt;
        jt["trace_id"] = b.trace_id;
        jt["instances"] = json::array();
        for (const auto& i : b.instances) {
            jt["instances"].push_back(
                {{"id", i.id}, {"category", i.category}, {"start_ts", i.start_ts}});
        }
        jt["edges"] = json::array();
        for (const auto& e : b.edges) {
            jt["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"async", e.asynchronous}});
        }
        traces << jt.dump() << '\n';

        for (const auto& m : b.metrics) {
            json jm;
            jm["trace_id"] = b.trace_id;
            jm["instance_id"] = m.instance_id;
            jm["metric_name"] = m.metric_name;
            jm["interval_s"] = m.interval_s;
            jm["values"] = m.values;
            metrics << jm.dump() << '\n';
        }
        for (const auto& l : b.logs) {
            json jl;
            jl["trace_id"] = b.trace_id;
            jl["instance_id"] = l.instance_id;
            jl["messages"] = l.messages;
            logs << jl.dump() << '\n';
        }
        json jb;
        jb["trace_id"] = b.trace_id;
        jb["is_anomalous"] = b.label.is_anomalous;
        jb["root_cause"] =
            b.label.root_cause_instance ? json(*b.label.root_cause_instance) : json(nullptr);
        jb["fault_type"] = b.label.fault_type ? json(*b.label.fault_type) : json(nullptr);
        jb["fault_ts"] = b.label.fault_ts ? json(*b.label.fault_ts) : json(nullptr);
        labels << jb.dump() << '\n';
    }

    json manifest;
    manifest["version"] = "chase-data-v1";
    manifest["traces"] = "traces.jsonl";
    manifest["metrics"] = "metrics.jsonl";
    manifest["logs"] = "logs.jsonl";
    manifest["labels"] = "labels.jsonl";
    manifest["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
    manifest["seed"] = seed;
    auto mf = open_out(base / "manifest.json");
    mf << manifest.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::string& path) {
    fs::path p(path);
    if (fs::is_directory(p)) p /= "manifest.json";
    std::ifstream in(p);
    if (!in) throw Error("cannot open manifest '" + p.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(p.string(), 0, e.what());
    }
    DatasetManifest m;
    m.dir = p.parent_path().string();
    if (j.contains("traces")) m.traces_file = j["traces"].get<std::string>();
    if (j.contains("metrics")) m.metrics_file = j["metrics"].get<std::string>();
    if (j.contains("logs")) m.logs_file = j["logs"].get<std::string>();
    if (j.contains("labels")) m.labels_file = j["labels"].get<std::string>();
    if (j.contains("split")) {
        m.split.train = j["split"].value("train", 0.6);
        m.split.val = j["split"].value("val", 0.2);
        m.split.test = j["split"].value("test", 0.2);
    }
    if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
    m.split.validate();
    return m;
}

// ---------------------------------------------------------------------------
// JSONL loading
// ---------------------------------------------------------------------------

namespace {

class JsonlReader {
public:
    JsonlReader(const fs::path& path, bool required) : path_(path.string()) {
        in_.open(path);
        if (!in_ && required) throw Error("cannot open '" + path_ + "'");
    }

    bool ok() const { return in_.is_open(); }

    // Returns false at EOF; blank lines are skipped.
    bool next(json& out) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                out = json::parse(line);
            } catch (const json::exception& e) {
                throw ParseError(path_, line_no_, e.what());
            }
            if (!out.is_object()) throw ParseError(path_, line_no_, "record is not an object");
            return true;
        }
        return false;
    }

    long line() const { return line_no_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    long line_no_ = 0;
};

std::string context(const JsonlReader& r) {
    return " (" + r.path() + ":" + std::to_string(r.line()) + ")";
}

const json& field(const JsonlReader& r, const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw SchemaViolation(name, "missing" + context(r));
    return *it;
}

std::string str_field(const JsonlReader& r, const json& j, const char* name) {
    const json& f = field(r, j, name);
    if (!f.is_string()) throw SchemaViolation(name, "expected string" + context(r));
    return f.get<std::string>();
}

double num_field(const JsonlReader& r, const json& j, const char* name) {
    const json& f = field(r, j, name);
    if (!f.is_number()) throw SchemaViolation(name, "expected number" + context(r));
    return f.get<double>();
}

bool bool_field(const JsonlReader& r, const json& j, const char* name) {
    const json& f = field(r, j, name);
    if (!f.is_boolean()) throw SchemaViolation(name, "expected bool" + context(r));
    return f.get<bool>();
}

} // namespace

std::vector<TraceBundle> load_dataset(const DatasetManifest& manifest, bool require_labels) {
    const fs::path base(manifest.dir);
    std::vector<TraceBundle> bundles;
    std::map<std::string, size_t> index;

    {
        JsonlReader reader(base / manifest.traces_file, true);
        json j;
        while (reader.next(j)) {
            TraceBundle b;
            b.trace_id = str_field(reader, j, "trace_id");
            if (index.count(b.trace_id)) {
                throw SchemaViolation("trace_id",
                                      "duplicate '" + b.trace_id + "'" + context(reader));
            }
            const json& insts = field(reader, j, "instances");
            if (!insts.is_array() || insts.empty()) {
                throw SchemaViolation("instances", "expected non-empty array" + context(reader));
            }
            for (const auto& ji : insts) {
                RawInstance ri;
                ri.id = str_field(reader, ji, "id");
                ri.category = str_field(reader, ji, "category");
                try {
                    parse_category(ri.category);
                } catch (const UnknownCategory&) {
                    throw SchemaViolation("category",
                                          "unknown '" + ri.category + "'" + context(reader));
                }
                ri.start_ts = num_field(reader, ji, "start_ts");
                b.instances.push_back(std::move(ri));
            }
            if (j.contains("edges")) {
                const json& edges = j["edges"];
                if (!edges.is_array()) {
                    throw SchemaViolation("edges", "expected array" + context(reader));
                }
                for (const auto& je : edges) {
                    RawEdge re;
                    re.src = str_field(reader, je, "src");
                    re.dst = str_field(reader, je, "dst");
                    re.asynchronous = je.value("async", false);
                    b.edges.push_back(std::move(re));
                }
            }
            b.label.trace_id = b.trace_id;
            index.emplace(b.trace_id, bundles.size());
            bundles.push_back(std::move(b));
        }
    }
    if (bundles.empty()) {
        throw EmptyDataset((base / manifest.traces_file).string());
    }

    auto bundle_of = [&](const JsonlReader& r, const std::string& trace_id) -> TraceBundle& {
        auto it = index.find(trace_id);
        if (it == index.end()) {
            throw SchemaViolation("trace_id", "unknown '" + trace_id + "'" + context(r));
        }
        return bundles[it->second];
    };

    {
        JsonlReader reader(base / manifest.metrics_file, true);
        json j;
        while (reader.next(j)) {
            RawMetric m;
            const std::string trace_id = str_field(reader, j, "trace_id");
            m.instance_id = str_field(reader, j, "instance_id");
            m.metric_name = str_field(reader, j, "metric_name");
            m.interval_s = num_field(reader, j, "interval_s");
            const json& values = field(reader, j, "values");
            if (!values.is_array() || values.empty()) {
                throw SchemaViolation("values", "expected non-empty array" + context(reader));
            }
            for (const auto& v : values) {
                if (v.is_number()) {
                    m.values.push_back(v.get<double>());
                } else if (v.is_null()) {
                    m.values.push_back(std::numeric_limits<double>::quiet_NaN());
                } else {
                    throw SchemaViolation("values",
                                          "expected numbers or null" + context(reader));
                }
            }
            bundle_of(reader, trace_id).metrics.push_back(std::move(m));
        }
    }

    {
        JsonlReader reader(base / manifest.logs_file, true);
        json j;
        while (reader.next(j)) {
            RawLog l;
            const std::string trace_id = str_field(reader, j, "trace_id");
            l.instance_id = str_field(reader, j, "instance_id");
            const json& msgs = field(reader, j, "messages");
            if (!msgs.is_array()) {
                throw SchemaViolation("messages", "expected array" + context(reader));
            }
            for (const auto& msg : msgs) {
                if (!msg.is_string()) {
                    throw SchemaViolation("messages", "expected strings" + context(reader));
                }
                l.messages.push_back(msg.get<std::string>());
            }
            bundle_of(reader, trace_id).logs.push_back(std::move(l));
        }
    }

    {
        JsonlReader reader(base / manifest.labels_file, require_labels);
        if (reader.ok()) {
            std::set<std::string> labeled;
            json j;
            while (reader.next(j)) {
                const std::string trace_id = str_field(reader, j, "trace_id");
                TraceBundle& b = bundle_of(reader, trace_id);
                TraceLabel& label = b.label;
                label.is_anomalous = bool_field(reader, j, "is_anomalous");
                const json& root = field(reader, j, "root_cause");
                if (root.is_string()) {
                    label.root_cause_instance = root.get<std::string>();
                } else if (!root.is_null()) {
                    throw SchemaViolation("root_cause",
                                          "expected string or null" + context(reader));
                }
                if (j.contains("fault_type") && j["fault_type"].is_string()) {
                    label.fault_type = j["fault_type"].get<std::string>();
                }
                if (j.contains("fault_ts") && j["fault_ts"].is_number()) {
                    label.fault_ts = j["fault_ts"].get<double>();
                }
                if (label.is_anomalous && !label.root_cause_instance) {
                    throw SchemaViolation("root_cause",
                                          "required for anomalous traces" + context(reader));
                }
                labeled.insert(trace_id);
            }
            if (require_labels) {
                for (const auto& b : bundles) {
                    if (!labeled.count(b.trace_id)) {
                        throw SchemaViolation("trace_id",
                                              "trace '" + b.trace_id + "' has no label record");
                    }
                }
            }
        } else if (require_labels) {
            throw Error("cannot open '" + (base / manifest.labels_file).string() + "'");
        }
    }

    // Structural validation: DAG, references, label resolution.
    for (const auto& b : bundles) {
        const InvocationGraph g = build_invocation_graph(b);
        if (b.label.is_anomalous && g.index_of(*b.label.root_cause_instance) < 0) {
            throw SchemaViolation("root_cause", "'" + *b.label.root_cause_instance +
                                                    "' is not an instance of trace '" +
                                                    b.trace_id + "'");
        }
    }
    return bundles;
}

SplitResult split_dataset(const std::vector<TraceBundle>& bundles, const SplitRatios& ratios,
                          std::uint64_t seed) {
    ratios.validate();
    const double r[3] = {ratios.train, ratios.val, ratios.test};

    // Largest-remainder allocation of `count` items across the three splits.
    auto allocate = [&](long count) {
        std::array<long, 3> alloc{};
        std::array<double, 3> frac{};
        long assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double exact = count * r[s];
            alloc[s] = static_cast<long>(std::floor(exact));
            frac[s] = exact - alloc[s];
            assigned += alloc[s];
        }
        while (assigned < count) {
            int best = 0;
            for (int s = 1; s < 3; ++s) {
                if (frac[s] > frac[best]) best = s;
            }
            ++alloc[best];
            frac[best] = -1.0;
            ++assigned;
        }
        return alloc;
    };

    std::vector<int> anomalous, normal;
    for (size_t i = 0; i < bundles.size(); ++i) {
        (bundles[i].label.is_anomalous ? anomalous : normal).push_back(static_cast<int>(i));
    }
    std::mt19937_64 rng(seed);
    std::shuffle(anomalous.begin(), anomalous.end(), rng);
    std::shuffle(normal.begin(), normal.end(), rng);

    const auto anom_alloc = allocate(static_cast<long>(anomalous.size()));
    const auto norm_alloc = allocate(static_cast<long>(normal.size()));

    SplitResult out;
    std::vector<TraceBundle>* splits[3] = {&out.train, &out.val, &out.test};
    size_t a_at = 0, n_at = 0;
    for (int s = 0; s < 3; ++s) {
        for (long k = 0; k < anom_alloc[s]; ++k) splits[s]->push_back(bundles[anomalous[a_at++]]);
        for (long k = 0; k < norm_alloc[s]; ++k) splits[s]->push_back(bundles[normal[n_at++]]);
        if (r[s] > 0.0 && splits[s]->empty()) {
            throw InsufficientData("split " + std::to_string(s) + " received no traces");
        }
    }
    return out;
}

} // namespace chase
