#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chase/types.hpp"

namespace chase {

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;

    void validate() const;  // throws InvalidConfig unless they sum to 1
};

struct DatasetManifest {
    std::string dir;  // directory holding the files below
    std::string traces_file = "traces.jsonl";
    std::string metrics_file = "metrics.jsonl";
    std::string logs_file = "logs.jsonl";
    std::string labels_file = "labels.jsonl";
    SplitRatios split;
    std::uint64_t seed = 42;
};

enum class TopologyMode { static_topology, dynamic_topology };

TopologyMode parse_topology_mode(const std::string& s);
const char* topology_mode_name(TopologyMode m);

// Synthetic fault-injection generator settings. Faults perturb the picked
// root-cause instance and flow to its descendants only, attenuated by
// propagation_decay per hop; ancestors stay clean.
struct SynthConfig {
    int num_traces = 300;
    int instances_min = 8;
    int instances_max = 15;
    std::vector<std::string> metric_names = {"cpu_usage", "memory_usage", "latency"};
    int window_len = 60;
    double fault_rate = 0.7;
    double signal_strength = 6.0;
    double propagation_decay = 0.5;
    TopologyMode topology_mode = TopologyMode::static_topology;
    std::uint64_t seed = 7;

    void validate() const;  // throws InvalidConfig naming the field
};

// Deterministic in cfg.seed; per-trace randomness derives from seed + index.
std::vector<TraceBundle> generate_synthetic(const SynthConfig& cfg);

// Writes traces/metrics/logs/labels JSONL plus manifest.json into dir.
void write_dataset(const std::vector<TraceBundle>& bundles, const std::string& dir,
                   const SplitRatios& split, std::uint64_t seed);

// Accepts a manifest path or a directory containing manifest.json.
DatasetManifest read_manifest(const std::string& path);

// Parses and validates the four JSONL files. Malformed lines raise
// ParseError with the line number; missing or mistyped fields raise
// SchemaViolation naming the field; invocation cycles raise CycleDetected.
// With require_labels=false a missing labels file yields default-normal
// labels (prediction-only datasets).
std::vector<TraceBundle> load_dataset(const DatasetManifest& manifest,
                                      bool require_labels = true);

struct SplitResult {
    std::vector<TraceBundle> train;
    std::vector<TraceBundle> val;
    std::vector<TraceBundle> test;
};

// Deterministic stratified split: anomalous share per split tracks the
// overall share. Throws InsufficientData when a nonzero ratio receives no
// traces.
SplitResult split_dataset(const std::vector<TraceBundle>& bundles, const SplitRatios& ratios,
                          std::uint64_t seed);

} // namespace chase
