#include "chase/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "chase/encoders.hpp"
#include "chase/errors.hpp"

namespace chase {

namespace {

// 1-based rank of the true root cause, or -1 when not rankable.
int rank_of_truth(const RankedDiagnosis& d, const TraceLabel& label) {
    if (!label.is_anomalous || !label.root_cause_instance.has_value()) return -1;
    for (size_t i = 0; i < d.ranking.size(); ++i) {
        if (d.ranking[i].first == *label.root_cause_instance) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(d.ranking.size()) + 1;  // labeled but absent: never a hit
}

} // namespace

double accuracy_at_k(const std::vector<RankedDiagnosis>& diagnoses,
                     const std::vector<TraceLabel>& labels, int k) {
    if (diagnoses.empty()) throw EmptyDataset("accuracy over zero traces");
    if (diagnoses.size() != labels.size()) {
        throw DimensionMismatch("diagnoses and labels differ in length");
    }
    if (k < 1) throw InvalidConfig("k must be >= 1");
    long hits = 0, total = 0;
    for (size_t i = 0; i < diagnoses.size(); ++i) {
        const int rank = rank_of_truth(diagnoses[i], labels[i]);
        if (rank < 0) continue;
        ++total;
        if (rank <= k) ++hits;
    }
    if (total == 0) throw EmptyDataset("no anomalous traces with a root-cause label");
    return static_cast<double>(hits) / static_cast<double>(total);
}

double avg_at_5(const std::vector<RankedDiagnosis>& diagnoses,
                const std::vector<TraceLabel>& labels) {
    double sum = 0.0;
    for (int k = 1; k <= 5; ++k) sum += accuracy_at_k(diagnoses, labels, k);
    return sum / 5.0;
}

double percentage_at_n(const std::vector<std::pair<double, bool>>& flags, double fault_ts,
                       int n_minutes) {
    long in_window = 0, flagged = 0;
    const double hi = fault_ts + 60.0 * n_minutes;
    for (const auto& [ts, pred] : flags) {
        if (ts >= fault_ts && ts <= hi) {  // closed on both endpoints
            ++in_window;
            if (pred) ++flagged;
        }
    }
    if (in_window == 0) {
        throw EmptyWindow("no traces within " + std::to_string(n_minutes) + " minutes");
    }
    return static_cast<double>(flagged) / static_cast<double>(in_window);
}

int error_keyword_count(const std::vector<std::string>& messages) {
    static const std::vector<std::string> keywords = {"error",   "fail",      "failed",
                                                      "failure", "exception", "fatal"};
    int count = 0;
    for (const auto& msg : messages) {
        for (const auto& tok : tokenize(msg)) {
            if (std::find(keywords.begin(), keywords.end(), tok) != keywords.end()) ++count;
        }
    }
    return count;
}

namespace {

// Largest |z| of the window under a median/MAD z-score. The robust scale
// keeps a short injected spike from inflating its own denominator.
double robust_peak(const std::vector<double>& series) {
    if (series.empty()) return 0.0;
    std::vector<double> sorted = series;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    const double median =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    std::vector<double> dev(n);
    for (size_t i = 0; i < n; ++i) dev[i] = std::abs(series[i] - median);
    std::sort(dev.begin(), dev.end());
    const double mad = n % 2 == 1 ? dev[n / 2] : 0.5 * (dev[n / 2 - 1] + dev[n / 2]);
    const double scale = std::max(1.4826 * mad, 1e-8);
    double peak = 0.0;
    for (double v : series) peak = std::max(peak, std::abs(v - median) / scale);
    return peak;
}

} // namespace

RankedDiagnosis baseline_rank(const TraceBundle& bundle) {
    struct Entry {
        std::string id;
        double z = 0.0;
        int errors = 0;
        double ts = 0.0;
    };
    std::vector<Entry> entries;
    for (const auto& inst : bundle.instances) {
        if (std::any_of(entries.begin(), entries.end(),
                        [&](const Entry& e) { return e.id == inst.id; })) {
            continue;  // collapsed duplicate invocation
        }
        Entry e;
        e.id = inst.id;
        e.ts = inst.start_ts;
        for (const auto& m : bundle.metrics) {
            if (m.instance_id == inst.id) e.z = std::max(e.z, robust_peak(m.values));
        }
        for (const auto& l : bundle.logs) {
            if (l.instance_id == inst.id) e.errors += error_keyword_count(l.messages);
        }
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.z != b.z) return a.z > b.z;
        if (a.errors != b.errors) return a.errors > b.errors;
        return a.id < b.id;
    });

    RankedDiagnosis d;
    d.trace_id = bundle.trace_id;
    d.timestamp = entries.empty() ? 0.0 : entries[0].ts;
    for (const auto& e : entries) {
        d.timestamp = std::min(d.timestamp, e.ts);
        d.ranking.emplace_back(e.id, e.z);
    }
    d.max_logit = entries.empty() ? 0.0 : d.ranking[0].second;
    return d;
}

EvalReport evaluate(const std::vector<RankedDiagnosis>& diagnoses,
                    const std::vector<TraceLabel>& labels) {
    EvalReport report;
    report.dataset_size = diagnoses.size();
    for (int k = 1; k <= 5; ++k) report.a_at_k[k] = accuracy_at_k(diagnoses, labels, k);
    report.avg_at_5 = avg_at_5(diagnoses, labels);

    double fault_ts = std::numeric_limits<double>::infinity();
    for (const auto& l : labels) {
        if (l.is_anomalous && l.fault_ts.has_value()) fault_ts = std::min(fault_ts, *l.fault_ts);
    }
    if (std::isfinite(fault_ts)) {
        std::vector<std::pair<double, bool>> flags;
        for (const auto& d : diagnoses) flags.emplace_back(d.timestamp, d.is_anomalous);
        for (int n : {1, 3, 5}) {
            try {
                report.percentage_at_n[n] = percentage_at_n(flags, fault_ts, n);
            } catch (const EmptyWindow&) {
                // window holds no traces; row omitted
            }
        }
    }

    for (size_t i = 0; i < diagnoses.size(); ++i) {
        PerTraceRecord r;
        r.trace_id = diagnoses[i].trace_id;
        r.truth_anomalous = labels[i].is_anomalous;
        r.rank_of_truth = rank_of_truth(diagnoses[i], labels[i]);
        r.flagged = diagnoses[i].is_anomalous;
        r.timestamp = diagnoses[i].timestamp;
        if (r.rank_of_truth > 0) ++report.labeled_anomalous;
        report.records.push_back(std::move(r));
    }
    return report;
}

} // namespace chase
