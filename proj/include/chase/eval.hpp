#pragma once

#include <map>
#include <string>
#include <vector>

#include "chase/types.hpp"

namespace chase {

struct PerTraceRecord {
    std::string trace_id;
    bool truth_anomalous = false;
    int rank_of_truth = -1;  // 1-based; -1 when no root-cause label
    bool flagged = false;
    double timestamp = 0.0;
};

struct EvalReport {
    std::map<int, double> a_at_k;           // k = 1..5
    double avg_at_5 = 0.0;
    std::map<int, double> percentage_at_n;  // n minutes; empty without fault_ts
    std::size_t dataset_size = 0;
    std::size_t labeled_anomalous = 0;
    std::vector<PerTraceRecord> records;
};

// Fraction of anomalous traces whose true root cause appears in the top k of
// the ranking. Traces without a root-cause label stay out of the
// denominator. diagnoses and labels are parallel.
double accuracy_at_k(const std::vector<RankedDiagnosis>& diagnoses,
                     const std::vector<TraceLabel>& labels, int k);

double avg_at_5(const std::vector<RankedDiagnosis>& diagnoses,
                const std::vector<TraceLabel>& labels);

// Share of traces inside the closed window [fault_ts, fault_ts + n minutes]
// that were flagged anomalous. flags pairs (trace timestamp, prediction).
// Throws EmptyWindow when no trace falls into the window.
double percentage_at_n(const std::vector<std::pair<double, bool>>& flags, double fault_ts,
                       int n_minutes);

// Training-free sanity ranking: instances ordered by the largest robust
// z-score across their metric windows, log error-keyword count as the tie
// break, instance id as the final tie break.
RankedDiagnosis baseline_rank(const TraceBundle& bundle);

// Tokens counted as error keywords by the baseline tie break.
int error_keyword_count(const std::vector<std::string>& messages);

// Assembles the full report; Percentage@{1,3,5} is filled when at least one
// anomalous label carries a fault_ts (window anchored at the earliest one).
EvalReport evaluate(const std::vector<RankedDiagnosis>& diagnoses,
                    const std::vector<TraceLabel>& labels);

} // namespace chase
