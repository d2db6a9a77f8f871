#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chase/tape.hpp"
#include "chase/types.hpp"

namespace chase {

// Number of summary statistics the metric encoder extracts.
constexpr int kMetricStats = 7;
// Token bucket 0 is reserved for instances that logged nothing.
constexpr int kNoLogBucket = 0;

// Learnable encoder parameters. All three encoders emit 1 x d row vectors.
struct EncoderParams {
    ad::Tensor theta_e;      // [kNumCategories x d] category projection
    ad::Tensor token_table;  // [buckets x d] hashed token embeddings
    ad::Tensor metric_proj;  // [kMetricStats x d] summary-statistics projection
    int d = 128;
    double n_base = 20000.0;
    int buckets = 4096;
    // V1 ablation: drop the learnable category embedding, keep the
    // positional part.
    bool use_instance_embedding = true;
};

// FNV-1a 64-bit over the token's UTF-8 bytes; fixed so embeddings are
// reproducible across platforms.
std::uint64_t fnv1a64(std::string_view s);

// Lowercases and splits on anything that is not an ASCII letter or digit.
std::vector<std::string> tokenize(const std::string& message);

// Bucket indices for every token across all messages, in order, duplicates
// kept. An instance with no log text maps to {kNoLogBucket}.
std::vector<int> log_bucket_indices(const LogNode& node, int buckets);

// Summary statistics of the z-normalized window (population std, clamped to
// >= 1e-8): [last, mean, std, min, max, linear-trend slope, max |first
// difference|]. Invariant under affine rescaling a*x+b with a > 0.
Eigen::RowVectorXd metric_summary(const MetricNode& node);

// P(k, i) = sin(k / n_base^(i/d)) for even i, cos(...) for odd i.
Eigen::RowVectorXd positional_encoding(int k, int d, double n_base);

Eigen::RowVectorXd encode_instance(const InstanceNode& node, const EncoderParams& p);
Eigen::RowVectorXd encode_log(const LogNode& node, const EncoderParams& p);
Eigen::RowVectorXd encode_metric(const MetricNode& node, const EncoderParams& p);

// Tape-recorded variants used by training; values match the plain overloads.
ad::Var encode_instance(ad::Tape& tape, const InstanceNode& node, EncoderParams& p);
ad::Var encode_log(ad::Tape& tape, const LogNode& node, EncoderParams& p);
ad::Var encode_metric(ad::Tape& tape, const MetricNode& node, EncoderParams& p);

} // namespace chase
