#include "chase/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "chase/errors.hpp"

namespace chase {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::string> tokenize(const std::string& message) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : message) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::vector<int> log_bucket_indices(const LogNode& node, int buckets) {
    std::vector<int> idx;
    for (const auto& msg : node.messages) {
        for (const auto& tok : tokenize(msg)) {
            idx.push_back(static_cast<int>(fnv1a64(tok) % static_cast<std::uint64_t>(buckets)));
        }
    }
    if (idx.empty()) idx.push_back(kNoLogBucket);
    return idx;
}

Eigen::RowVectorXd metric_summary(const MetricNode& node) {
    const auto& x = node.series;
    if (x.empty()) {
        throw EmptySeries("metric '" + node.metric_name + "' of instance '" +
                          node.instance_id + "'");
    }
    const int n = static_cast<int>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;  // population variance
    const double stdev = std::max(std::sqrt(var), 1e-8);

    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = (x[i] - mean) / stdev;

    const double z_mean = z.mean();
    const double z_std = std::sqrt((z.array() - z_mean).square().sum() / n);

    double slope = 0.0;
    if (n > 1) {
        const double t_mean = (n - 1) / 2.0;
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
            num += (i - t_mean) * (z(i) - z_mean);
            den += (i - t_mean) * (i - t_mean);
        }
        slope = num / den;
    }
    double max_abs_diff = 0.0;
    for (int i = 1; i < n; ++i) max_abs_diff = std::max(max_abs_diff, std::abs(z(i) - z(i - 1)));

    Eigen::RowVectorXd s(kMetricStats);
    s << z(n - 1), z_mean, z_std, z.minCoeff(), z.maxCoeff(), slope, max_abs_diff;
    return s;
}

Eigen::RowVectorXd positional_encoding(int k, int d, double n_base) {
    Eigen::RowVectorXd p(d);
    for (int i = 0; i < d; ++i) {
        const double arg = k / std::pow(n_base, static_cast<double>(i) / d);
        p(i) = (i % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
    return p;
}

namespace {

int category_index(const InstanceNode& node) {
    const int c = static_cast<int>(node.category);
    if (c < 0 || c >= kNumCategories) {
        throw UnknownCategory("category index " + std::to_string(c));
    }
    return c;
}

} // namespace

Eigen::RowVectorXd encode_instance(const InstanceNode& node, const EncoderParams& p) {
    Eigen::RowVectorXd pe = positional_encoding(node.order_k, p.d, p.n_base);
    if (!p.use_instance_embedding) return pe;
    return p.theta_e.value.row(category_index(node)) + pe;
}

Eigen::RowVectorXd encode_log(const LogNode& node, const EncoderParams& p) {
    const auto idx = log_bucket_indices(node, p.buckets);
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(p.d);
    for (int i : idx) out += p.token_table.value.row(i);
    return out / static_cast<double>(idx.size());
}

Eigen::RowVectorXd encode_metric(const MetricNode& node, const EncoderParams& p) {
    return metric_summary(node) * p.metric_proj.value;
}

ad::Var encode_instance(ad::Tape& tape, const InstanceNode& node, EncoderParams& p) {
    ad::Var pe = tape.constant(positional_encoding(node.order_k, p.d, p.n_base));
    if (!p.use_instance_embedding) return pe;
    return tape.add(tape.row(tape.leaf(p.theta_e), category_index(node)), pe);
}

ad::Var encode_log(ad::Tape& tape, const LogNode& node, EncoderParams& p) {
    return tape.mean_rows(tape.leaf(p.token_table), log_bucket_indices(node, p.buckets));
}

ad::Var encode_metric(ad::Tape& tape, const MetricNode& node, EncoderParams& p) {
    return tape.matmul(tape.constant(metric_summary(node)), tape.leaf(p.metric_proj));
}

} // namespace chase
