#pragma once

#include <string>
#include <vector>

#include "chase/model.hpp"

namespace chase {

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_a1 = 0.0;
};

struct TrainedModel {
    ModelParams params;
    std::vector<EpochStats> history;
};

// Adam with bias correction. State is index-aligned with the tensor list
// passed to step(), which must stay stable across calls.
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<ad::Tensor*>& tensors, double lr);

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
};

// Max-logit threshold maximizing F1 of the anomalous/normal split; ties
// resolve toward the larger threshold (fewer false positives). Returns +inf
// for an empty sample.
double calibrate_threshold(const std::vector<std::pair<double, bool>>& max_logit_and_truth);

// End-to-end training: Adam on the Eq. 15 loss over the anomalous training
// traces, validation A@1 tracked per epoch, threshold calibrated on the full
// validation split afterwards. Deterministic given cfg.seed.
// Throws EmptyTrainingSet and DivergedLoss.
TrainedModel train(const std::vector<TraceBundle>& train_set,
                   const std::vector<TraceBundle>& val_set, const TrainConfig& cfg);

RankedDiagnosis predict(const ModelParams& model, const TraceBundle& bundle);

struct GradCheckResult {
    std::string group;
    double max_rel_err = 0.0;
    int checked = 0;
};

// Central-difference verification of the analytic gradients on one trace.
// Samples at least min_samples coordinates per parameter group (all of them
// for small groups), preferring coordinates that carry gradient. corrupt
// injects an offset into one analytic gradient entry (negative control).
std::vector<GradCheckResult> gradient_check(ModelParams& model, const PreparedTrace& trace,
                                            double epsilon, int min_samples = 32,
                                            std::uint64_t seed = 1234, double corrupt = 0.0);

} // namespace chase
