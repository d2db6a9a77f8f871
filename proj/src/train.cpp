#include "chase/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "chase/errors.hpp"

namespace chase {

void Adam::step(const std::vector<ad::Tensor*>& tensors, double lr) {
    if (m_.empty()) {
        m_.resize(tensors.size());
        v_.resize(tensors.size());
        for (size_t i = 0; i < tensors.size(); ++i) {
            m_[i] = Eigen::MatrixXd::Zero(tensors[i]->value.rows(), tensors[i]->value.cols());
            v_[i] = m_[i];
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < tensors.size(); ++i) {
        const auto& g = tensors[i]->grad;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        tensors[i]->value -=
            (lr * (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + eps_)).matrix();
    }
}

double calibrate_threshold(const std::vector<std::pair<double, bool>>& samples) {
    if (samples.empty()) return std::numeric_limits<double>::infinity();
    std::vector<double> candidates;
    double lo = samples[0].first;
    for (const auto& [v, truth] : samples) {
        candidates.push_back(v);
        lo = std::min(lo, v);
    }
    candidates.push_back(lo - 1.0);  // flag everything
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double best_f1 = -1.0;
    double best_t = std::numeric_limits<double>::infinity();
    for (double t : candidates) {
        long tp = 0, fp = 0, fn = 0;
        for (const auto& [v, truth] : samples) {
            const bool flagged = v > t;
            if (flagged && truth) ++tp;
            if (flagged && !truth) ++fp;
            if (!flagged && truth) ++fn;
        }
        const long denom = 2 * tp + fp + fn;
        const double f1 = denom == 0 ? 0.0 : 2.0 * tp / static_cast<double>(denom);
        if (f1 > best_f1 || (f1 == best_f1 && t > best_t)) {
            best_f1 = f1;
            best_t = t;
        }
    }
    return best_t;
}

namespace {

void check_finite_grads(ModelParams& model) {
    for (ad::Tensor* t : model.tensors()) {
        if (!t->grad.allFinite()) {
            throw NonFiniteGradient("parameter group '" + t->name + "'");
        }
    }
}

double top1_accuracy(const std::vector<PreparedTrace>& traces, const ModelParams& model) {
    long hits = 0, total = 0;
    for (const auto& t : traces) {
        if (t.root_index < 0) continue;
        ++total;
        const RankedDiagnosis d = diagnose(t, model);
        if (!d.ranking.empty() && d.ranking[0].first == *t.label.root_cause_instance) ++hits;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace

TrainedModel train(const std::vector<TraceBundle>& train_set,
                   const std::vector<TraceBundle>& val_set, const TrainConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);

    // Metric parameter groups come from the training universe.
    std::set<std::string> names;
    for (const auto& b : train_set) {
        for (const auto& m : b.metrics) names.insert(m.metric_name);
    }
    TrainedModel out;
    out.params = ModelParams::init(cfg, {names.begin(), names.end()}, rng);
    ModelParams& model = out.params;

    std::vector<PreparedTrace> train_traces;
    train_traces.reserve(train_set.size());
    for (const auto& b : train_set) train_traces.push_back(prepare_trace(b, cfg));
    std::vector<PreparedTrace> val_traces;
    val_traces.reserve(val_set.size());
    for (const auto& b : val_set) val_traces.push_back(prepare_trace(b, cfg));

    // Only anomalous traces carry the one-hot root-cause target of the loss;
    // normal traces enter threshold calibration below.
    std::vector<int> anomalous;
    for (size_t i = 0; i < train_traces.size(); ++i) {
        if (train_traces[i].root_index >= 0) anomalous.push_back(static_cast<int>(i));
    }
    if (anomalous.empty()) {
        throw EmptyTrainingSet("no anomalous traces in the training split");
    }

    Adam adam;
    auto tensors = model.tensors();
    ad::Tape tape;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(anomalous.begin(), anomalous.end(), rng);
        double epoch_loss = 0.0;
        long counted = 0;
        for (size_t at = 0; at < anomalous.size(); at += cfg.batch_size) {
            const size_t end = std::min(at + cfg.batch_size, anomalous.size());
            tape.reset();
            LeafCache leaves;
            std::vector<ad::Var> losses;
            for (size_t i = at; i < end; ++i) {
                const PreparedTrace& t = train_traces[anomalous[i]];
                ad::Var logits = model_logits_taped(tape, t, model, leaves);
                losses.push_back(tape.cross_entropy_pick(logits, t.root_index));
            }
            ad::Var batch_loss = tape.mean_scalars(losses);
            const double loss_value = tape.value(batch_loss)(0, 0);
            if (!std::isfinite(loss_value)) {
                throw DivergedLoss("epoch " + std::to_string(epoch));
            }
            epoch_loss += loss_value * static_cast<double>(end - at);
            counted += static_cast<long>(end - at);

            model.zero_grads();
            tape.backward(batch_loss);
            check_finite_grads(model);
            adam.step(tensors, cfg.lr);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(counted);
        stats.val_a1 = top1_accuracy(val_traces, model);
        out.history.push_back(stats);
    }

    std::vector<std::pair<double, bool>> calib;
    for (const auto& t : val_traces) {
        const Eigen::VectorXd logits = model_logits(t, model);
        calib.emplace_back(logits.maxCoeff(), t.label.is_anomalous);
    }
    model.anomaly_threshold = calibrate_threshold(calib);
    return out;
}

RankedDiagnosis predict(const ModelParams& model, const TraceBundle& bundle) {
    return diagnose(prepare_trace(bundle, model.config), model);
}

std::vector<GradCheckResult> gradient_check(ModelParams& model, const PreparedTrace& trace,
                                            double epsilon, int min_samples,
                                            std::uint64_t seed, double corrupt) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw InvalidEpsilon("epsilon must be positive and finite");
    }
    if (trace.root_index < 0) {
        throw MissingLabel("gradient check needs an anomalous trace");
    }

    // Analytic gradients once.
    ad::Tape tape;
    LeafCache leaves;
    model.zero_grads();
    ad::Var loss = tape.cross_entropy_pick(model_logits_taped(tape, trace, model, leaves),
                                           trace.root_index);
    tape.backward(loss);
    check_finite_grads(model);

    auto plain_loss = [&]() {
        const Eigen::VectorXd logits = model_logits(trace, model);
        const double mx = logits.maxCoeff();
        return std::log((logits.array() - mx).exp().sum()) + mx - logits(trace.root_index);
    };

    std::mt19937_64 rng(seed);
    std::vector<GradCheckResult> results;
    bool corrupted = false;
    for (ad::Tensor* t : model.tensors()) {
        const Eigen::Index total = t->size();
        // All coordinates for small tensors; otherwise a random sample plus
        // the coordinates with the largest analytic gradient so the check
        // exercises the active path, not just silent entries.
        std::set<Eigen::Index> picks;
        if (total <= 2 * min_samples) {
            for (Eigen::Index i = 0; i < total; ++i) picks.insert(i);
        } else {
            std::uniform_int_distribution<Eigen::Index> dist(0, total - 1);
            while (static_cast<int>(picks.size()) < min_samples) picks.insert(dist(rng));
            std::vector<Eigen::Index> by_grad(total);
            std::iota(by_grad.begin(), by_grad.end(), 0);
            std::partial_sort(by_grad.begin(), by_grad.begin() + min_samples, by_grad.end(),
                              [&](Eigen::Index a, Eigen::Index b) {
                                  return std::abs(t->grad(a)) > std::abs(t->grad(b));
                              });
            picks.insert(by_grad.begin(), by_grad.begin() + min_samples);
        }

        GradCheckResult r;
        r.group = t->name;
        for (Eigen::Index i : picks) {
            const double saved = t->value(i);
            t->value(i) = saved + epsilon;
            const double up = plain_loss();
            t->value(i) = saved - epsilon;
            const double down = plain_loss();
            t->value(i) = saved;
            const double fd = (up - down) / (2.0 * epsilon);
            double an = t->grad(i);
            if (corrupt != 0.0 && !corrupted) {
                an += corrupt;
                corrupted = true;
            }
            const double scale = std::max(std::abs(fd), std::abs(an));
            const double err = scale < 1e-6 ? 0.0 : std::abs(fd - an) / scale;
            r.max_rel_err = std::max(r.max_rel_err, err);
            ++r.checked;
        }
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace chase
