#include "chase/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "chase/errors.hpp"

using nlohmann::json;

namespace chase {

namespace {

json config_to_json(const TrainConfig& c) {
    json j;
    j["attn_layers"] = c.layers_attn;
    j["heads"] = c.heads;
    j["dim"] = c.dim;
    j["gamma"] = c.gamma;
    j["leaky_slope"] = c.leaky_slope;
    j["hyper_layers"] = c.hyper_layers;
    j["lr"] = c.lr;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["ablation"] = ablation_name(c.ablation);
    j["n_base"] = c.n_base;
    j["token_buckets"] = c.token_buckets;
    return j;
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.layers_attn = j.at("attn_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.dim = j.at("dim").get<int>();
    c.gamma = j.at("gamma").get<double>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.hyper_layers = j.at("hyper_layers").get<int>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ablation = parse_ablation(j.at("ablation").get<std::string>());
    c.n_base = j.at("n_base").get<double>();
    c.token_buckets = j.at("token_buckets").get<int>();
    return c;
}

} // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
    json j;
    j["format"] = kCheckpointFormat;
    j["config"] = config_to_json(model.params.config);
    j["metric_names"] = model.params.metric_names;
    // JSON has no infinity literal; the uncalibrated threshold round-trips
    // through null.
    const double thr = model.params.anomaly_threshold;
    j["anomaly_threshold"] = std::isfinite(thr) ? json(thr) : json(nullptr);

    json tensors = json::object();
    for (const ad::Tensor* t : model.params.tensors()) {
        json jt;
        jt["rows"] = t->value.rows();
        jt["cols"] = t->value.cols();
        std::vector<double> data(t->value.size());
        for (Eigen::Index r = 0; r < t->value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t->value.cols(); ++c) {
                data[static_cast<size_t>(r * t->value.cols() + c)] = t->value(r, c);
            }
        }
        jt["data"] = std::move(data);
        tensors[t->name] = std::move(jt);
    }
    j["tensors"] = std::move(tensors);

    json history = json::array();
    for (const auto& h : model.history) {
        history.push_back(
            {{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_a1", h.val_a1}});
    }
    j["history"] = std::move(history);

    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << j.dump() << '\n';
}

TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("unparsable checkpoint: ") + e.what());
    }
    if (!j.contains("format") || j["format"] != kCheckpointFormat) {
        throw CheckpointError("format mismatch: expected '" + std::string(kCheckpointFormat) +
                              "', got '" + j.value("format", "<missing>") + "'");
    }

    TrainedModel model;
    TrainConfig cfg;
    try {
        cfg = config_from_json(j.at("config"));
        std::vector<std::string> names = j.at("metric_names").get<std::vector<std::string>>();
        std::mt19937_64 rng(cfg.seed);
        model.params = ModelParams::init(cfg, std::move(names), rng);

        const json& tensors = j.at("tensors");
        size_t seen = 0;
        for (ad::Tensor* t : model.params.tensors()) {
            if (!tensors.contains(t->name)) {
                throw CheckpointError("missing tensor '" + t->name + "'");
            }
            const json& jt = tensors[t->name];
            const Eigen::Index rows = jt.at("rows").get<Eigen::Index>();
            const Eigen::Index cols = jt.at("cols").get<Eigen::Index>();
            if (rows != t->value.rows() || cols != t->value.cols()) {
                throw CheckpointError("shape mismatch for tensor '" + t->name + "'");
            }
            const auto data = jt.at("data").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
                throw CheckpointError("data length mismatch for tensor '" + t->name + "'");
            }
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    t->value(r, c) = data[static_cast<size_t>(r * cols + c)];
                }
            }
            ++seen;
        }
        if (tensors.size() != seen) {
            throw CheckpointError("checkpoint holds " + std::to_string(tensors.size()) +
                                  " tensors, model expects " + std::to_string(seen));
        }

        const json& thr = j.at("anomaly_threshold");
        model.params.anomaly_threshold =
            thr.is_null() ? std::numeric_limits<double>::infinity() : thr.get<double>();

        for (const auto& h : j.value("history", json::array())) {
            EpochStats s;
            s.epoch = h.at("epoch").get<int>();
            s.train_loss = h.at("train_loss").get<double>();
            s.val_a1 = h.at("val_a1").get<double>();
            model.history.push_back(s);
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
    return model;
}

} // namespace chase
