#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chase/checkpoint.hpp"
#include "chase/data_io.hpp"
#include "chase/errors.hpp"
#include "chase/eval.hpp"
#include "chase/model.hpp"
#include "chase/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stable exit-code contract.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitCheckpoint = 5;
constexpr int kExitGradcheck = 6;

void apply_config_entry(chase::TrainConfig& cfg, const std::string& key,
                        const std::string& value) {
    auto as_int = [&](const char* name) {
        try {
            size_t pos = 0;
            const int v = std::stoi(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw chase::InvalidConfig(std::string(name) + " expects an integer, got '" +
                                       value + "'");
        }
    };
    auto as_double = [&](const char* name) {
        try {
            size_t pos = 0;
            const double v = std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw chase::InvalidConfig(std::string(name) + " expects a number, got '" + value +
                                       "'");
        }
    };

    if (key == "attn_layers") cfg.layers_attn = as_int("attn_layers");
    else if (key == "heads") cfg.heads = as_int("heads");
    else if (key == "dim") cfg.dim = as_int("dim");
    else if (key == "gamma") cfg.gamma = as_double("gamma");
    else if (key == "leaky_slope") cfg.leaky_slope = as_double("leaky_slope");
    else if (key == "hyper_layers") cfg.hyper_layers = as_int("hyper_layers");
    else if (key == "n_base") cfg.n_base = as_double("n_base");
    else if (key == "lr") cfg.lr = as_double("lr");
    else if (key == "epochs") cfg.epochs = as_int("epochs");
    else if (key == "batch_size") cfg.batch_size = as_int("batch_size");
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_int("seed"));
    else if (key == "token_buckets") cfg.token_buckets = as_int("token_buckets");
    else if (key == "ablation") cfg.ablation = chase::parse_ablation(value);
    else throw chase::InvalidConfig("unknown config key '" + key + "'");
}

void load_config_file(chase::TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw chase::InvalidConfig("cannot open config file '" + path + "'");
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const auto end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw chase::InvalidConfig("config line " + std::to_string(line_no) +
                                       " is not key=value: '" + line + "'");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void apply_set_overrides(chase::TrainConfig& cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw chase::InvalidConfig("--set expects key=value, got '" + kv + "'");
        }
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
}

void apply_env_seed(chase::TrainConfig& cfg) {
    if (const char* env = std::getenv("CHASE_SEED")) {
        apply_config_entry(cfg, "seed", env);
    }
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct GenerateOpts {
    int traces = 300;
    int instances_min = 8;
    int instances_max = 15;
    std::string metrics = "cpu_usage,memory_usage,latency";
    int window = 60;
    double fault_rate = 0.7;
    double signal = 6.0;
    double decay = 0.5;
    std::string mode = "static";
    std::uint64_t seed = 7;
    double train_frac = 0.6, val_frac = 0.2, test_frac = 0.2;
    std::string out_dir = "data";
};

int run_generate(const GenerateOpts& o) {
    if (o.traces < 1) {
        throw chase::InvalidConfig("traces must be positive, got " + std::to_string(o.traces));
    }
    chase::SynthConfig cfg;
    cfg.num_traces = o.traces;
    cfg.instances_min = o.instances_min;
    cfg.instances_max = o.instances_max;
    cfg.metric_names = split_csv(o.metrics);
    cfg.window_len = o.window;
    cfg.fault_rate = o.fault_rate;
    cfg.signal_strength = o.signal;
    cfg.propagation_decay = o.decay;
    cfg.topology_mode = chase::parse_topology_mode(o.mode);
    cfg.seed = o.seed;
    cfg.validate();

    chase::SplitRatios split{o.train_frac, o.val_frac, o.test_frac};
    split.validate();

    const auto bundles = chase::generate_synthetic(cfg);
    chase::write_dataset(bundles, o.out_dir, split, cfg.seed);

    long anomalous = 0, instances = 0;
    for (const auto& b : bundles) {
        if (b.label.is_anomalous) ++anomalous;
        instances += static_cast<long>(b.instances.size());
    }
    std::cout << "wrote " << bundles.size() << " traces (" << anomalous << " anomalous, "
              << instances << " instances, mode " << o.mode << ") to " << o.out_dir << "\n";
    std::cout << "files: traces.jsonl metrics.jsonl logs.jsonl labels.jsonl manifest.json\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string data = "data";
    std::string out_dir = "out";
    std::string config_file;
    std::vector<std::string> sets;
};

int run_train(const TrainOpts& o, const chase::TrainConfig& cfg) {
    const auto manifest = chase::read_manifest(o.data);
    const auto bundles = chase::load_dataset(manifest);
    const auto split = chase::split_dataset(bundles, manifest.split, manifest.seed);
    std::cout << "dataset: " << bundles.size() << " traces -> " << split.train.size()
              << " train / " << split.val.size() << " val / " << split.test.size()
              << " test\n";

    const chase::TrainedModel model = chase::train(split.train, split.val, cfg);

    fs::create_directories(o.out_dir);
    const std::string ckpt_path = (fs::path(o.out_dir) / "checkpoint.json").string();
    chase::save_checkpoint(model, ckpt_path);

    std::ofstream hist((fs::path(o.out_dir) / "history.csv"));
    hist << "epoch,train_loss,val_a1\n";
    for (const auto& h : model.history) {
        hist << h.epoch << ',' << std::setprecision(17) << h.train_loss << ',' << h.val_a1
             << '\n';
    }

    std::cout << "model: " << model.params.parameter_count() << " parameters, ablation "
              << chase::ablation_name(cfg.ablation) << "\n";
    if (!model.history.empty()) {
        const auto& last = model.history.back();
        std::cout << "final loss " << std::setprecision(17) << last.train_loss << ", val A@1 "
                  << std::setprecision(6) << last.val_a1 << "\n";
    }
    std::cout << "threshold " << model.params.anomaly_threshold << "\n";
    std::cout << "checkpoint " << ckpt_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalOpts {
    std::string checkpoint = "out/checkpoint.json";
    std::string data = "data";
    std::string split = "test";
    std::string out_dir = "out";
    bool dump_weights = false;
    bool dump_hypergraph = false;
    bool baseline = false;
};

const std::vector<chase::TraceBundle>& pick_split(const chase::SplitResult& s,
                                                  const std::string& name,
                                                  std::vector<chase::TraceBundle>& all_storage,
                                                  const std::vector<chase::TraceBundle>& all) {
    if (name == "train") return s.train;
    if (name == "val") return s.val;
    if (name == "test") return s.test;
    if (name == "all") {
        all_storage = all;
        return all_storage;
    }
    throw chase::InvalidConfig("--split must be train|val|test|all, got '" + name + "'");
}

int run_eval(const EvalOpts& o) {
    chase::TrainedModel model;
    if (!o.baseline) model = chase::load_checkpoint(o.checkpoint);

    const auto manifest = chase::read_manifest(o.data);
    const auto bundles = chase::load_dataset(manifest);
    const auto split = chase::split_dataset(bundles, manifest.split, manifest.seed);
    std::vector<chase::TraceBundle> all_storage;
    const auto& selected = pick_split(split, o.split, all_storage, bundles);
    if (selected.empty()) throw chase::EmptyDataset("split '" + o.split + "' is empty");

    fs::create_directories(o.out_dir);
    std::ofstream weights_csv;
    if (o.dump_weights) {
        weights_csv.open(fs::path(o.out_dir) / "weights.csv");
        weights_csv << "trace_id,layer,head,instance_id,neighbor_id,weight\n";
    }
    std::ofstream hyper_csv;
    if (o.dump_hypergraph) {
        hyper_csv.open(fs::path(o.out_dir) / "hyperedges.csv");
        hyper_csv << "trace_id,node_index,hyperedge_index\n";
    }

    std::vector<chase::RankedDiagnosis> diagnoses;
    std::vector<chase::TraceLabel> labels;
    for (const auto& b : selected) {
        if (o.baseline) {
            diagnoses.push_back(chase::baseline_rank(b));
        } else {
            const auto prepared = chase::prepare_trace(b, model.params.config);
            if (o.dump_weights) {
                std::vector<chase::AttentionRecord> records;
                chase::model_logits(prepared, model.params, &records);
                for (const auto& r : records) {
                    weights_csv << b.trace_id << ',' << r.layer << ',' << r.head << ','
                                << r.instance_id << ',' << r.neighbor_id << ','
                                << std::setprecision(17) << r.weight << '\n';
                }
            }
            if (o.dump_hypergraph) {
                for (size_t e = 0; e < prepared.incidence.columns.size(); ++e) {
                    for (int v : prepared.incidence.columns[e]) {
                        hyper_csv << b.trace_id << ',' << v << ',' << e << '\n';
                    }
                }
            }
            diagnoses.push_back(chase::diagnose(prepared, model.params));
        }
        labels.push_back(b.label);
    }

    const chase::EvalReport report = chase::evaluate(diagnoses, labels);

    std::cout << "evaluated " << report.dataset_size << " traces (" << report.labeled_anomalous
              << " labeled anomalous) from split '" << o.split << "'\n";
    std::cout << std::left << std::setw(16) << "metric" << "value\n";
    std::ofstream report_out(fs::path(o.out_dir) / "report.jsonl");
    auto emit = [&](const std::string& name, double value) {
        std::cout << std::left << std::setw(16) << name << std::setprecision(6) << value
                  << "\n";
        report_out << json{{"metric", name}, {"value", value}}.dump() << '\n';
    };
    for (int k = 1; k <= 5; ++k) emit("A@" + std::to_string(k), report.a_at_k.at(k));
    emit("Avg@5", report.avg_at_5);
    if (report.percentage_at_n.empty()) {
        std::cout << "(Percentage@n omitted: labels carry no fault_ts)\n";
    } else {
        for (const auto& [n, v] : report.percentage_at_n) {
            emit("Percentage@" + std::to_string(n), v);
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictOpts {
    std::string checkpoint = "out/checkpoint.json";
    std::string data = "data";
    std::string out_dir = "out";
};

int run_predict(const PredictOpts& o) {
    const chase::TrainedModel model = chase::load_checkpoint(o.checkpoint);
    const auto manifest = chase::read_manifest(o.data);
    const auto bundles = chase::load_dataset(manifest, /*require_labels=*/false);

    fs::create_directories(o.out_dir);
    std::ofstream out(fs::path(o.out_dir) / "predictions.jsonl");
    for (const auto& b : bundles) {
        const auto d = chase::predict(model.params, b);
        json j;
        j["trace_id"] = d.trace_id;
        j["is_anomalous"] = d.is_anomalous;
        j["ranking"] = json::array();
        for (const auto& [id, score] : d.ranking) {
            j["ranking"].push_back({{"instance", id}, {"score", score}});
        }
        out << j.dump() << '\n';
    }
    std::cout << "wrote predictions for " << bundles.size() << " traces\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckOpts {
    double eps = 1e-5;
    std::uint64_t seed = 1234;
    int instances = 5;
    double corrupt = 0.0;  // test hook: offset added to one analytic gradient
};

int run_gradcheck(const GradcheckOpts& o) {
    if (!(o.eps > 0.0)) {
        throw chase::InvalidConfig("--eps must be positive, got " + std::to_string(o.eps));
    }
    // One random anomalous trace; one of its metric names is withheld from
    // the model so the unknown-metric fallback group carries gradient too.
    chase::SynthConfig synth;
    synth.num_traces = 1;
    synth.instances_min = o.instances;
    synth.instances_max = o.instances;
    synth.metric_names = {"cpu_usage", "memory_usage"};
    synth.window_len = 32;
    synth.fault_rate = 1.0;
    synth.seed = o.seed;
    const auto bundles = chase::generate_synthetic(synth);

    chase::TrainConfig cfg;
    cfg.seed = o.seed;
    std::mt19937_64 rng(cfg.seed);
    chase::ModelParams model = chase::ModelParams::init(cfg, {"cpu_usage"}, rng);
    const auto prepared = chase::prepare_trace(bundles[0], cfg);

    std::cout << "gradcheck: eps " << o.eps << ", " << o.instances
              << "-instance trace, seed " << o.seed << "\n";
    const auto results =
        chase::gradient_check(model, prepared, o.eps, 32, o.seed, o.corrupt);

    constexpr double kTol = 1e-3;
    std::string worst_group;
    double worst = 0.0;
    for (const auto& r : results) {
        const bool ok = r.max_rel_err < kTol;
        std::cout << std::left << std::setw(34) << r.group << std::scientific
                  << std::setprecision(3) << r.max_rel_err << (ok ? "  ok" : "  FAIL") << "\n";
        std::cout.unsetf(std::ios::scientific);
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_group = r.group;
        }
    }
    if (worst >= kTol) {
        std::cout << "gradcheck FAILED: group '" << worst_group << "' max relative error "
                  << std::scientific << worst << "\n";
        return kExitGradcheck;
    }
    std::cout << "gradcheck passed: max relative error " << std::scientific << worst << " ('"
              << worst_group << "')\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"root-cause localization for microservice traces"};
    app.require_subcommand(1);

    GenerateOpts gen;
    auto* sub_gen = app.add_subcommand("generate", "write a synthetic fault-injected dataset");
    sub_gen->add_option("--traces", gen.traces, "number of traces");
    sub_gen->add_option("--instances-min", gen.instances_min, "minimum instances per trace");
    sub_gen->add_option("--instances-max", gen.instances_max, "maximum instances per trace");
    sub_gen->add_option("--metrics", gen.metrics, "comma-separated metric names");
    sub_gen->add_option("--window", gen.window, "metric window length (samples)");
    sub_gen->add_option("--fault-rate", gen.fault_rate, "fraction of anomalous traces");
    sub_gen->add_option("--signal", gen.signal, "injected deviation in sigmas");
    sub_gen->add_option("--decay", gen.decay, "per-hop attenuation toward descendants");
    sub_gen->add_option("--mode", gen.mode, "static|dynamic topology");
    sub_gen->add_option("--seed", gen.seed, "generator seed");
    sub_gen->add_option("--train-frac", gen.train_frac, "train split ratio");
    sub_gen->add_option("--val-frac", gen.val_frac, "validation split ratio");
    sub_gen->add_option("--test-frac", gen.test_frac, "test split ratio");
    sub_gen->add_option("-o,--out", gen.out_dir, "output directory");

    TrainOpts tr;
    chase::TrainConfig cli_cfg;  // typed flag targets
    auto* sub_tr = app.add_subcommand("train", "train a localizer on a dataset");
    sub_tr->add_option("--data", tr.data, "dataset directory or manifest path");
    sub_tr->add_option("-o,--out", tr.out_dir, "output directory");
    sub_tr->add_option("--config", tr.config_file, "flat key=value config file");
    sub_tr->add_option("--set", tr.sets, "config override key=value (repeatable)");
    auto* f_attn = sub_tr->add_option("--attn-layers", cli_cfg.layers_attn);
    auto* f_heads = sub_tr->add_option("--heads", cli_cfg.heads);
    auto* f_dim = sub_tr->add_option("--dim", cli_cfg.dim);
    auto* f_gamma = sub_tr->add_option("--gamma", cli_cfg.gamma);
    auto* f_slope = sub_tr->add_option("--leaky-slope", cli_cfg.leaky_slope);
    auto* f_hyper = sub_tr->add_option("--hyper-layers", cli_cfg.hyper_layers);
    auto* f_nbase = sub_tr->add_option("--n-base", cli_cfg.n_base);
    auto* f_lr = sub_tr->add_option("--lr", cli_cfg.lr);
    auto* f_epochs = sub_tr->add_option("--epochs", cli_cfg.epochs);
    auto* f_batch = sub_tr->add_option("--batch-size", cli_cfg.batch_size);
    auto* f_seed = sub_tr->add_option("--seed", cli_cfg.seed);
    std::string ablation_str;
    auto* f_abl = sub_tr->add_option("--ablation", ablation_str, "none|V1|V2|V3");

    EvalOpts ev;
    auto* sub_ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    sub_ev->add_option("--checkpoint", ev.checkpoint, "checkpoint path");
    sub_ev->add_option("--data", ev.data, "dataset directory or manifest path");
    sub_ev->add_option("--split", ev.split, "train|val|test|all");
    sub_ev->add_option("-o,--out", ev.out_dir, "output directory");
    sub_ev->add_flag("--dump-weights", ev.dump_weights, "write attention weights CSV");
    sub_ev->add_flag("--dump-hypergraph", ev.dump_hypergraph, "write incidence CSV");
    sub_ev->add_flag("--baseline", ev.baseline, "rank with the training-free heuristic");

    PredictOpts pr;
    auto* sub_pr = app.add_subcommand("predict", "rank root causes for unlabeled traces");
    sub_pr->add_option("--checkpoint", pr.checkpoint, "checkpoint path");
    sub_pr->add_option("--data", pr.data, "dataset directory or manifest path");
    sub_pr->add_option("-o,--out", pr.out_dir, "output directory");

    GradcheckOpts gc;
    auto* sub_gc = app.add_subcommand("gradcheck", "verify gradients by central differences");
    sub_gc->add_option("--eps", gc.eps, "finite-difference step");
    sub_gc->add_option("--seed", gc.seed, "trace/model seed");
    sub_gc->add_option("--instances", gc.instances, "trace size");
    sub_gc->add_option("--corrupt", gc.corrupt)->group("");  // negative-control hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (app.got_subcommand(sub_gen)) return run_generate(gen);
        if (app.got_subcommand(sub_tr)) {
            chase::TrainConfig cfg;  // defaults < file < --set < flags < env
            if (!tr.config_file.empty()) load_config_file(cfg, tr.config_file);
            apply_set_overrides(cfg, tr.sets);
            if (f_attn->count()) cfg.layers_attn = cli_cfg.layers_attn;
            if (f_heads->count()) cfg.heads = cli_cfg.heads;
            if (f_dim->count()) cfg.dim = cli_cfg.dim;
            if (f_gamma->count()) cfg.gamma = cli_cfg.gamma;
            if (f_slope->count()) cfg.leaky_slope = cli_cfg.leaky_slope;
            if (f_hyper->count()) cfg.hyper_layers = cli_cfg.hyper_layers;
            if (f_nbase->count()) cfg.n_base = cli_cfg.n_base;
            if (f_lr->count()) cfg.lr = cli_cfg.lr;
            if (f_epochs->count()) cfg.epochs = cli_cfg.epochs;
            if (f_batch->count()) cfg.batch_size = cli_cfg.batch_size;
            if (f_seed->count()) cfg.seed = cli_cfg.seed;
            if (f_abl->count()) cfg.ablation = chase::parse_ablation(ablation_str);
            apply_env_seed(cfg);
            cfg.validate();
            return run_train(tr, cfg);
        }
        if (app.got_subcommand(sub_ev)) return run_eval(ev);
        if (app.got_subcommand(sub_pr)) return run_predict(pr);
        if (app.got_subcommand(sub_gc)) return run_gradcheck(gc);
    } catch (const chase::InvalidConfig& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const chase::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const chase::DivergedLoss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const chase::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
