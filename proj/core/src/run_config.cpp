#include "cabcnn/run_config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cabcnn/rng.hpp"

namespace cabcnn {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* k : known) {
            ok = ok || key == k;
        }
        if (!ok) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid run config JSON: ") + e.what());
    }
    RunConfig cfg;
    cfg.model = ModelConfig::defaults();
    try {
        reject_unknown(j, {"manifest", "out_dir", "seed", "t_seconds", "model", "train"},
                       "run config");
        if (j.contains("manifest")) {
            cfg.manifest = j["manifest"].get<std::string>();
        }
        if (j.contains("out_dir")) {
            cfg.out_dir = j["out_dir"].get<std::string>();
        }
        if (j.contains("seed")) {
            cfg.seed = j["seed"].get<std::uint64_t>();
        }
        if (j.contains("t_seconds")) {
            cfg.t_seconds = j["t_seconds"].get<std::int64_t>();
        }

        bool model_seed_set = false;
        if (j.contains("model")) {
            const json& m = j["model"];
            reject_unknown(m,
                           {"conv_stages", "feature_dim", "n_classifiers", "n_classes",
                            "bn_momentum", "bn_epsilon", "seed"},
                           "run config 'model'");
            if (m.contains("conv_stages")) {
                cfg.model.conv_stages.clear();
                for (const json& row : m["conv_stages"]) {
                    ConvStage s;
                    s.filters = row.at(0).get<std::int64_t>();
                    s.kernel = row.at(1).get<std::int64_t>();
                    s.pool_size = row.at(2).get<std::int64_t>();
                    s.pool_stride = row.at(3).get<std::int64_t>();
                    s.dropout = row.at(4).get<double>();
                    cfg.model.conv_stages.push_back(s);
                }
            }
            if (m.contains("feature_dim")) {
                cfg.model.feature_dim = m["feature_dim"].get<std::int64_t>();
            }
            if (m.contains("n_classifiers")) {
                cfg.model.n_classifiers = m["n_classifiers"].get<std::int64_t>();
            }
            if (m.contains("n_classes")) {
                cfg.model.n_classes = m["n_classes"].get<std::int64_t>();
            }
            if (m.contains("bn_momentum")) {
                cfg.model.bn_momentum = m["bn_momentum"].get<double>();
            }
            if (m.contains("bn_epsilon")) {
                cfg.model.bn_epsilon = m["bn_epsilon"].get<double>();
            }
            if (m.contains("seed")) {
                cfg.model.seed = m["seed"].get<std::uint64_t>();
                model_seed_set = true;
            }
        }
        if (!model_seed_set) {
            cfg.model.seed = mix_seed(cfg.seed, 1);
        }

        bool train_seed_set = false;
        bool train_t_set = false;
        if (j.contains("train")) {
            const json& t = j["train"];
            reject_unknown(t,
                           {"batch_size", "max_epochs", "patience", "lr", "beta1", "beta2",
                            "epsilon", "seed", "t_seconds"},
                           "run config 'train'");
            if (t.contains("batch_size")) {
                cfg.train.batch_size = t["batch_size"].get<std::int64_t>();
            }
            if (t.contains("max_epochs")) {
                cfg.train.max_epochs = t["max_epochs"].get<std::int64_t>();
            }
            if (t.contains("patience")) {
                cfg.train.patience = t["patience"].get<std::int64_t>();
            }
            if (t.contains("lr")) {
                cfg.train.lr = t["lr"].get<double>();
            }
            if (t.contains("beta1")) {
                cfg.train.beta1 = t["beta1"].get<double>();
            }
            if (t.contains("beta2")) {
                cfg.train.beta2 = t["beta2"].get<double>();
            }
            if (t.contains("epsilon")) {
                cfg.train.epsilon = t["epsilon"].get<double>();
            }
            if (t.contains("seed")) {
                cfg.train.seed = t["seed"].get<std::uint64_t>();
                train_seed_set = true;
            }
            if (t.contains("t_seconds")) {
                cfg.train.t_seconds = t["t_seconds"].get<std::int64_t>();
                train_t_set = true;
            }
        }
        if (!train_seed_set) {
            cfg.train.seed = mix_seed(cfg.seed, 2);
        }
        if (!train_t_set) {
            cfg.train.t_seconds = cfg.t_seconds;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad run config field: ") + e.what());
    }
    cfg.model.validate();
    cfg.train.validate();
    if (cfg.t_seconds < 1) {
        throw ConfigError("t_seconds must be >= 1");
    }
    return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("config file not found: " + path);
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return from_json(ss.str());
}

std::string RunConfig::to_json() const {
    json stages = json::array();
    for (const ConvStage& s : model.conv_stages) {
        stages.push_back({s.filters, s.kernel, s.pool_size, s.pool_stride, s.dropout});
    }
    const json j = {
        {"manifest", manifest},
        {"out_dir", out_dir},
        {"seed", seed},
        {"t_seconds", t_seconds},
        {"model",
         {{"conv_stages", stages},
          {"feature_dim", model.feature_dim},
          {"n_classifiers", model.n_classifiers},
          {"n_classes", model.n_classes},
          {"bn_momentum", model.bn_momentum},
          {"bn_epsilon", model.bn_epsilon},
          {"seed", model.seed}}},
        {"train",
         {{"batch_size", train.batch_size},
          {"max_epochs", train.max_epochs},
          {"patience", train.patience},
          {"lr", train.lr},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"epsilon", train.epsilon},
          {"seed", train.seed},
          {"t_seconds", train.t_seconds}}}};
    return j.dump(2) + "\n";
}

}  // namespace cabcnn
