// Command-line front end: synthesize a corpus, train, evaluate, run the
// gradient-check suite, or predict a single clip.
//
// Exit codes: 0 success, 1 usage error, 2 data/config/IO error,
// 3 numeric failure (incl. gradient-check failures).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cabcnn/audio.hpp"
#include "cabcnn/dataset.hpp"
#include "cabcnn/gradcheck.hpp"
#include "cabcnn/metrics.hpp"
#include "cabcnn/model.hpp"
#include "cabcnn/rng.hpp"
#include "cabcnn/run_config.hpp"
#include "cabcnn/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void make_dirs(const std::string& dir) {
    try {
        fs::create_directories(dir);
    } catch (const fs::filesystem_error& e) {
        throw cabcnn::IoError("cannot create directory " + dir + ": " + e.what());
    }
}

std::string resolve_against(const std::string& base_file, const std::string& path) {
    const fs::path p(path);
    if (p.is_absolute()) {
        return path;
    }
    return (fs::path(base_file).parent_path() / p).string();
}

int class_argmax(const cabcnn::Tensor& probs) {
    int best = 0;
    for (std::int64_t i = 1; i < probs.size(); ++i) {
        if (probs.at(i) > probs.at(best)) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

struct CheckpointMeta {
    std::int64_t t_seconds = 0;
    std::vector<std::string> labels;
};

CheckpointMeta parse_meta(const std::string& meta_json, const std::string& checkpoint) {
    json meta;
    try {
        meta = json::parse(meta_json);
    } catch (const json::exception&) {
        throw cabcnn::IoError("checkpoint metadata is not valid JSON: " + checkpoint);
    }
    CheckpointMeta out;
    if (!meta.contains("t_seconds") || !meta.contains("labels")) {
        throw cabcnn::ConfigError("checkpoint " + checkpoint +
                                  " lacks t_seconds/labels metadata (not written by train?)");
    }
    out.t_seconds = meta["t_seconds"].get<std::int64_t>();
    out.labels = meta["labels"].get<std::vector<std::string>>();
    return out;
}

// Load every manifest row, preprocess, and map labels to indices.
std::vector<cabcnn::Sample> load_corpus(const std::string& manifest_path,
                                        const std::vector<cabcnn::ManifestEntry>& rows,
                                        const std::vector<std::string>& names,
                                        std::int64_t t_seconds) {
    std::vector<cabcnn::Sample> samples;
    samples.reserve(rows.size());
    for (const cabcnn::ManifestEntry& row : rows) {
        cabcnn::Sample s;
        s.id = row.path;
        s.label = cabcnn::label_index(names, row.label);
        const cabcnn::AudioClip clip =
            cabcnn::load_wav(resolve_against(manifest_path, row.path));
        s.array = cabcnn::preprocess(clip, t_seconds);
        if (s.array.shape[1] < cabcnn::Model::kMinInputLen) {
            throw cabcnn::DataError("clip " + row.path + " is only " +
                                    std::to_string(s.array.shape[1]) +
                                    " samples after preprocessing; the model needs at least " +
                                    std::to_string(cabcnn::Model::kMinInputLen));
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string score_samples(cabcnn::Model& model, const std::vector<cabcnn::Sample>& samples,
                          const std::vector<std::string>& names) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(samples.size());
    for (const cabcnn::Sample& s : samples) {
        const cabcnn::Tensor probs = model.forward(s.array, false);
        pairs.emplace_back(s.label, class_argmax(probs));
    }
    const cabcnn::ConfusionMatrix cm =
        cabcnn::build_confusion(pairs, static_cast<std::int64_t>(names.size()));
    return cabcnn::score_report_json(cm, names);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os || !(os << text)) {
        throw cabcnn::IoError("cannot write " + path);
    }
}

int do_synth(const std::string& out_dir, std::int64_t per_class, std::int64_t classes,
             std::uint64_t seed) {
    make_dirs(out_dir);
    const std::vector<cabcnn::AudioClip> corpus = cabcnn::synth_corpus(per_class, classes, seed);
    std::vector<cabcnn::ManifestEntry> rows;
    rows.reserve(corpus.size());
    std::vector<std::int64_t> per_label(static_cast<std::size_t>(classes), 0);
    for (const cabcnn::AudioClip& clip : corpus) {
        const std::string label = "class" + std::to_string(clip.label);
        const std::string name = "clip_" + label + "_" +
                                 std::to_string(per_label[static_cast<std::size_t>(clip.label)]++) +
                                 ".wav";
        cabcnn::save_wav(out_dir + "/" + name, clip);
        rows.push_back({name, label});
    }
    cabcnn::write_manifest(out_dir + "/manifest.csv", rows);
    std::printf("wrote %zu clips and manifest.csv to %s\n", corpus.size(), out_dir.c_str());
    return 0;
}

int do_train(const std::string& config_path, bool seed_set, std::uint64_t seed_override,
             const std::string& out_override, bool save_feats) {
    std::string config_text;
    {
        std::ifstream is(config_path);
        if (!is) {
            throw cabcnn::IoError("config file not found: " + config_path);
        }
        config_text.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    }
    if (seed_set) {
        // --seed replaces the file's top-level seed and re-derives the
        // model/train sub-seeds.
        json j;
        try {
            j = json::parse(config_text);
        } catch (const json::exception& e) {
            throw cabcnn::ConfigError(std::string("invalid run config JSON: ") + e.what());
        }
        j["seed"] = seed_override;
        if (j.contains("model") && j["model"].contains("seed")) {
            j["model"].erase("seed");
        }
        if (j.contains("train") && j["train"].contains("seed")) {
            j["train"].erase("seed");
        }
        config_text = j.dump();
    }
    cabcnn::RunConfig rc = cabcnn::RunConfig::from_json(config_text);
    if (!out_override.empty()) {
        rc.out_dir = out_override;
    }
    if (rc.out_dir.empty()) {
        throw cabcnn::ConfigError("run config needs out_dir (or pass --out)");
    }
    if (rc.manifest.empty()) {
        throw cabcnn::ConfigError("run config needs a manifest path");
    }
    const std::string manifest_path = resolve_against(config_path, rc.manifest);

    make_dirs(rc.out_dir);
    write_text(rc.out_dir + "/resolved_config.json", rc.to_json());

    const std::vector<cabcnn::ManifestEntry> rows = cabcnn::read_manifest(manifest_path);
    const std::vector<std::string> names = cabcnn::label_names(rows);
    if (static_cast<std::int64_t>(names.size()) != rc.model.n_classes) {
        throw cabcnn::ConfigError("manifest has " + std::to_string(names.size()) +
                                  " distinct labels but the model is configured for " +
                                  std::to_string(rc.model.n_classes) + " classes");
    }

    const std::vector<cabcnn::Sample> corpus =
        load_corpus(manifest_path, rows, names, rc.t_seconds);
    if (save_feats) {
        make_dirs(rc.out_dir + "/features");
        for (const cabcnn::Sample& s : corpus) {
            cabcnn::save_features(rc.out_dir + "/features", s);
        }
    }

    std::vector<int> labels;
    labels.reserve(corpus.size());
    for (const cabcnn::Sample& s : corpus) {
        labels.push_back(s.label);
    }
    const cabcnn::DatasetSplit split = cabcnn::split_dataset(
        labels, static_cast<int>(rc.model.n_classes), cabcnn::mix_seed(rc.seed, 3));

    const auto subset = [&](const std::vector<cabcnn::SplitEntry>& entries) {
        std::vector<cabcnn::Sample> out;
        out.reserve(entries.size());
        for (const cabcnn::SplitEntry& e : entries) {
            out.push_back(corpus[static_cast<std::size_t>(e.index)]);
        }
        return out;
    };
    const auto subset_manifest = [&](const std::vector<cabcnn::SplitEntry>& entries,
                                     const std::string& name) {
        std::vector<cabcnn::ManifestEntry> sub;
        sub.reserve(entries.size());
        for (const cabcnn::SplitEntry& e : entries) {
            const cabcnn::ManifestEntry& r = rows[static_cast<std::size_t>(e.index)];
            sub.push_back({fs::absolute(resolve_against(manifest_path, r.path)).string(), r.label});
        }
        cabcnn::write_manifest(rc.out_dir + "/" + name, sub);
    };
    subset_manifest(split.train, "train_manifest.csv");
    subset_manifest(split.validation, "val_manifest.csv");
    subset_manifest(split.test, "test_manifest.csv");

    const std::vector<cabcnn::Sample> train_set = subset(split.train);
    const std::vector<cabcnn::Sample> val_set = subset(split.validation);
    const std::vector<cabcnn::Sample> test_set = subset(split.test);
    std::printf("corpus: %zu clips (%zu train / %zu val / %zu test), %zu classes\n",
                corpus.size(), train_set.size(), val_set.size(), test_set.size(), names.size());

    cabcnn::Model model = cabcnn::Model::build(rc.model);
    std::printf("model: %lld parameters\n", static_cast<long long>(model.count_parameters()));

    const cabcnn::TrainResult result =
        cabcnn::train(model, train_set, val_set, rc.train, [](const cabcnn::EpochRecord& r) {
            std::printf("epoch %3lld  train_loss %.6f  val_loss %.6f  val_acc %.4f  %.1fs\n",
                        static_cast<long long>(r.epoch), r.train_loss, r.val_loss, r.val_acc,
                        r.seconds);
            std::fflush(stdout);
        });

    cabcnn::write_history_csv(rc.out_dir + "/history.csv", result.history);

    json meta = {{"t_seconds", rc.t_seconds},
                 {"labels", names},
                 {"best_epoch", result.best_epoch},
                 {"epochs_run", static_cast<std::int64_t>(result.history.size())}};
    model.save(rc.out_dir + "/checkpoint.cab", meta.dump());
    std::printf("best epoch %lld (val loss %.6f)\n", static_cast<long long>(result.best_epoch),
                result.best_val_loss);

    // Scored last: per-class metrics throw if some class is never predicted,
    // and the checkpoint should survive that.
    const std::string report = score_samples(model, test_set, names);
    write_text(rc.out_dir + "/scores.json", report);
    std::fputs(report.c_str(), stdout);
    return 0;
}

int do_eval(const std::string& checkpoint, const std::string& manifest_path,
            const std::string& out_file) {
    std::string meta_text;
    cabcnn::Model model = cabcnn::Model::load(checkpoint, &meta_text);
    const CheckpointMeta meta = parse_meta(meta_text, checkpoint);

    const std::vector<cabcnn::ManifestEntry> rows = cabcnn::read_manifest(manifest_path);
    const std::vector<std::string> names = cabcnn::label_names(rows);
    if (names != meta.labels) {
        std::string have;
        for (const std::string& n : names) {
            have += (have.empty() ? "" : ",") + n;
        }
        std::string want;
        for (const std::string& n : meta.labels) {
            want += (want.empty() ? "" : ",") + n;
        }
        throw cabcnn::ConfigError("checkpoint was trained on " +
                                  std::to_string(meta.labels.size()) + " classes [" + want +
                                  "] but the manifest has " + std::to_string(names.size()) +
                                  " [" + have + "]");
    }

    const std::vector<cabcnn::Sample> samples =
        load_corpus(manifest_path, rows, names, meta.t_seconds);
    const std::string report = score_samples(model, samples, names);
    if (!out_file.empty()) {
        write_text(out_file, report);
    }
    std::fputs(report.c_str(), stdout);
    return 0;
}

int do_predict(const std::string& checkpoint, const std::string& wav) {
    std::string meta_text;
    cabcnn::Model model = cabcnn::Model::load(checkpoint, &meta_text);
    const CheckpointMeta meta = parse_meta(meta_text, checkpoint);

    const cabcnn::AudioClip clip = cabcnn::load_wav(wav);
    const cabcnn::Tensor array = cabcnn::preprocess(clip, meta.t_seconds);
    const cabcnn::Tensor probs = model.forward(array, false);
    const int idx = class_argmax(probs);

    const json out = {{"class_index", idx},
                      {"label", meta.labels[static_cast<std::size_t>(idx)]},
                      {"probabilities", probs.data}};
    std::printf("%s\n", out.dump(2).c_str());
    return 0;
}

int do_gradcheck(std::uint64_t seed, std::int64_t n_seeds) {
    const std::vector<cabcnn::GradCheckRow> rows = cabcnn::run_gradient_suite(seed, n_seeds);
    bool all_pass = true;
    for (const cabcnn::GradCheckRow& r : rows) {
        std::printf("%-14s max_rel_err %.3e  threshold %.0e  %s\n", r.name.c_str(),
                    r.max_rel_err, r.threshold, r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
        std::fprintf(stderr, "gradient check failed\n");
        return 3;
    }
    std::printf("all gradient checks passed (%lld seeds)\n", static_cast<long long>(n_seeds));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAB-CNN: attention-gated classifier bank over 1D-conv audio features"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed (default 0)");
    app.add_option("--threads", threads, "Worker threads (the training loop is sequential; "
                                         "results do not depend on this)")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", out, "Output directory or file, per subcommand");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
    std::int64_t per_class = 100;
    std::int64_t classes = 3;
    synth->add_option("--per-class", per_class, "Clips per class")->check(CLI::PositiveNumber);
    synth->add_option("--classes", classes, "Number of classes")->check(CLI::Range(2, 1000));
    synth->fallthrough();

    auto* train = app.add_subcommand("train", "Train from a run-config JSON file");
    std::string config_path;
    bool save_feats = false;
    train->add_option("--config", config_path, "Run config JSON")->required();
    train->add_flag("--save-features", save_feats,
                    "Persist preprocessed arrays (float64 blocks + JSON sidecars)");
    train->fallthrough();

    auto* eval = app.add_subcommand("eval", "Score a checkpoint against a manifest");
    std::string checkpoint;
    std::string manifest;
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--manifest", manifest, "Corpus manifest CSV")->required();
    eval->fallthrough();

    auto* predict = app.add_subcommand("predict", "Classify one WAV file");
    std::string pred_checkpoint;
    std::string wav;
    predict->add_option("--checkpoint", pred_checkpoint, "Checkpoint file")->required();
    predict->add_option("--wav", wav, "Input WAV")->required();
    predict->fallthrough();

    auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference suite");
    std::int64_t gc_seeds = 5;
    gradcheck->add_option("--seeds", gc_seeds, "Random configurations per row")
        ->check(CLI::PositiveNumber);
    gradcheck->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            if (out.empty()) {
                std::fprintf(stderr, "synth requires --out DIR\n");
                return 1;
            }
            return do_synth(out, per_class, classes, seed);
        }
        if (train->parsed()) {
            return do_train(config_path, seed_opt->count() > 0, seed, out, save_feats);
        }
        if (eval->parsed()) {
            return do_eval(checkpoint, manifest, out);
        }
        if (predict->parsed()) {
            return do_predict(pred_checkpoint, wav);
        }
        if (gradcheck->parsed()) {
            return do_gradcheck(seed, gc_seeds);
        }
    } catch (const cabcnn::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const cabcnn::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
