// Command-line front end: synthetic data generation, curriculum training,
// retrieval evaluation, triplet mining inspection, case studies and gradient
// verification. Exit codes: 0 success, 1 usage, 2 data, 3 numerical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cmr/augment.hpp"
#include "cmr/dataset.hpp"
#include "cmr/errors.hpp"
#include "cmr/eval.hpp"
#include "cmr/grad_check.hpp"
#include "cmr/network.hpp"
#include "cmr/trainer.hpp"

namespace fs = std::filesystem;
using namespace cmr;

namespace {

using Echo = std::vector<std::pair<std::string, std::string>>;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// option handling: `--key value` / `--key=value` flags over an optional
// key=value config file; flags win, unknown keys are rejected.

struct Options {
    std::map<std::string, std::string> values;
    std::set<std::string> consumed;

    bool has(const std::string& key) const { return values.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) {
        consumed.insert(key);
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) {
        consumed.insert(key);
        auto it = values.find(key);
        if (it == values.end()) throw UsageError("missing required --" + key);
        return it->second;
    }

    long get_long(const std::string& key, long fallback) {
        const std::string s = get(key, std::to_string(fallback));
        char* end = nullptr;
        const long v = std::strtol(s.c_str(), &end, 10);
        if (end == s.c_str() || *end != '\0') {
            throw UsageError("--" + key + ": '" + s + "' is not an integer");
        }
        return v;
    }

    double get_double(const std::string& key, double fallback) {
        const std::string s = get(key, fmt(fallback));
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0') {
            throw UsageError("--" + key + ": '" + s + "' is not a number");
        }
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) {
        const std::string s = get(key, fallback ? "on" : "off");
        if (s == "on" || s == "true" || s == "1") return true;
        if (s == "off" || s == "false" || s == "0") return false;
        throw UsageError("--" + key + ": expected on/off, got '" + s + "'");
    }

    void reject_unknown() const {
        for (const auto& [key, value] : values) {
            if (!consumed.count(key)) {
                throw UsageError("unknown option --" + key);
            }
        }
    }
};

std::string normalize_key(std::string key) {
    for (char& c : key) {
        if (c == '-') c = '_';
    }
    return key;
}

const std::set<std::string> kBareFlags = {
    "no_augmentation", "corrupt", "reset_optimizer_at_switch",
    "grad_through_synthetics"};

// keys a config file may set (training-related only)
const std::set<std::string> kConfigFileKeys = {
    "margin", "gamma", "total_epochs", "stage_switch_epoch", "batch_size",
    "learning_rate", "optimizer", "seed", "eval_every", "augmentation",
    "grad_through_synthetics", "triplet_weight", "hidden_dim",
    "num_hidden_layers", "max_pairs_per_class", "reset_optimizer_at_switch",
    "similarity", "train_fraction", "split_seed", "mode"};

Options parse_options(int argc, char** argv, int first) {
    Options opts;
    for (int i = first; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--", 0) != 0) {
            throw UsageError("unexpected argument '" + arg + "'");
        }
        arg = arg.substr(2);
        std::string key, value;
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
            key = normalize_key(arg.substr(0, eq));
            value = arg.substr(eq + 1);
        } else {
            key = normalize_key(arg);
            if (kBareFlags.count(key)) {
                value = "on";
            } else {
                if (i + 1 >= argc) {
                    throw UsageError("--" + key + " needs a value");
                }
                value = argv[++i];
            }
        }
        opts.values[key] = value;
    }
    // config file fills in whatever the flags did not set
    if (opts.values.count("config")) {
        const std::string path = opts.values["config"];
        opts.consumed.insert("config");
        std::ifstream in(path);
        if (!in) throw DataError("cannot open config file '" + path + "'");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            const auto feq = line.find('=');
            if (feq == std::string::npos) {
                throw UsageError(path + ":" + std::to_string(line_no) +
                                 ": expected key=value");
            }
            const std::string key = normalize_key(line.substr(0, feq));
            if (!kConfigFileKeys.count(key)) {
                throw UsageError(path + ":" + std::to_string(line_no) +
                                 ": unknown config key '" + key + "'");
            }
            if (!opts.values.count(key)) {
                opts.values[key] = line.substr(feq + 1);
            }
        }
    }
    return opts;
}

fs::path make_out_dir(Options& opts) {
    const fs::path dir = opts.get("out", "out");
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// shared pieces

struct SplitSettings {
    double train_fraction = 0.8;
    std::uint64_t split_seed = 7;
};

SplitSettings read_split_settings(Options& opts) {
    SplitSettings s;
    s.train_fraction = opts.get_double("train_fraction", s.train_fraction);
    s.split_seed =
        static_cast<std::uint64_t>(opts.get_long("split_seed", 7));
    return s;
}

TrainConfig read_train_config(Options& opts) {
    TrainConfig cfg;
    const std::string preset = opts.get("preset", "");
    if (preset == "ave" || preset == "vegas") {
        cfg.hidden_dim = 1024;
        cfg.batch_size = 400;
        cfg.total_epochs = 1000;
        cfg.learning_rate = 1e-4;
    } else if (!preset.empty()) {
        throw UsageError("--preset: expected ave or vegas, got '" + preset + "'");
    }
    cfg.margin = opts.get_double("margin", cfg.margin);
    cfg.gamma = static_cast<int>(opts.get_long("gamma", cfg.gamma));
    cfg.total_epochs =
        static_cast<int>(opts.get_long("total_epochs", cfg.total_epochs));
    cfg.stage_switch_epoch = static_cast<int>(
        opts.get_long("stage_switch_epoch", cfg.stage_switch_epoch));
    cfg.batch_size = static_cast<std::size_t>(
        opts.get_long("batch_size", static_cast<long>(cfg.batch_size)));
    cfg.learning_rate = opts.get_double("learning_rate", cfg.learning_rate);
    const std::string opt_kind = opts.get("optimizer", "adam");
    if (opt_kind == "adam") {
        cfg.optimizer = OptimizerKind::Adam;
    } else if (opt_kind == "sgd") {
        cfg.optimizer = OptimizerKind::SGD;
    } else {
        throw UsageError("--optimizer: expected adam or sgd");
    }
    cfg.seed = static_cast<std::uint64_t>(opts.get_long("seed", 7));
    cfg.eval_every =
        static_cast<int>(opts.get_long("eval_every", cfg.eval_every));
    cfg.augmentation_enabled =
        opts.get_bool("augmentation", cfg.augmentation_enabled);
    if (opts.get_bool("no_augmentation", false)) {
        cfg.augmentation_enabled = false;
    }
    cfg.gradient_flow_through_synthetics =
        opts.get_bool("grad_through_synthetics", false);
    cfg.triplet_weight = opts.get_double("triplet_weight", cfg.triplet_weight);
    cfg.hidden_dim = static_cast<std::size_t>(
        opts.get_long("hidden_dim", static_cast<long>(cfg.hidden_dim)));
    cfg.num_hidden_layers = static_cast<std::size_t>(opts.get_long(
        "num_hidden_layers", static_cast<long>(cfg.num_hidden_layers)));
    cfg.max_pairs_per_class = static_cast<std::size_t>(opts.get_long(
        "max_pairs_per_class", static_cast<long>(cfg.max_pairs_per_class)));
    cfg.reset_optimizer_at_switch =
        opts.get_bool("reset_optimizer_at_switch", false);
    const std::string sim = opts.get("similarity", "euclidean");
    if (sim == "euclidean") {
        cfg.eval_similarity = Similarity::NegEuclidean;
    } else if (sim == "cosine") {
        cfg.eval_similarity = Similarity::Cosine;
    } else {
        throw UsageError("--similarity: expected euclidean or cosine");
    }
    return cfg;
}

Echo echo_train_config(const TrainConfig& cfg, const SplitSettings& split,
                       const std::string& mode) {
    Echo echo;
    echo.push_back({"mode", mode});
    echo.push_back({"margin", fmt(cfg.margin)});
    echo.push_back({"gamma", std::to_string(cfg.gamma)});
    echo.push_back({"total_epochs", std::to_string(cfg.total_epochs)});
    echo.push_back(
        {"stage_switch_epoch", std::to_string(cfg.effective_switch_epoch())});
    echo.push_back({"batch_size", std::to_string(cfg.batch_size)});
    echo.push_back({"learning_rate", fmt(cfg.learning_rate)});
    echo.push_back(
        {"optimizer", cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd"});
    echo.push_back({"seed", std::to_string(cfg.seed)});
    echo.push_back({"eval_every", std::to_string(cfg.eval_every)});
    echo.push_back(
        {"augmentation", cfg.augmentation_enabled ? "on" : "off"});
    echo.push_back({"grad_through_synthetics",
                    cfg.gradient_flow_through_synthetics ? "on" : "off"});
    echo.push_back({"triplet_weight", fmt(cfg.triplet_weight)});
    echo.push_back({"hidden_dim", std::to_string(cfg.hidden_dim)});
    echo.push_back(
        {"num_hidden_layers", std::to_string(cfg.num_hidden_layers)});
    echo.push_back(
        {"max_pairs_per_class", std::to_string(cfg.max_pairs_per_class)});
    echo.push_back({"reset_optimizer_at_switch",
                    cfg.reset_optimizer_at_switch ? "on" : "off"});
    echo.push_back({"similarity",
                    cfg.eval_similarity == Similarity::Cosine ? "cosine"
                                                              : "euclidean"});
    echo.push_back({"train_fraction", fmt(split.train_fraction)});
    echo.push_back({"split_seed", std::to_string(split.split_seed)});
    return echo;
}

PairedDataset load_split_dataset(const std::string& manifest,
                                 const SplitSettings& split,
                                 std::vector<std::string>* advisories) {
    PairedDataset ds = load_dataset(manifest);
    stratified_split(ds, split.train_fraction, split.split_seed, advisories);
    return ds;
}

DataView view_for(const PairedDataset& ds, const std::string& which) {
    if (which == "train") return subset(ds, Split::Train);
    if (which == "test") return subset(ds, Split::Test);
    if (which == "all") {
        DataView view;
        view.audio = ds.audio;
        view.visual = ds.visual;
        view.labels = ds.labels;
        view.ids = ds.ids;
        view.source_rows.resize(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            view.source_rows[i] = static_cast<int>(i);
        }
        return view;
    }
    throw UsageError("--split: expected train, test or all, got '" + which + "'");
}

void print_advisories(const std::vector<std::string>& advisories) {
    constexpr std::size_t kMaxShown = 8;
    for (std::size_t i = 0; i < advisories.size() && i < kMaxShown; ++i) {
        std::cerr << "advisory: " << advisories[i] << "\n";
    }
    if (advisories.size() > kMaxShown) {
        std::cerr << "advisory: (" << advisories.size() - kMaxShown
                  << " more suppressed)\n";
    }
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_gen_data(Options& opts) {
    SyntheticSpec spec;
    spec.n_pairs =
        static_cast<std::size_t>(opts.get_long("n_pairs", static_cast<long>(spec.n_pairs)));
    spec.num_classes =
        static_cast<int>(opts.get_long("classes", spec.num_classes));
    spec.audio_dim = static_cast<std::size_t>(
        opts.get_long("audio_dim", static_cast<long>(spec.audio_dim)));
    spec.visual_dim = static_cast<std::size_t>(
        opts.get_long("visual_dim", static_cast<long>(spec.visual_dim)));
    spec.cluster_spread =
        opts.get_double("cluster_spread", spec.cluster_spread);
    spec.noise_scale = opts.get_double("noise_scale", spec.noise_scale);
    spec.seed = static_cast<std::uint64_t>(opts.get_long("seed", 7));
    const fs::path out = make_out_dir(opts);
    opts.reject_unknown();

    const PairedDataset ds = generate_synthetic(spec);

    Echo echo;
    echo.push_back({"n_pairs", std::to_string(spec.n_pairs)});
    echo.push_back({"classes", std::to_string(spec.num_classes)});
    echo.push_back({"audio_dim", std::to_string(spec.audio_dim)});
    echo.push_back({"visual_dim", std::to_string(spec.visual_dim)});
    echo.push_back({"cluster_spread", fmt(spec.cluster_spread)});
    echo.push_back({"noise_scale", fmt(spec.noise_scale)});
    echo.push_back({"seed", std::to_string(spec.seed)});

    save_features_csv((out / "audio.csv").string(), ds.audio, ds.ids, ds.labels,
                      echo);
    save_features_csv((out / "visual.csv").string(), ds.visual, ds.ids,
                      ds.labels, echo);

    DatasetManifest manifest;
    manifest.audio_path = "audio.csv";
    manifest.visual_path = "visual.csv";
    manifest.num_classes = spec.num_classes;
    manifest.audio_dim = spec.audio_dim;
    manifest.visual_dim = spec.visual_dim;
    manifest.n_pairs = spec.n_pairs;
    save_manifest((out / "manifest.txt").string(), manifest);

    std::cout << "wrote " << (out / "manifest.txt").string() << " ("
              << ds.size() << " pairs, " << spec.num_classes << " classes)\n";
    return 0;
}

int cmd_train(Options& opts) {
    const std::string manifest = opts.require("manifest");
    const SplitSettings split = read_split_settings(opts);
    TrainConfig cfg = read_train_config(opts);
    const std::string mode_name = opts.get("mode", "semi-to-hard");
    const auto mode = ablation_mode_from_string(mode_name);
    if (!mode) throw UsageError("--mode: unknown mode '" + mode_name + "'");
    const std::string sweep = opts.get("sweep_gamma", "");
    const fs::path out = make_out_dir(opts);
    opts.reject_unknown();

    std::vector<std::string> advisories;
    const PairedDataset ds = load_split_dataset(manifest, split, &advisories);
    Echo echo = echo_train_config(cfg, split, mode_name);
    echo.insert(echo.begin(), {"manifest", manifest});

    if (!sweep.empty()) {
        std::vector<int> gammas;
        std::stringstream ss(sweep);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            char* end = nullptr;
            const long g = std::strtol(tok.c_str(), &end, 10);
            if (end == tok.c_str() || *end != '\0' || g < 0) {
                throw UsageError("--sweep-gamma: bad value '" + tok + "'");
            }
            gammas.push_back(static_cast<int>(g));
        }
        if (gammas.empty()) throw UsageError("--sweep-gamma: empty list");
        const auto rows = run_gamma_sweep(ds, cfg, gammas);
        const fs::path path = out / "gamma_sweep.csv";
        std::ofstream f(path);
        if (!f) throw DataError("cannot open '" + path.string() + "'");
        for (const auto& [k, v] : echo) f << "# " << k << "=" << v << "\n";
        f << "gamma,map_a2v,map_v2a,map_avg\n";
        for (const auto& row : rows) {
            f << row.gamma << ',' << fmt(row.map_a2v) << ',' << fmt(row.map_v2a)
              << ',' << fmt(row.map_avg) << "\n";
            std::cout << "gamma=" << row.gamma
                      << " final test MAP avg=" << fmt3(row.map_avg) << "\n";
        }
        std::cout << "sweep written to " << path.string() << "\n";
        print_advisories(advisories);
        return 0;
    }

    const TrainResult result = run_ablation(ds, cfg, *mode);
    write_metrics_csv((out / "metrics.csv").string(), result.log, echo);
    save_checkpoint(result.models, (out / "checkpoint_final.bin").string());
    if (result.stage_boundary_snapshot) {
        save_checkpoint(*result.stage_boundary_snapshot,
                        (out / "checkpoint_switch.bin").string());
    }

    const EpochRecord& last = result.log.rows.back();
    std::cout << "final test MAP: a2v=" << fmt3(last.map_a2v.value_or(0.0))
              << " v2a=" << fmt3(last.map_v2a.value_or(0.0))
              << " avg=" << fmt3(last.map_avg.value_or(0.0)) << "\n";
    std::cout << "metrics written to " << (out / "metrics.csv").string() << "\n";
    print_advisories(advisories);
    print_advisories(result.log.advisories);
    return 0;
}

int cmd_eval(Options& opts) {
    const std::string manifest = opts.require("manifest");
    const std::string checkpoint = opts.require("checkpoint");
    const SplitSettings split = read_split_settings(opts);
    const std::string which = opts.get("split", "test");
    const std::string sim_name = opts.get("similarity", "euclidean");
    const fs::path out = make_out_dir(opts);
    opts.reject_unknown();

    Similarity sim = Similarity::NegEuclidean;
    if (sim_name == "cosine") {
        sim = Similarity::Cosine;
    } else if (sim_name != "euclidean") {
        throw UsageError("--similarity: expected euclidean or cosine");
    }

    std::vector<std::string> advisories;
    const PairedDataset ds = load_split_dataset(manifest, split, &advisories);
    const DataView view = view_for(ds, which);
    const ModelPair models = load_checkpoint(checkpoint);

    const Matrix audio_emb = project(models.audio_net, view.audio);
    const Matrix visual_emb = project(models.visual_net, view.visual);
    const RetrievalReport report =
        evaluate_bidirectional(audio_emb, visual_emb, view.labels, sim);

    Echo echo;
    echo.push_back({"manifest", manifest});
    echo.push_back({"checkpoint", checkpoint});
    echo.push_back({"split", which});
    echo.push_back({"similarity", sim_name});
    echo.push_back({"train_fraction", fmt(split.train_fraction)});
    echo.push_back({"split_seed", std::to_string(split.split_seed)});

    {
        const fs::path path = out / "report.csv";
        std::ofstream f(path);
        if (!f) throw DataError("cannot open '" + path.string() + "'");
        for (const auto& [k, v] : echo) f << "# " << k << "=" << v << "\n";
        f << "direction,map,queries,queries_without_relevant\n";
        f << "a2v," << fmt(report.audio_to_visual.map) << ','
          << report.audio_to_visual.per_query_ap.size() << ','
          << report.audio_to_visual.queries_without_relevant << "\n";
        f << "v2a," << fmt(report.visual_to_audio.map) << ','
          << report.visual_to_audio.per_query_ap.size() << ','
          << report.visual_to_audio.queries_without_relevant << "\n";
        f << "average," << fmt(report.map_average) << ','
          << report.audio_to_visual.per_query_ap.size() +
                 report.visual_to_audio.per_query_ap.size()
          << ','
          << report.audio_to_visual.queries_without_relevant +
                 report.visual_to_audio.queries_without_relevant
          << "\n";
    }
    {
        const fs::path path = out / "per_query_ap.csv";
        std::ofstream f(path);
        if (!f) throw DataError("cannot open '" + path.string() + "'");
        for (const auto& [k, v] : echo) f << "# " << k << "=" << v << "\n";
        f << "direction,query_row,query_id,label,ap\n";
        auto dump = [&](const DirectionReport& dir) {
            for (std::size_t q = 0; q < dir.per_query_ap.size(); ++q) {
                f << dir.direction << ',' << q << ',' << view.ids[q] << ','
                  << view.labels[q] << ',' << fmt(dir.per_query_ap[q]) << "\n";
            }
        };
        dump(report.audio_to_visual);
        dump(report.visual_to_audio);
    }

    std::ostringstream text;
    text << "MAP audio->visual: " << fmt3(report.audio_to_visual.map) << "\n";
    text << "MAP visual->audio: " << fmt3(report.visual_to_audio.map) << "\n";
    text << "MAP average:       " << fmt3(report.map_average) << "\n";
    std::ofstream(out / "report.txt") << text.str();
    std::cout << text.str();
    print_advisories(advisories);
    return 0;
}

int cmd_mine(Options& opts) {
    const std::string manifest = opts.require("manifest");
    const std::string checkpoint = opts.require("checkpoint");
    const SplitSettings split = read_split_settings(opts);
    const std::string which = opts.get("split", "train");
    const double margin = opts.get_double("margin", 0.2);
    const long sample_size = opts.get_long("sample_size", 20);
    const fs::path out = make_out_dir(opts);
    opts.reject_unknown();
    if (margin <= 0.0) throw UsageError("--margin must be positive");

    std::vector<std::string> advisories;
    const PairedDataset ds = load_split_dataset(manifest, split, &advisories);
    const DataView view = view_for(ds, which);
    const ModelPair models = load_checkpoint(checkpoint);

    const Matrix audio_emb = project(models.audio_net, view.audio);
    const Matrix visual_emb = project(models.visual_net, view.visual);

    EmbeddingContext ctx;
    ctx.audio = &audio_emb;
    ctx.visual = &visual_emb;
    const CategoryCounts counts = census_context(ctx, view.labels, margin);
    const MiningResult mined =
        mine_context(ctx, view.labels, margin, std::nullopt);

    Echo echo;
    echo.push_back({"manifest", manifest});
    echo.push_back({"checkpoint", checkpoint});
    echo.push_back({"split", which});
    echo.push_back({"margin", fmt(margin)});

    {
        const fs::path path = out / "census.csv";
        std::ofstream f(path);
        if (!f) throw DataError("cannot open '" + path.string() + "'");
        for (const auto& [k, v] : echo) f << "# " << k << "=" << v << "\n";
        f << "category,count\n";
        f << "easy," << counts.easy << "\n";
        f << "semi_hard," << counts.semi_hard << "\n";
        f << "hard," << counts.hard << "\n";
        f << "total," << counts.total() << "\n";
    }
    {
        const fs::path path = out / "triplet_sample.csv";
        std::ofstream f(path);
        if (!f) throw DataError("cannot open '" + path.string() + "'");
        for (const auto& [k, v] : echo) f << "# " << k << "=" << v << "\n";
        f << "anchor_modality,anchor_index,positive_index,positive_synthetic,"
             "negative_index,negative_synthetic,d_ap,d_an,category\n";
        const std::size_t n = std::min<std::size_t>(
            mined.triplets.size(), static_cast<std::size_t>(sample_size));
        for (std::size_t i = 0; i < n; ++i) {
            const Triplet& t = mined.triplets[i];
            const char* cat = t.category == TripletCategory::Easy ? "easy"
                              : t.category == TripletCategory::SemiHard
                                  ? "semi_hard"
                                  : "hard";
            f << (t.anchor.modality == Modality::Audio ? "audio" : "visual")
              << ',' << t.anchor.index << ',' << t.positive.index << ','
              << (t.positive.synthetic ? 1 : 0) << ',' << t.negative.index
              << ',' << (t.negative.synthetic ? 1 : 0) << ',' << fmt(t.d_ap)
              << ',' << fmt(t.d_an) << ',' << cat << "\n";
        }
    }

    std::cout << "triplet census (" << which << ", margin=" << fmt3(margin)
              << "): easy=" << counts.easy << " semi_hard=" << counts.semi_hard
              << " hard=" << counts.hard << "\n";
    if (mined.degenerate) {
        std::cerr << "advisory: fewer than 2 classes in '" << which
                  << "' split; no triplets exist\n";
    }
    print_advisories(advisories);
    return 0;
}

int cmd_retrieve(Options& opts) {
    const std::string manifest = opts.require("manifest");
    const std::string checkpoint = opts.require("checkpoint");
    if (!opts.has("query_id")) throw UsageError("missing required --query-id");
    const long query_id = opts.get_long("query_id", -1);
    const long k_arg = opts.get_long("k", 5);
    const std::string direction = opts.get("direction", "a2v");
    const fs::path out = make_out_dir(opts);
    opts.reject_unknown();
    if (k_arg < 1) throw UsageError("--k must be >= 1");
    const std::size_t k = static_cast<std::size_t>(k_arg);
    if (direction != "a2v" && direction != "v2a") {
        throw UsageError("--direction: expected a2v or v2a");
    }

    PairedDataset ds = load_dataset(manifest);
    const ModelPair models = load_checkpoint(checkpoint);

    std::size_t row = ds.size();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.ids[i] == query_id) {
            row = i;
            break;
        }
    }
    if (row == ds.size()) {
        throw DataError("query id " + std::to_string(query_id) +
                        " not found in dataset");
    }

    // query from one modality against the full gallery of the other
    const Matrix audio_emb = project(models.audio_net, ds.audio);
    const Matrix visual_emb = project(models.visual_net, ds.visual);
    const Matrix& query_side = direction == "a2v" ? audio_emb : visual_emb;
    const Matrix& gallery_side = direction == "a2v" ? visual_emb : audio_emb;

    const std::string text =
        case_study(query_side.row(row), ds.labels[row], ds.ids[row],
                   gallery_side, ds.labels, ds.ids, k);
    std::ofstream(out / "case_study.txt") << text;
    std::cout << text;
    return 0;
}

int cmd_grad_check(Options& opts) {
    const double h = opts.get_double("h", 1e-4);
    const double tolerance = opts.get_double("tolerance", 1e-4);
    const long batch = opts.get_long("batch", 8);
    const std::uint64_t seed =
        static_cast<std::uint64_t>(opts.get_long("seed", 7));
    const std::string stage_name = opts.get("stage", "all");
    const bool corrupt = opts.get_bool("corrupt", false);
    TrainConfig cfg = read_train_config(opts);
    opts.reject_unknown();
    cfg.seed = seed;

    StageSelector selector = StageSelector::AllCategories;
    if (stage_name == "semi-hard") {
        selector = StageSelector::SemiHard;
    } else if (stage_name == "hard-augmented") {
        selector = StageSelector::HardAugmented;
    } else if (stage_name != "all") {
        throw UsageError("--stage: expected semi-hard, hard-augmented or all");
    }

    SyntheticSpec spec;
    spec.n_pairs = static_cast<std::size_t>(batch);
    spec.seed = seed;
    const PairedDataset ds = generate_synthetic(spec);

    ModelPair models =
        make_model_pair(ds.audio.cols, ds.visual.cols, cfg.hidden_dim,
                        static_cast<std::size_t>(ds.num_classes), seed,
                        cfg.num_hidden_layers);
    const CombinedLossBatch loss_batch = make_combined_batch(
        models, ds.audio, ds.visual, ds.labels, cfg, selector);

    std::cout << "grad-check: h=" << fmt(h) << " batch=" << batch
              << " stage=" << stage_name << " seed=" << seed
              << " triplets=" << loss_batch.triplets.size() << "\n";

    auto loss_fn = [&]() { return combined_loss_value(models, loss_batch); };
    auto grad_fn = [&]() {
        combined_loss_grads(models, loss_batch);
        if (corrupt) {
            // test hook: sabotage one gradient entry so the verifier must trip
            models.audio_net.layers[0].weight_grad.data[0] += 1e-2;
        }
    };

    const GradCheckReport report =
        finite_diff_check(models.parameters(), loss_fn, grad_fn, h);
    std::cout << "max relative error: " << fmt(report.max_rel_error)
              << " (worst: " << report.worst_param << "[" << report.worst_index
              << "] analytic=" << fmt(report.worst_analytic)
              << " numeric=" << fmt(report.worst_numeric) << ")\n";
    std::cout << "params checked: " << report.params_checked << "\n";
    if (report.max_rel_error < tolerance) {
        std::cout << "PASS (tolerance " << fmt(tolerance) << ")\n";
        return 0;
    }
    std::cout << "FAIL (tolerance " << fmt(tolerance) << ")\n";
    return 3;
}

void print_usage() {
    std::cout <<
        "usage: cmr <subcommand> [options]\n"
        "\n"
        "subcommands:\n"
        "  gen-data    generate a synthetic paired-modality dataset\n"
        "              --out DIR --n-pairs N --classes C --audio-dim D\n"
        "              --visual-dim D --cluster-spread S --noise-scale S --seed S\n"
        "  train       two-stage curriculum training\n"
        "              --manifest FILE [--config FILE] [--out DIR] [--mode M]\n"
        "              [--sweep-gamma 0,1,2,4] [--preset ave|vegas]\n"
        "              modes: semi-to-hard (default), hard-to-semi, hard-to-all,\n"
        "                     semi-only, hard-only\n"
        "              hyperparameters: --margin --gamma --total-epochs\n"
        "              --stage-switch-epoch --batch-size --learning-rate\n"
        "              --optimizer adam|sgd --seed --eval-every --no-augmentation\n"
        "              --grad-through-synthetics --triplet-weight --hidden-dim\n"
        "              --train-fraction --split-seed --similarity euclidean|cosine\n"
        "  eval        bidirectional retrieval MAP for a checkpoint\n"
        "              --checkpoint FILE --manifest FILE [--split test|train|all]\n"
        "  mine        triplet category census + sample dump\n"
        "              --checkpoint FILE --manifest FILE [--margin M]\n"
        "  retrieve    top-k case study for one query\n"
        "              --checkpoint FILE --manifest FILE --query-id ID [--k K]\n"
        "              [--direction a2v|v2a]\n"
        "  grad-check  finite-difference verification of analytic gradients\n"
        "              [--h H] [--batch N] [--stage semi-hard|hard-augmented|all]\n"
        "\n"
        "exit codes: 0 ok, 1 usage error, 2 data error, 3 numerical failure\n";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        print_usage();
        return 1;
    }
    const std::string sub = argv[1];
    if (sub == "--help" || sub == "help" || sub == "-h") {
        print_usage();
        return 0;
    }
    try {
        Options opts = parse_options(argc, argv, 2);
        if (sub == "gen-data") return cmd_gen_data(opts);
        if (sub == "train") return cmd_train(opts);
        if (sub == "eval") return cmd_eval(opts);
        if (sub == "mine") return cmd_mine(opts);
        if (sub == "retrieve") return cmd_retrieve(opts);
        if (sub == "grad-check") return cmd_grad_check(opts);
        throw UsageError("unknown subcommand '" + sub + "'");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
