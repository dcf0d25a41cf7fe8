// Command-line front end: gen-data / train / eval / ground / sweep / ablate.
// Exit codes: 0 success, 1 rejected input (bad flags, config, or data),
// 2 runtime failure. Diagnostics go to stderr; data goes to stdout or --out.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <vtg/vtg.hpp>

namespace {

namespace fs = std::filesystem;

// --config layering: JSON object whose keys are the long flag names; a flag
// given on the command line overrides the file. Unknown keys are rejected.
class ConfigBinder {
public:
    template <typename T>
    void bind(CLI::Option* opt, T& var, const std::string& key) {
        keys_.insert(key);
        appliers_.push_back([opt, &var, key](const nlohmann::json& doc) {
            if (doc.contains(key) && opt->count() == 0) var = doc.at(key).get<T>();
        });
    }

    void apply(const std::string& config_path) const {
        if (config_path.empty()) return;
        std::ifstream in(config_path);
        if (!in) throw vtg::io_error("cannot open config: " + config_path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw vtg::parse_error("config " + config_path + ": " + e.what());
        }
        if (!doc.is_object()) throw vtg::config_error("config " + config_path + ": expected a JSON object");
        for (const auto& [key, value] : doc.items()) {
            (void)value;
            if (!keys_.count(key)) throw vtg::config_error("config " + config_path + ": unknown key '" + key + "'");
        }
        for (const auto& fn : appliers_) fn(doc);
    }

private:
    std::set<std::string> keys_;
    std::vector<std::function<void(const nlohmann::json&)>> appliers_;
};

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) {
        const auto a = item.find_first_not_of(" \t");
        if (a == std::string::npos) continue;
        const auto b = item.find_last_not_of(" \t");
        out.push_back(item.substr(a, b - a + 1));
    }
    return out;
}

std::vector<double> parse_omegas(const std::string& text) {
    std::vector<double> out;
    for (const auto& tok : split_csv(text)) {
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw vtg::argument_error("cannot parse omega value '" + tok + "'");
        }
    }
    if (out.empty()) throw vtg::argument_error("empty omega list");
    return out;
}

void emit(const std::string& content, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw vtg::io_error("cannot write output: " + out_path);
    out << content;
    if (!out) throw vtg::io_error("failed writing output: " + out_path);
}

// Required paths may come from the command line or the --config file, so the
// presence check runs after config layering rather than via CLI11's required().
void require_value(const std::string& value, const std::string& flag) {
    if (value.empty()) throw vtg::argument_error(flag + " is required (on the command line or in --config)");
}

std::string format_fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

vtg::GtMode parse_gt_mode(const std::string& s) {
    if (s == "union") return vtg::GtMode::kUnion;
    if (s == "any-box") return vtg::GtMode::kAnyBox;
    throw vtg::argument_error("gt-mode must be 'union' or 'any-box', got '" + s + "'");
}

// Demo-grade phrase chunker for raw --sentence input: splits on commas,
// semicolons, and the standalone word "and". Corpus files carry real phrase
// spans and never pass through this.
std::vector<vtg::PhraseRecord> chunk_sentence(const std::string& text) {
    auto is_word = [](unsigned char c) { return std::isalnum(c) != 0; };
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        while (start < end && std::isspace(static_cast<unsigned char>(text[start]))) ++start;
        while (end > start && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
        if (start < end) spans.emplace_back(start, end);
    };
    for (std::size_t i = 0; i < text.size();) {
        const char c = text[i];
        if (c == ',' || c == ';') {
            flush(i);
            start = ++i;
            continue;
        }
        if ((c == 'a' || c == 'A') && i + 3 <= text.size()) {
            const bool starts = i == 0 || !is_word(static_cast<unsigned char>(text[i - 1]));
            const bool ends = i + 3 == text.size() || !is_word(static_cast<unsigned char>(text[i + 3]));
            const char n1 = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i + 1])));
            const char n2 = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i + 2])));
            if (starts && ends && n1 == 'n' && n2 == 'd') {
                flush(i);
                start = i + 3;
                i += 3;
                continue;
            }
        }
        ++i;
    }
    flush(text.size());

    std::vector<vtg::PhraseRecord> phrases;
    for (const auto& [a, b] : spans) {
        vtg::PhraseRecord q;
        q.first_char = a;
        q.last_char = b;
        q.tokens = vtg::tokenize(std::string_view(text).substr(a, b - a));
        if (q.tokens.empty()) continue;
        phrases.push_back(std::move(q));
    }
    if (phrases.empty()) throw vtg::argument_error("sentence contains no usable phrase tokens");
    return phrases;
}

struct GenDataArgs {
    std::string out_dir;
    int images = 100;
    int proposals = 4;
    std::string concepts = "dog,cat,horse,sheep,bird,car,bus,boat,chair,table,woman,man";
    double noise = 0.0;
    double dup_rate = 0.0;
    int feature_dim = 16;
    int embedding_dim = 32;
    std::uint64_t seed = 42;
    std::string embeddings; // optional existing table
    std::string config;
};

int run_gen_data(const GenDataArgs& a) {
    require_value(a.out_dir, "--out-dir");
    vtg::GenConfig cfg;
    cfg.n_images = a.images;
    cfg.proposals_per_image = a.proposals;
    cfg.concepts = split_csv(a.concepts);
    cfg.label_noise = a.noise;
    cfg.duplicate_rate = a.dup_rate;
    cfg.feature_dim = a.feature_dim;
    cfg.seed = a.seed;
    cfg.validate();

    fs::create_directories(a.out_dir);
    std::string embeddings_path = a.embeddings;
    if (embeddings_path.empty()) {
        std::vector<std::string> tokens = cfg.concepts;
        for (const auto& t : vtg::synthetic_template_tokens()) tokens.push_back(t);
        embeddings_path = (fs::path(a.out_dir) / "embeddings.txt").string();
        vtg::write_toy_embeddings(embeddings_path, tokens, a.embedding_dim, a.seed);
    }
    const auto table = vtg::FixedEmbeddingTable::load(embeddings_path);

    const auto corpora = vtg::generate(cfg, table);
    const auto paths = vtg::write_dataset(corpora, a.out_dir);

    const nlohmann::json echo{{"train_manifest", paths.train_manifest.string()},
                              {"val_manifest", paths.val_manifest.string()},
                              {"test_manifest", paths.test_manifest.string()},
                              {"embeddings", embeddings_path},
                              {"config",
                               {{"images", cfg.n_images},
                                {"proposals", cfg.proposals_per_image},
                                {"concepts", cfg.concepts},
                                {"noise", cfg.label_noise},
                                {"dup-rate", cfg.duplicate_rate},
                                {"feature-dim", cfg.feature_dim},
                                {"seed", cfg.seed}}}};
    std::cout << echo.dump(2) << '\n';
    return 0;
}

struct TrainArgs {
    std::string manifest, val_manifest, embeddings, out_dir;
    double omega = 0.4;
    double lr = 1e-5;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 42;
    double fraction = 1.0;
    double epsilon_norm = 1e-8;
    std::string precision = "f64";
    std::string optimizer = "sgd";
    double grad_clip = 0.0;
    bool no_spatial_mask = false;
    bool raw_scores = false;
    std::string init = "warm";
    std::string signature_space = "fixed";
    std::size_t max_vocab = 0;
    unsigned threads = 0;
    std::string config;
};

template <typename Real>
int run_train_typed(const TrainArgs& a) {
    require_value(a.manifest, "--manifest");
    require_value(a.val_manifest, "--val-manifest");
    require_value(a.embeddings, "--embeddings");
    require_value(a.out_dir, "--out-dir");
    const auto fixed = vtg::FixedEmbeddingTable::load(a.embeddings, a.max_vocab);
    const auto train_corpus = vtg::load_corpus(a.manifest);
    const auto val_corpus = vtg::load_corpus(a.val_manifest);
    const auto lexicon = vtg::Lexicon::defaults();

    vtg::ModelDims dims;
    dims.feature_dim = train_corpus.feature_dim;
    dims.embedding_dim = fixed.dim();
    dims.hidden_dim = fixed.dim();

    vtg::TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.omega = a.omega;
    cfg.seed = a.seed;
    cfg.fraction = a.fraction;
    cfg.epsilon_norm = a.epsilon_norm;
    cfg.use_spatial_mask = !a.no_spatial_mask;
    cfg.raw_scores = a.raw_scores;
    cfg.grad_clip = a.grad_clip;
    cfg.threads = a.threads;
    if (a.optimizer == "sgd")
        cfg.optimizer = vtg::OptimizerKind::kSgd;
    else if (a.optimizer == "adam")
        cfg.optimizer = vtg::OptimizerKind::kAdam;
    else
        throw vtg::argument_error("optimizer must be 'sgd' or 'adam', got '" + a.optimizer + "'");
    if (a.init == "warm")
        cfg.embedding_init = vtg::EmbeddingInit::kWarmStart;
    else if (a.init == "random")
        cfg.embedding_init = vtg::EmbeddingInit::kRandom;
    else
        throw vtg::argument_error("init must be 'warm' or 'random', got '" + a.init + "'");
    if (a.signature_space == "fixed")
        cfg.signature_trainable = false;
    else if (a.signature_space == "trainable")
        cfg.signature_trainable = true;
    else
        throw vtg::argument_error("signature-space must be 'fixed' or 'trainable', got '" + a.signature_space + "'");

    const auto result = vtg::train<Real>(train_corpus, val_corpus, fixed, lexicon, dims, cfg, a.out_dir);

    const nlohmann::json echo{{"checkpoint", result.checkpoint_path.string()},
                              {"log", result.log_path.string()},
                              {"best_epoch", result.best_epoch},
                              {"best_val_accuracy", result.best_val_accuracy},
                              {"config",
                               {{"omega", cfg.omega},
                                {"lr", cfg.learning_rate},
                                {"epochs", cfg.epochs},
                                {"batch-size", cfg.batch_size},
                                {"seed", cfg.seed},
                                {"fraction", cfg.fraction},
                                {"optimizer", a.optimizer},
                                {"precision", a.precision}}}};
    std::cout << echo.dump(2) << '\n';
    return 0;
}

int run_train(const TrainArgs& a) {
    if (a.precision == "f64") return run_train_typed<double>(a);
    if (a.precision == "f32") return run_train_typed<float>(a);
    throw vtg::argument_error("precision must be 'f32' or 'f64', got '" + a.precision + "'");
}

struct EvalArgs {
    std::string manifest, embeddings, checkpoint;
    double omega = 0.4;
    bool no_spatial_mask = false;
    std::string gt_mode = "union";
    std::string out;
    bool per_phrase = false;
    std::string precision = "f64";
    std::size_t max_vocab = 0;
    unsigned threads = 0;
    std::string config;
};

template <typename Real>
int run_eval_typed(const EvalArgs& a) {
    require_value(a.manifest, "--manifest");
    require_value(a.embeddings, "--embeddings");
    const auto fixed = vtg::FixedEmbeddingTable::load(a.embeddings, a.max_vocab);
    const auto corpus = vtg::load_corpus(a.manifest);
    const auto lexicon = vtg::Lexicon::defaults();
    const auto pc = vtg::prepare(corpus, fixed, lexicon, a.threads);

    vtg::EvalOptions opt;
    opt.omega = a.omega;
    opt.use_spatial_mask = !a.no_spatial_mask;
    opt.gt_mode = parse_gt_mode(a.gt_mode);
    opt.threads = a.threads;

    vtg::EvalReport report;
    if (a.checkpoint.empty()) {
        report = vtg::evaluate_concept_only(pc, opt);
    } else {
        const auto params = vtg::load_checkpoint<Real>(a.checkpoint);
        opt.checkpoint_id = fs::path(a.checkpoint).filename().string();
        report = vtg::evaluate(pc, &params, opt);
    }
    emit(report.to_json(a.per_phrase).dump(2) + "\n", a.out);
    std::cerr << report.summary();
    return 0;
}

int run_eval(const EvalArgs& a) {
    if (a.precision == "f64") return run_eval_typed<double>(a);
    if (a.precision == "f32") return run_eval_typed<float>(a);
    throw vtg::argument_error("precision must be 'f32' or 'f64', got '" + a.precision + "'");
}

struct GroundArgs {
    std::string manifest, embeddings, sentence, image, checkpoint;
    bool concept_only = false;
    double omega = 0.4;
    bool no_spatial_mask = false;
    std::string svg;
    std::string out;
    std::string precision = "f64";
    std::size_t max_vocab = 0;
    std::string config;
};

template <typename Real>
int run_ground_typed(const GroundArgs& a) {
    require_value(a.manifest, "--manifest");
    require_value(a.embeddings, "--embeddings");
    require_value(a.sentence, "--sentence");
    if (a.checkpoint.empty() && !a.concept_only)
        throw vtg::argument_error("ground needs --checkpoint, or --concept-only for the untrained branch alone");
    const auto fixed = vtg::FixedEmbeddingTable::load(a.embeddings, a.max_vocab);
    const auto corpus = vtg::load_corpus(a.manifest);
    const auto lexicon = vtg::Lexicon::defaults();

    const vtg::ImageExample* ex = nullptr;
    if (a.image.empty()) {
        ex = &corpus.examples.front();
    } else {
        for (const auto& e : corpus.examples)
            if (e.image_id == a.image) {
                ex = &e;
                break;
            }
        if (!ex) throw vtg::argument_error("image id '" + a.image + "' not found in corpus");
    }

    vtg::Sentence sentence;
    sentence.text = a.sentence;
    sentence.phrases = chunk_sentence(a.sentence);

    const bool use_mask = !a.no_spatial_mask;
    Eigen::MatrixXd scores = vtg::concept_scores(*ex, sentence, fixed, lexicon, use_mask);
    double omega_used = 0.0;
    std::string checkpoint_id = "concept-only";
    if (!a.checkpoint.empty()) {
        const auto params = vtg::load_checkpoint<Real>(a.checkpoint);
        scores = vtg::refine(vtg::learned_scores(params, *ex, sentence), scores, a.omega);
        omega_used = a.omega;
        checkpoint_id = fs::path(a.checkpoint).filename().string();
    }
    const auto chosen = vtg::ground(scores);

    nlohmann::json phrases = nlohmann::json::array();
    std::vector<std::string> texts;
    for (std::size_t j = 0; j < sentence.phrases.size(); ++j) {
        const auto& q = sentence.phrases[j];
        const std::string text = a.sentence.substr(q.first_char, q.last_char - q.first_char);
        texts.push_back(text);
        const auto ap = vtg::analyze_phrase(q.tokens, q.head, lexicon);
        const auto& box = ex->proposals[chosen[j]].box;
        phrases.push_back({{"phrase", text},
                           {"head", ap.head},
                           {"chosen", chosen[j]},
                           {"label", ex->proposals[chosen[j]].label},
                           {"box", {box.x1, box.y1, box.x2, box.y2}},
                           {"score", scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(chosen[j]))}});
    }
    const nlohmann::json result{{"image_id", ex->image_id},
                                {"phrases", phrases},
                                {"config", {{"omega", omega_used}, {"checkpoint", checkpoint_id}}}};
    emit(result.dump(2) + "\n", a.out);

    if (!a.svg.empty()) {
        std::ofstream svg(a.svg, std::ios::binary);
        if (!svg) throw vtg::io_error("cannot write svg: " + a.svg);
        svg << vtg::svg_overlay(*ex, chosen, texts);
    }
    return 0;
}

int run_ground(const GroundArgs& a) {
    if (a.precision == "f64") return run_ground_typed<double>(a);
    if (a.precision == "f32") return run_ground_typed<float>(a);
    throw vtg::argument_error("precision must be 'f32' or 'f64', got '" + a.precision + "'");
}

struct SweepArgs {
    std::string manifest, embeddings, checkpoint;
    std::string omegas = "0,0.25,0.5,0.75,1";
    bool no_spatial_mask = false;
    std::string gt_mode = "union";
    std::string out;
    std::string precision = "f64";
    std::size_t max_vocab = 0;
    unsigned threads = 0;
    std::string config;
};

template <typename Real>
int run_sweep_typed(const SweepArgs& a) {
    require_value(a.manifest, "--manifest");
    require_value(a.embeddings, "--embeddings");
    require_value(a.checkpoint, "--checkpoint");
    const auto fixed = vtg::FixedEmbeddingTable::load(a.embeddings, a.max_vocab);
    const auto corpus = vtg::load_corpus(a.manifest);
    const auto lexicon = vtg::Lexicon::defaults();
    const auto pc = vtg::prepare(corpus, fixed, lexicon, a.threads);
    const auto params = vtg::load_checkpoint<Real>(a.checkpoint);

    vtg::EvalOptions opt;
    opt.use_spatial_mask = !a.no_spatial_mask;
    opt.gt_mode = parse_gt_mode(a.gt_mode);
    opt.threads = a.threads;
    opt.checkpoint_id = fs::path(a.checkpoint).filename().string();

    const auto rows = vtg::sweep_omega(pc, params, parse_omegas(a.omegas), opt);
    std::string csv = "# checkpoint=" + opt.checkpoint_id + " mask=" + (opt.use_spatial_mask ? "on" : "off") +
                      " gt-mode=" + a.gt_mode + "\n";
    csv += "omega,accuracy,pointing_accuracy\n";
    for (const auto& r : rows)
        csv += format_fixed(r.omega) + "," + format_fixed(r.accuracy) + "," + format_fixed(r.pointing_accuracy) + "\n";
    emit(csv, a.out);
    return 0;
}

int run_sweep(const SweepArgs& a) {
    if (a.precision == "f64") return run_sweep_typed<double>(a);
    if (a.precision == "f32") return run_sweep_typed<float>(a);
    throw vtg::argument_error("precision must be 'f32' or 'f64', got '" + a.precision + "'");
}

struct AblateArgs {
    std::string manifest, embeddings, checkpoint;
    double omega = 0.4;
    std::string gt_mode = "union";
    std::string out;
    std::string precision = "f64";
    std::size_t max_vocab = 0;
    unsigned threads = 0;
    std::string config;
};

template <typename Real>
int run_ablate_typed(const AblateArgs& a) {
    require_value(a.manifest, "--manifest");
    require_value(a.embeddings, "--embeddings");
    require_value(a.checkpoint, "--checkpoint");
    const auto fixed = vtg::FixedEmbeddingTable::load(a.embeddings, a.max_vocab);
    const auto corpus = vtg::load_corpus(a.manifest);
    const auto lexicon = vtg::Lexicon::defaults();
    const auto pc = vtg::prepare(corpus, fixed, lexicon, a.threads);
    const auto params = vtg::load_checkpoint<Real>(a.checkpoint);

    vtg::EvalOptions opt;
    opt.omega = a.omega;
    opt.gt_mode = parse_gt_mode(a.gt_mode);
    opt.threads = a.threads;
    opt.checkpoint_id = fs::path(a.checkpoint).filename().string();

    const auto rows = vtg::ablation(pc, params, opt);
    std::string csv = "# checkpoint=" + opt.checkpoint_id + " omega=" + format_fixed(a.omega) +
                      " gt-mode=" + a.gt_mode + "\n";
    csv += "concept,trained,relative_position,accuracy,pointing_accuracy\n";
    for (const auto& r : rows) {
        csv += std::string(r.concept_branch ? "on" : "off") + "," + (r.trained ? "on" : "off") + "," +
               (r.relative_position ? "on" : "off") + "," + format_fixed(r.accuracy) + "," +
               format_fixed(r.pointing_accuracy) + "\n";
    }
    emit(csv, a.out);
    return 0;
}

int run_ablate(const AblateArgs& a) {
    if (a.precision == "f64") return run_ablate_typed<double>(a);
    if (a.precision == "f32") return run_ablate_typed<float>(a);
    throw vtg::argument_error("precision must be 'f32' or 'f64', got '" + a.precision + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly-supervised visual-textual grounding engine"};
    app.require_subcommand(1);

    GenDataArgs gen;
    ConfigBinder gen_binder;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic grounding corpus (train/val/test)");
    gen_binder.bind(gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory"),gen.out_dir,
                    "out-dir");
    gen_binder.bind(gen_cmd->add_option("--images", gen.images, "Training images"), gen.images, "images");
    gen_binder.bind(gen_cmd->add_option("--proposals", gen.proposals, "Proposals per image"), gen.proposals,
                    "proposals");
    gen_binder.bind(gen_cmd->add_option("--concepts", gen.concepts, "Comma-separated concept tokens"), gen.concepts,
                    "concepts");
    gen_binder.bind(gen_cmd->add_option("--noise", gen.noise, "Label noise probability"), gen.noise, "noise");
    gen_binder.bind(gen_cmd->add_option("--dup-rate", gen.dup_rate, "Same-label duplicate probability"), gen.dup_rate,
                    "dup-rate");
    gen_binder.bind(gen_cmd->add_option("--feature-dim", gen.feature_dim, "Proposal feature length"), gen.feature_dim,
                    "feature-dim");
    gen_binder.bind(gen_cmd->add_option("--embedding-dim", gen.embedding_dim, "Toy embedding dimension"),
                    gen.embedding_dim, "embedding-dim");
    gen_binder.bind(gen_cmd->add_option("--seed", gen.seed, "Generation seed"), gen.seed, "seed");
    gen_binder.bind(gen_cmd->add_option("--embeddings", gen.embeddings, "Existing embedding table (else a toy one is written)"),
                    gen.embeddings, "embeddings");
    gen_cmd->add_option("--config", gen.config, "JSON config file (flags override it)");

    TrainArgs tr;
    ConfigBinder tr_binder;
    auto* tr_cmd = app.add_subcommand("train", "Train the multimodal branches");
    tr_binder.bind(tr_cmd->add_option("--manifest", tr.manifest, "Training corpus manifest"),tr.manifest,
                   "manifest");
    tr_binder.bind(tr_cmd->add_option("--val-manifest", tr.val_manifest, "Validation corpus manifest"),
                   tr.val_manifest, "val-manifest");
    tr_binder.bind(tr_cmd->add_option("--embeddings", tr.embeddings, "Fixed word-embedding table"),
                   tr.embeddings, "embeddings");
    tr_binder.bind(tr_cmd->add_option("--out-dir", tr.out_dir, "Checkpoint/log directory"),tr.out_dir,
                   "out-dir");
    tr_binder.bind(tr_cmd->add_option("--omega", tr.omega, "Blend weight of the trained branch"), tr.omega, "omega");
    tr_binder.bind(tr_cmd->add_option("--lr", tr.lr, "Learning rate"), tr.lr, "lr");
    tr_binder.bind(tr_cmd->add_option("--epochs", tr.epochs, "Training epochs"), tr.epochs, "epochs");
    tr_binder.bind(tr_cmd->add_option("--batch-size", tr.batch_size, "Batch size (>= 2)"), tr.batch_size,
                   "batch-size");
    tr_binder.bind(tr_cmd->add_option("--seed", tr.seed, "Run seed"), tr.seed, "seed");
    tr_binder.bind(tr_cmd->add_option("--fraction", tr.fraction, "Training-data fraction in (0,1]"), tr.fraction,
                   "fraction");
    tr_binder.bind(tr_cmd->add_option("--epsilon-norm", tr.epsilon_norm, "Pair-aggregation denominator epsilon"),
                   tr.epsilon_norm, "epsilon-norm");
    tr_binder.bind(tr_cmd->add_option("--precision", tr.precision, "f32 or f64"), tr.precision, "precision");
    tr_binder.bind(tr_cmd->add_option("--optimizer", tr.optimizer, "sgd or adam"), tr.optimizer, "optimizer");
    tr_binder.bind(tr_cmd->add_option("--grad-clip", tr.grad_clip, "Global-norm gradient clip (0 = off)"),
                   tr.grad_clip, "grad-clip");
    tr_binder.bind(tr_cmd->add_flag("--no-spatial-mask", tr.no_spatial_mask, "Disable the relative-position mask"),
                   tr.no_spatial_mask, "no-spatial-mask");
    tr_binder.bind(tr_cmd->add_flag("--raw-scores", tr.raw_scores, "Aggregate unshifted blended scores"),
                   tr.raw_scores, "raw-scores");
    tr_binder.bind(tr_cmd->add_option("--init", tr.init, "Trainable embedding init: warm or random"), tr.init, "init");
    tr_binder.bind(tr_cmd->add_option("--signature-space", tr.signature_space,
                                      "Negative-mining space: fixed or trainable"),
                   tr.signature_space, "signature-space");
    tr_binder.bind(tr_cmd->add_option("--max-vocab", tr.max_vocab, "Truncate embedding table (0 = all)"), tr.max_vocab,
                   "max-vocab");
    tr_binder.bind(tr_cmd->add_option("--threads", tr.threads, "Worker threads (0 = cores)"), tr.threads, "threads");
    tr_cmd->add_option("--config", tr.config, "JSON config file (flags override it)");

    EvalArgs ev;
    ConfigBinder ev_binder;
    auto* ev_cmd = app.add_subcommand("eval", "Evaluate grounding accuracy on a corpus");
    ev_binder.bind(ev_cmd->add_option("--manifest", ev.manifest, "Corpus manifest"),ev.manifest,
                   "manifest");
    ev_binder.bind(ev_cmd->add_option("--embeddings", ev.embeddings, "Fixed word-embedding table"),
                   ev.embeddings, "embeddings");
    ev_binder.bind(ev_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint (omit for concept-only)"),
                   ev.checkpoint, "checkpoint");
    ev_binder.bind(ev_cmd->add_option("--omega", ev.omega, "Blend weight of the trained branch"), ev.omega, "omega");
    ev_binder.bind(ev_cmd->add_flag("--no-spatial-mask", ev.no_spatial_mask, "Disable the relative-position mask"),
                   ev.no_spatial_mask, "no-spatial-mask");
    ev_binder.bind(ev_cmd->add_option("--gt-mode", ev.gt_mode, "union or any-box"), ev.gt_mode, "gt-mode");
    ev_binder.bind(ev_cmd->add_option("--out", ev.out, "Write the JSON report here instead of stdout"), ev.out, "out");
    ev_binder.bind(ev_cmd->add_flag("--per-phrase", ev.per_phrase, "Include per-phrase records in the report"),
                   ev.per_phrase, "per-phrase");
    ev_binder.bind(ev_cmd->add_option("--precision", ev.precision, "f32 or f64"), ev.precision, "precision");
    ev_binder.bind(ev_cmd->add_option("--max-vocab", ev.max_vocab, "Truncate embedding table (0 = all)"), ev.max_vocab,
                   "max-vocab");
    ev_binder.bind(ev_cmd->add_option("--threads", ev.threads, "Worker threads (0 = cores)"), ev.threads, "threads");
    ev_cmd->add_option("--config", ev.config, "JSON config file (flags override it)");

    GroundArgs gr;
    ConfigBinder gr_binder;
    auto* gr_cmd = app.add_subcommand("ground", "Ground a raw sentence against one image");
    gr_binder.bind(gr_cmd->add_option("--manifest", gr.manifest, "Corpus manifest"),gr.manifest,
                   "manifest");
    gr_binder.bind(gr_cmd->add_option("--embeddings", gr.embeddings, "Fixed word-embedding table"),
                   gr.embeddings, "embeddings");
    gr_binder.bind(gr_cmd->add_option("--sentence", gr.sentence, "Sentence text"),gr.sentence,
                   "sentence");
    gr_binder.bind(gr_cmd->add_option("--image", gr.image, "Image id (default: first in corpus)"), gr.image, "image");
    gr_binder.bind(gr_cmd->add_option("--checkpoint", gr.checkpoint, "Model checkpoint"), gr.checkpoint, "checkpoint");
    gr_binder.bind(gr_cmd->add_flag("--concept-only", gr.concept_only, "Use the untrained branch alone"),
                   gr.concept_only, "concept-only");
    gr_binder.bind(gr_cmd->add_option("--omega", gr.omega, "Blend weight of the trained branch"), gr.omega, "omega");
    gr_binder.bind(gr_cmd->add_flag("--no-spatial-mask", gr.no_spatial_mask, "Disable the relative-position mask"),
                   gr.no_spatial_mask, "no-spatial-mask");
    gr_binder.bind(gr_cmd->add_option("--svg", gr.svg, "Write an SVG overlay here"), gr.svg, "svg");
    gr_binder.bind(gr_cmd->add_option("--out", gr.out, "Write the JSON result here instead of stdout"), gr.out, "out");
    gr_binder.bind(gr_cmd->add_option("--precision", gr.precision, "f32 or f64"), gr.precision, "precision");
    gr_binder.bind(gr_cmd->add_option("--max-vocab", gr.max_vocab, "Truncate embedding table (0 = all)"), gr.max_vocab,
                   "max-vocab");
    gr_cmd->add_option("--config", gr.config, "JSON config file (flags override it)");

    SweepArgs sw;
    ConfigBinder sw_binder;
    auto* sw_cmd = app.add_subcommand("sweep", "Accuracy across a grid of omega values");
    sw_binder.bind(sw_cmd->add_option("--manifest", sw.manifest, "Corpus manifest"),sw.manifest,
                   "manifest");
    sw_binder.bind(sw_cmd->add_option("--embeddings", sw.embeddings, "Fixed word-embedding table"),
                   sw.embeddings, "embeddings");
    sw_binder.bind(sw_cmd->add_option("--checkpoint", sw.checkpoint, "Model checkpoint"),sw.checkpoint,
                   "checkpoint");
    sw_binder.bind(sw_cmd->add_option("--omegas", sw.omegas, "Comma-separated omega grid"), sw.omegas, "omegas");
    sw_binder.bind(sw_cmd->add_flag("--no-spatial-mask", sw.no_spatial_mask, "Disable the relative-position mask"),
                   sw.no_spatial_mask, "no-spatial-mask");
    sw_binder.bind(sw_cmd->add_option("--gt-mode", sw.gt_mode, "union or any-box"), sw.gt_mode, "gt-mode");
    sw_binder.bind(sw_cmd->add_option("--out", sw.out, "Write the CSV here instead of stdout"), sw.out, "out");
    sw_binder.bind(sw_cmd->add_option("--precision", sw.precision, "f32 or f64"), sw.precision, "precision");
    sw_binder.bind(sw_cmd->add_option("--max-vocab", sw.max_vocab, "Truncate embedding table (0 = all)"), sw.max_vocab,
                   "max-vocab");
    sw_binder.bind(sw_cmd->add_option("--threads", sw.threads, "Worker threads (0 = cores)"), sw.threads, "threads");
    sw_cmd->add_option("--config", sw.config, "JSON config file (flags override it)");

    AblateArgs ab;
    ConfigBinder ab_binder;
    auto* ab_cmd = app.add_subcommand("ablate", "Component on/off accuracy table");
    ab_binder.bind(ab_cmd->add_option("--manifest", ab.manifest, "Corpus manifest"),ab.manifest,
                   "manifest");
    ab_binder.bind(ab_cmd->add_option("--embeddings", ab.embeddings, "Fixed word-embedding table"),
                   ab.embeddings, "embeddings");
    ab_binder.bind(ab_cmd->add_option("--checkpoint", ab.checkpoint, "Model checkpoint"),ab.checkpoint,
                   "checkpoint");
    ab_binder.bind(ab_cmd->add_option("--omega", ab.omega, "Blend weight for the blended rows"), ab.omega, "omega");
    ab_binder.bind(ab_cmd->add_option("--gt-mode", ab.gt_mode, "union or any-box"), ab.gt_mode, "gt-mode");
    ab_binder.bind(ab_cmd->add_option("--out", ab.out, "Write the CSV here instead of stdout"), ab.out, "out");
    ab_binder.bind(ab_cmd->add_option("--precision", ab.precision, "f32 or f64"), ab.precision, "precision");
    ab_binder.bind(ab_cmd->add_option("--max-vocab", ab.max_vocab, "Truncate embedding table (0 = all)"), ab.max_vocab,
                   "max-vocab");
    ab_binder.bind(ab_cmd->add_option("--threads", ab.threads, "Worker threads (0 = cores)"), ab.threads, "threads");
    ab_cmd->add_option("--config", ab.config, "JSON config file (flags override it)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, exits 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 1;
    }

    try {
        if (*gen_cmd) {
            gen_binder.apply(gen.config);
            return run_gen_data(gen);
        }
        if (*tr_cmd) {
            tr_binder.apply(tr.config);
            return run_train(tr);
        }
        if (*ev_cmd) {
            ev_binder.apply(ev.config);
            return run_eval(ev);
        }
        if (*gr_cmd) {
            gr_binder.apply(gr.config);
            return run_ground(gr);
        }
        if (*sw_cmd) {
            sw_binder.apply(sw.config);
            return run_sweep(sw);
        }
        if (*ab_cmd) {
            ab_binder.apply(ab.config);
            return run_ablate(ab);
        }
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const vtg::argument_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const vtg::parse_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const vtg::validation_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const vtg::config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 2;
    }
}
