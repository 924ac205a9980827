#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmfuse/checkpoint.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/evaluate.hpp"
#include "mmfuse/msl.hpp"
#include "mmfuse/synth.hpp"

namespace mmfuse::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct SynthArgs {
    std::string out;
    int n = 10;
    double sep = 2.0;
    std::uint64_t seed = 0;
    int max_tokens = 2;
    int max_regions = 2;
};

struct TrainArgs {
    std::string data;
    std::string out;
    std::string loss_log;
    std::string lexicon;
    TrainConfig cfg;
    bool quiet = false;
};

struct EvalArgs {
    std::string data;
    std::string checkpoint;
    std::string out;
    std::string split = "test";
    bool tta = false;
    std::string aggregation = "mean";
    std::string band = "0.6:0.7";
    int n_aug = 4;
    double p0 = 0.1;
    std::uint64_t seed = 0;
    bool verbose = false;
};

struct MslArgs {
    std::string text;
    std::string lexicon;
    std::optional<double> lo;
    std::optional<double> hi;
};

struct GraphArgs {
    std::string data;
    std::string split = "train";
    double thr = 0.85;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

std::vector<FeatureBundle> load_split(const fs::path& manifest_path, Manifest* manifest = nullptr) {
    Manifest m = load_manifest(manifest_path);
    std::vector<FeatureBundle> out;
    out.reserve(m.samples.size());
    for (const auto& e : m.samples) out.push_back(load_bundle(m, e));
    if (manifest) *manifest = std::move(m);
    return out;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SynthConfig cfg;
    cfg.n_per_class = a.n;
    cfg.separation = a.sep;
    cfg.seed = a.seed;
    cfg.max_tokens = a.max_tokens;
    cfg.max_regions = a.max_regions;
    const SynthDataset d = synth_dataset(cfg);
    write_synth_dataset(a.out, d);
    const json echo = {{"n", a.n},
                       {"sep", a.sep},
                       {"seed", a.seed},
                       {"max_tokens", a.max_tokens},
                       {"max_regions", a.max_regions}};
    write_text(fs::path(a.out) / "synth.json", echo.dump(2) + "\n");
    auto positives = [](const std::vector<FeatureBundle>& v) {
        long n = 0;
        for (const auto& b : v) n += b.label;
        return n;
    };
    out << "train " << d.train.size() << " (" << positives(d.train) << " positive)\n"
        << "test  " << d.test.size() << " (" << positives(d.test) << " positive)\n"
        << "msl range [" << d.msl_min << ", " << d.msl_max << "]\n";
    return kOk;
}

json train_config_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size}, {"lr", c.lr},     {"epochs", c.epochs},
            {"dropout_p", c.dropout_p},   {"seed", c.seed}, {"thr", c.thr}};
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const fs::path data(a.data);
    Manifest manifest;
    const auto bundles = load_split(data / "train.json", &manifest);
    const Lexicon lexicon = load_lexicon(a.lexicon.empty() ? data / "lexicon.txt" : fs::path(a.lexicon));
    char line[64];
    const auto result = train_model(bundles, lexicon, manifest.msl_min, manifest.msl_max, a.cfg, {},
                                    [&](int epoch, double loss) {
                                        if (a.quiet) return;
                                        std::snprintf(line, sizeof line, "epoch %4d  loss %.6f\n", epoch, loss);
                                        out << line << std::flush;
                                    });
    save_checkpoint(a.out, result.model);
    const json log = {{"config", train_config_json(a.cfg)},
                      {"data", a.data},
                      {"samples", bundles.size()},
                      {"loss", result.loss_log}};
    const fs::path log_path = a.loss_log.empty() ? fs::path(a.out + ".loss.json") : fs::path(a.loss_log);
    write_text(log_path, log.dump(2) + "\n");
    out << "checkpoint " << a.out << "\nloss log   " << log_path.string() << "\n";
    return kOk;
}

std::pair<double, double> parse_band(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ArgumentError("--tta-band expects lo:hi, got '" + s + "'");
    try {
        std::size_t used_lo = 0, used_hi = 0;
        const std::string lo = s.substr(0, colon), hi = s.substr(colon + 1);
        const double l = std::stod(lo, &used_lo);
        const double h = std::stod(hi, &used_hi);
        if (used_lo != lo.size() || used_hi != hi.size()) throw std::invalid_argument(s);
        return {l, h};
    } catch (const std::logic_error&) {
        throw ArgumentError("--tta-band expects lo:hi, got '" + s + "'");
    }
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    TtaConfig tta;
    if (a.tta) {
        std::tie(tta.band_lo, tta.band_hi) = parse_band(a.band);
        tta.n_aug = a.n_aug;
        tta.p0_scale = a.p0;
        tta.aggregation = a.aggregation == "majority" ? TtaAggregation::Majority : TtaAggregation::MeanProb;
        tta.validate();
    }
    TrainedModel model = load_checkpoint(a.checkpoint);
    const auto bundles = load_split(fs::path(a.data) / (a.split + ".json"));
    const EvalResult r = evaluate(model, bundles, a.tta ? &tta : nullptr, a.seed);

    json cfg = {{"data", a.data}, {"split", a.split}, {"checkpoint", a.checkpoint}, {"seed", a.seed}};
    if (a.tta) {
        cfg["tta"] = {{"n_aug", tta.n_aug},
                      {"band_lo", tta.band_lo},
                      {"band_hi", tta.band_hi},
                      {"p0_scale", tta.p0_scale},
                      {"growth", tta.growth},
                      {"max_tries", tta.max_tries},
                      {"max_cycles", tta.max_cycles},
                      {"aggregation", a.aggregation}};
    }
    const fs::path json_path = a.out.empty() ? fs::path(a.checkpoint + ".metrics.json") : fs::path(a.out);
    write_text(json_path, eval_json(r, cfg.dump(), a.verbose));

    out << format_metrics_table(r.metrics);
    if (r.tta) out << "tta skipped " << r.tta_skipped << "\n";
    if (a.verbose && r.tta) {
        char line[160];
        for (const auto& p : r.predictions) {
            for (std::size_t k = 0; k < p.similarity.size(); ++k) {
                const auto& s = p.similarity[k];
                std::snprintf(line, sizeof line, "%s copy %zu  tokens %.4f regions %.4f pair_txt %.4f pair_img %.4f\n",
                              p.id.c_str(), k + 1, s[0], s[1], s[2], s[3]);
                out << line;
            }
        }
    }
    out << "metrics json " << json_path.string() << "\n";
    return kOk;
}

int cmd_msl(const MslArgs& a, std::ostream& out) {
    const Lexicon lexicon = load_lexicon(a.lexicon);
    std::ifstream in(a.text, std::ios::binary);
    if (!in) throw IoError("cannot open " + a.text);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    std::vector<int> counts;
    for (const auto& l : lines) counts.push_back(msl_score_raw(l, lexicon));
    double lo = a.lo.value_or(0.0), hi = a.hi.value_or(0.0);
    if (!counts.empty()) {
        if (!a.lo) lo = *std::min_element(counts.begin(), counts.end());
        if (!a.hi) hi = *std::max_element(counts.begin(), counts.end());
    }
    if (lo > hi) throw ArgumentError("--min exceeds --max");
    char buf[64];
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu\t%d\t%.6f\n", i + 1, counts[i], msl_normalize(counts[i], lo, hi));
        out << buf;
    }
    return kOk;
}

int cmd_graph_stats(const GraphArgs& a, std::ostream& out) {
    const auto bundles = load_split(fs::path(a.data) / (a.split + ".json"));
    const Index n = static_cast<Index>(bundles.size());
    for (Modality m : {Modality::Text, Modality::Image}) {
        Matrix emb(n, schema::kPairDim);
        for (Index i = 0; i < n; ++i) {
            const auto& b = bundles[static_cast<std::size_t>(i)];
            emb.row(i) = m == Modality::Text ? b.pair_txt : b.pair_img;
        }
        const SimilarityGraph g = build_graph(emb, a.thr, m);
        const auto deg = g.degrees();
        std::map<Index, long> hist;
        long isolated = 0;
        for (Index d : deg) {
            ++hist[d];
            isolated += d == 0;
        }
        out << "modality " << modality_tag(m) << "\n"
            << "  nodes    " << g.size() << "\n"
            << "  thr      " << a.thr << "\n"
            << "  edges    " << g.edge_count() << "\n"
            << "  isolated " << isolated << "\n"
            << "  degree histogram (degree: nodes)\n";
        for (const auto& [d, c] : hist) out << "    " << d << ": " << c << "\n";
        for (const auto& w : g.warnings()) out << "  warning: " << w << "\n";
    }
    return kOk;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal fusion classifier over precomputed features", "mmfuse"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--n", sa.n, "Samples per class")->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--sep", sa.sep, "Class separation")->check(CLI::NonNegativeNumber)->capture_default_str();
    synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
    synth->add_option("--max-tokens", sa.max_tokens, "Max valid token rows")->check(CLI::Range(1, 100))->capture_default_str();
    synth->add_option("--max-regions", sa.max_regions, "Max valid region rows")->check(CLI::Range(1, 100))->capture_default_str();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train on <data>/train.json");
    train->add_option("--data", ta.data, "Dataset directory")->required();
    train->add_option("--out", ta.out, "Checkpoint path")->required();
    train->add_option("--epochs", ta.cfg.epochs, "Epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
    train->add_option("--seed", ta.cfg.seed, "Random seed")->capture_default_str();
    train->add_option("--thr", ta.cfg.thr, "Graph similarity threshold")->check(CLI::Range(-1.0, 1.0))->capture_default_str();
    train->add_option("--batch-size", ta.cfg.batch_size, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--lr", ta.cfg.lr, "Adam learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
    train->add_option("--dropout", ta.cfg.dropout_p, "Head dropout probability")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
    train->add_option("--loss-log", ta.loss_log, "Loss log path (default <out>.loss.json)");
    train->add_option("--lexicon", ta.lexicon, "Lexicon file (default <data>/lexicon.txt)");
    train->add_flag("--quiet", ta.quiet, "No per-epoch output");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--data", ea.data, "Dataset directory")->required();
    eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint path")->required();
    eval->add_option("--out", ea.out, "Metrics JSON path (default <checkpoint>.metrics.json)");
    eval->add_option("--split", ea.split, "Manifest to evaluate")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
    eval->add_flag("--tta", ea.tta, "Test-time augmentation");
    eval->add_option("--tta-aggregation", ea.aggregation, "mean or majority")->check(CLI::IsMember({"mean", "majority"}))->capture_default_str();
    eval->add_option("--tta-band", ea.band, "Cosine band lo:hi")->capture_default_str();
    eval->add_option("--tta-n", ea.n_aug, "Augmentations per sample")->check(CLI::PositiveNumber)->capture_default_str();
    eval->add_option("--tta-p0", ea.p0, "Initial half-range as a multiple of the tensor RMS")->check(CLI::NonNegativeNumber)->capture_default_str();
    eval->add_option("--seed", ea.seed, "TTA random seed")->capture_default_str();
    eval->add_flag("--verbose", ea.verbose, "Per-sample similarities");

    MslArgs ma;
    auto* msl = app.add_subcommand("msl", "Lexicon counts per line as TSV: line, count, score");
    msl->add_option("--text", ma.text, "Text file, one text per line")->required();
    msl->add_option("--lexicon", ma.lexicon, "Lexicon file")->required();
    msl->add_option("--min", ma.lo, "Normalisation minimum (default: min count in the file)");
    msl->add_option("--max", ma.hi, "Normalisation maximum (default: max count in the file)");

    GraphArgs ga;
    auto* graph = app.add_subcommand("graph-stats", "Similarity graph statistics");
    graph->add_option("--data", ga.data, "Dataset directory")->required();
    graph->add_option("--thr", ga.thr, "Similarity threshold")->check(CLI::Range(-1.0, 1.0))->capture_default_str();
    graph->add_option("--split", ga.split, "Manifest")->check(CLI::IsMember({"train", "test"}))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return cmd_synth(sa, out);
        if (*train) return cmd_train(ta, out);
        if (*eval) return cmd_eval(ea, out);
        if (*msl) return cmd_msl(ma, out);
        if (*graph) return cmd_graph_stats(ga, out);
    } catch (const SchemaError& e) {
        err << "schema error: " << e.what() << "\n";
        return kSchema;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kCheckpoint;
    } catch (const LexiconError& e) {
        err << "lexicon error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

} // namespace mmfuse::cli
