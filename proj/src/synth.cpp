#include "mmfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mmfuse/error.hpp"
#include "mmfuse/msl.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kFiller = {
    "the",   "a",     "when",  "you",    "she",   "he",    "they",  "my",    "your",
    "is",    "was",   "just",  "really", "like",  "meme",  "today", "again", "work",
    "home",  "cat",   "dog",   "coffee", "monday", "boss", "friend", "car",  "phone",
    "never", "always", "look", "me",     "wife",  "mom",   "girl",  "time",  "every"};

const char kPunct[] = {',', '.', '!', '?', ':'};

struct ClassMeans {
    // [class] -> direction
    Vector tokens[2], regions[2], pair_txt[2], pair_img[2], tox[2], nsfw[2], cap[2];
};

Vector gaussian(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = static_cast<float>(rng.normal());
    return v;
}

ClassMeans draw_means(const Rng& root) {
    using namespace schema;
    ClassMeans m;
    for (int c = 0; c < 2; ++c) {
        Rng r = root.split("means").split(static_cast<std::uint64_t>(c));
        m.tokens[c] = gaussian(kTokenDim, r);
        m.regions[c] = gaussian(kRegionDim, r);
        m.pair_txt[c] = gaussian(kPairDim, r);
        m.pair_img[c] = gaussian(kPairDim, r);
        m.tox[c] = gaussian(kToxDim, r);
        m.nsfw[c] = gaussian(kNsfwDim, r);
        m.cap[c] = gaussian(kCapDim, r);
    }
    return m;
}

Vector shifted(const Vector& dir, double shift, Rng& rng) {
    Vector v(dir.size());
    for (Index i = 0; i < dir.size(); ++i) {
        v[i] = static_cast<float>(shift * dir[i] + rng.normal());
    }
    return v;
}

Vector logistic(Vector v) {
    for (Index i = 0; i < v.size(); ++i) v[i] = 1.0f / (1.0f + std::exp(-v[i]));
    return v;
}

std::string decorate(std::string w, Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.15) {
        w[0] = static_cast<char>(w[0] - 'a' + 'A');
    } else if (u < 0.2) {
        for (char& ch : w) ch = static_cast<char>(ch - 'a' + 'A');
    }
    if (rng.uniform() < 0.15) w.push_back(kPunct[rng.below(std::size(kPunct))]);
    return w;
}

std::string make_text(int label, double sep, Rng& rng) {
    const auto& lex = synth_lexicon_terms();
    const double q = label == 0 ? 0.2 : 0.2 + 0.6 * (1.0 - std::exp(-sep / 2.0));
    std::vector<std::string> words;
    const auto n_filler = 5 + rng.below(8);
    for (std::uint64_t i = 0; i < n_filler; ++i) words.push_back(kFiller[rng.below(kFiller.size())]);
    for (int i = 0; i < 3; ++i) {
        if (rng.uniform() < q) words.push_back(lex[rng.below(lex.size())]);
    }
    // Fisher-Yates
    for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng.below(i)]);
    std::string out;
    if (rng.uniform() < 0.1) out = "@user ";
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += decorate(words[i], rng);
    }
    if (rng.uniform() < 0.1) out += " https://t.co/x" + std::to_string(rng.below(1000));
    return out;
}

Matrix geometry_rows(Index n, Rng& rng) {
    Matrix g = Matrix::Zero(schema::kSeqLen, schema::kGeometryDim);
    const double aspect = rng.uniform(0.5, 2.0);
    for (Index r = 0; r < n; ++r) {
        const double x1 = rng.uniform(0.0, 0.7);
        const double y1 = rng.uniform(0.0, 0.7);
        const double w = rng.uniform(0.05, 1.0 - x1);
        const double h = rng.uniform(0.05, 1.0 - y1);
        g.row(r) << static_cast<float>(x1), static_cast<float>(y1), static_cast<float>(x1 + w),
            static_cast<float>(y1 + h), static_cast<float>(w * h),
            static_cast<float>(aspect / (1.0 + aspect));
    }
    return g;
}

FeatureBundle make_sample(int label, const ClassMeans& means, const SynthConfig& cfg, Rng& rng) {
    using namespace schema;
    const double s = cfg.separation;
    FeatureBundle b;
    b.label = label;
    b.valid_tokens = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.max_tokens)));
    b.valid_regions = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.max_regions)));
    b.tokens = Matrix::Zero(kSeqLen, kTokenDim);
    for (Index r = 0; r < b.valid_tokens; ++r) b.tokens.row(r) = shifted(means.tokens[label], 0.5 * s, rng);
    b.regions = Matrix::Zero(kSeqLen, kRegionDim);
    for (Index r = 0; r < b.valid_regions; ++r) b.regions.row(r) = shifted(means.regions[label], 0.5 * s, rng);
    b.geometry = geometry_rows(b.valid_regions, rng);
    b.pair_txt = shifted(means.pair_txt[label], s, rng);
    b.pair_img = shifted(means.pair_img[label], s, rng);
    b.tox = logistic(shifted(means.tox[label], 0.5 * s, rng));
    b.nsfw = logistic(shifted(means.nsfw[label], 0.5 * s, rng));
    b.cap = shifted(means.cap[label], 0.5 * s, rng);
    b.raw_text = make_text(label, s, rng);
    return b;
}

void shuffle(std::vector<FeatureBundle>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

} // namespace

const std::vector<std::string>& synth_lexicon_terms() {
    static const std::vector<std::string> terms = {"harpy", "shrew", "hag",   "witch",  "crone",
                                                   "vixen", "nag",   "bimbo", "floozy", "harridan"};
    return terms;
}

SynthDataset synth_dataset(const SynthConfig& cfg) {
    if (cfg.n_per_class < 1) throw ArgumentError("synth: n_per_class must be >= 1");
    if (!(cfg.separation >= 0.0) || !std::isfinite(cfg.separation)) {
        throw ArgumentError("synth: separation must be finite and >= 0");
    }
    if (cfg.max_tokens < 1 || cfg.max_tokens > schema::kSeqLen || cfg.max_regions < 1 ||
        cfg.max_regions > schema::kSeqLen) {
        throw ArgumentError("synth: max_tokens and max_regions must lie in 1.." +
                            std::to_string(schema::kSeqLen));
    }
    const Rng root(cfg.seed);
    const ClassMeans means = draw_means(root);
    const Rng sample_root = root.split("samples");

    SynthDataset out;
    const int n_test = cfg.n_per_class / 5;
    std::uint64_t k = 0;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < cfg.n_per_class; ++i) {
            Rng rng = sample_root.split(k++);
            FeatureBundle b = make_sample(c, means, cfg, rng);
            (i < n_test ? out.test : out.train).push_back(std::move(b));
        }
    }
    Rng order = root.split("shuffle");
    shuffle(out.train, order);
    shuffle(out.test, order);
    char buf[32];
    for (std::size_t i = 0; i < out.train.size(); ++i) {
        std::snprintf(buf, sizeof buf, "tr%05zu", i);
        out.train[i].id = buf;
    }
    for (std::size_t i = 0; i < out.test.size(); ++i) {
        std::snprintf(buf, sizeof buf, "te%05zu", i);
        out.test[i].id = buf;
    }

    Lexicon lex;
    for (const auto& t : synth_lexicon_terms()) lex.add(t);
    bool first = true;
    for (const auto& b : out.train) {
        const double n = msl_score_raw(b.raw_text, lex);
        out.msl_min = first ? n : std::min(out.msl_min, n);
        out.msl_max = first ? n : std::max(out.msl_max, n);
        first = false;
    }
    return out;
}

void write_synth_dataset(const fs::path& dir, const SynthDataset& data) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create directory " + dir.string());
    }
    {
        std::ofstream lex(dir / "lexicon.txt", std::ios::trunc);
        if (!lex) throw IoError("cannot write " + (dir / "lexicon.txt").string());
        for (const auto& t : synth_lexicon_terms()) lex << t << '\n';
    }
    auto write_split = [&](const char* name, const std::vector<FeatureBundle>& samples) {
        Manifest m;
        m.split = name;
        m.msl_min = data.msl_min;
        m.msl_max = data.msl_max;
        for (const auto& b : samples) m.samples.push_back(save_bundle(dir, "features", b));
        save_manifest(dir / (std::string(name) + ".json"), m);
    };
    write_split("train", data.train);
    write_split("test", data.test);
}

} // namespace mmfuse
