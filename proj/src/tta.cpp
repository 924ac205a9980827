#include "mmfuse/tta.hpp"

#include <cmath>

#include "mmfuse/error.hpp"

namespace mmfuse {

void TtaConfig::validate() const {
    if (n_aug < 1) throw ArgumentError("tta: n_aug must be >= 1");
    if (!(band_lo >= -1.0 && band_lo <= band_hi && band_hi <= 1.0)) {
        throw ArgumentError("tta: band must satisfy -1 <= lo <= hi <= 1");
    }
    if (!(p0_scale >= 0.0) || !std::isfinite(p0_scale)) throw ArgumentError("tta: p0 must be >= 0");
    if (!(growth > 1.0) || !std::isfinite(growth)) throw ArgumentError("tta: growth must exceed 1");
    if (max_tries < 1 || max_cycles < 1) throw ArgumentError("tta: try limits must be positive");
}

Matrix rand_perturb(const Matrix& x, double p, Rng& rng) {
    if (!(p >= 0.0)) throw ArgumentError("rand_perturb: p must be >= 0");
    if (p == 0.0) return x;
    Matrix out = x;
    for (Index i = 0; i < out.size(); ++i) {
        out.data()[i] += static_cast<float>(rng.uniform(-p, p));
    }
    return out;
}

double seq_cosine(const Matrix& a, const Matrix& b, std::vector<std::string>* warnings) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("seq_cosine: " + shape_str(a) + " vs " + shape_str(b));
    }
    if (a.rows() == 0) throw DimensionError("seq_cosine: empty input");
    const Vector ma = a.cast<double>().colwise().mean().cast<float>();
    const Vector mb = b.cast<double>().colwise().mean().cast<float>();
    return cosine_similarity(ma, mb, warnings);
}

namespace {

struct Search {
    bool ok = false;
    Matrix value;
    double similarity = 0.0;
};

Search search_band(const Matrix& x, const TtaConfig& cfg, Rng& rng) {
    Search s;
    const double rms = std::sqrt(x.cast<double>().squaredNorm() / static_cast<double>(x.size()));
    const double p0 = cfg.p0_scale * rms;
    for (int cycle = 0; cycle < cfg.max_cycles; ++cycle) {
        double p = p0;
        double too_small = 0.0; // largest p seen with similarity above the band
        double too_large = -1.0; // smallest p seen below the band, < 0 if none
        for (int t = 0; t < cfg.max_tries; ++t) {
            Matrix y = rand_perturb(x, p, rng);
            const double c = seq_cosine(x, y);
            if (c >= cfg.band_lo && c <= cfg.band_hi) {
                s.ok = true;
                s.value = std::move(y);
                s.similarity = c;
                return s;
            }
            if (c > cfg.band_hi) {
                too_small = std::max(too_small, p);
                p = too_large < 0.0 ? p * cfg.growth : 0.5 * (p + too_large);
            } else {
                too_large = too_large < 0.0 ? p : std::min(too_large, p);
                p = 0.5 * (too_small + too_large);
            }
        }
    }
    return s;
}

} // namespace

AugmentedSample augment_sample(const Sample& s, const TtaConfig& cfg, Rng& rng) {
    cfg.validate();
    AugmentedSample out;
    const Matrix originals[4] = {s.tokens, s.regions, s.pair_txt, s.pair_img};
    for (std::size_t t = 0; t < 4; ++t) {
        if (originals[t].squaredNorm() == 0.0f) {
            out.skipped = true;
            out.skip_reason = std::string(kTtaTensors[t]) + " has zero norm";
            return out;
        }
    }
    for (int k = 0; k < cfg.n_aug; ++k) {
        AugmentedCopy copy;
        Matrix found[4];
        for (std::size_t t = 0; t < 4; ++t) {
            Search r = search_band(originals[t], cfg, rng);
            if (!r.ok) {
                out.copies.clear();
                out.skipped = true;
                out.skip_reason = std::string(kTtaTensors[t]) + ": no perturbation reached the band";
                return out;
            }
            found[t] = std::move(r.value);
            copy.similarity[t] = r.similarity;
        }
        copy.tokens = std::move(found[0]);
        copy.regions = std::move(found[1]);
        copy.pair_txt = found[2];
        copy.pair_img = found[3];
        out.copies.push_back(std::move(copy));
    }
    return out;
}

Sample materialize(const Sample& orig, const AugmentedCopy& copy, const Graphs& graphs) {
    Sample s = orig;
    s.tokens = copy.tokens;
    s.regions = copy.regions;
    s.pair_txt = copy.pair_txt;
    s.pair_img = copy.pair_img;
    attach_neighbors(s, graphs);
    return s;
}

int aggregate_class(std::span<const double> probs, TtaAggregation how, double* mean_out) {
    if (probs.empty()) throw ArgumentError("aggregate_class: no probabilities");
    double sum = 0.0;
    int votes = 0;
    for (double p : probs) {
        sum += p;
        votes += decide(p);
    }
    const double mean = sum / static_cast<double>(probs.size());
    if (mean_out) *mean_out = mean;
    if (how == TtaAggregation::MeanProb) return decide(mean);
    return 2 * votes >= static_cast<int>(probs.size()) ? 1 : 0;
}

Prediction tta_predict(TrainedModel& model, const Sample& s, const TtaConfig& cfg, Rng& rng) {
    Prediction p;
    p.id = s.id;
    p.label = s.label;
    p.members.push_back(predict_one(model.params, model.model, s));
    const AugmentedSample aug = augment_sample(s, cfg, rng);
    p.tta_skipped = aug.skipped;
    for (const auto& copy : aug.copies) {
        p.members.push_back(predict_one(model.params, model.model, materialize(s, copy, model.graphs)));
        p.similarity.push_back(copy.similarity);
    }
    p.pred = aggregate_class(p.members, cfg.aggregation, &p.prob);
    return p;
}

} // namespace mmfuse
