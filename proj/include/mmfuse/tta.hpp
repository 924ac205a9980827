#pragma once

#include <array>
#include <string>
#include <vector>

#include "mmfuse/train.hpp"

namespace mmfuse {

enum class TtaAggregation { MeanProb, Majority };

struct TtaConfig {
    int n_aug = 4;
    double band_lo = 0.6;
    double band_hi = 0.7;
    double p0_scale = 0.1; // initial half-range = p0_scale * RMS of the tensor
    double growth = 1.5;
    int max_tries = 64;    // per search cycle
    int max_cycles = 8;    // cycles before the sample is skipped
    TtaAggregation aggregation = TtaAggregation::MeanProb;

    /// Requires -1 <= band_lo <= band_hi <= 1, n_aug >= 1, p0_scale >= 0,
    /// growth > 1 and positive try limits.
    void validate() const;
};

/// x + r with r entries drawn from U(-p, p). p == 0 returns x unchanged.
Matrix rand_perturb(const Matrix& x, double p, Rng& rng);

/// Cosine similarity of the row means of a and b; single rows compare directly.
double seq_cosine(const Matrix& a, const Matrix& b, std::vector<std::string>* warnings = nullptr);

/// The four perturbed tensors, in this order.
inline constexpr std::array<const char*, 4> kTtaTensors = {"tokens", "regions", "pair_txt", "pair_img"};

struct AugmentedCopy {
    Matrix tokens;  // valid rows only
    Matrix regions;
    Vector pair_txt;
    Vector pair_img;
    std::array<double, 4> similarity{}; // achieved seq_cosine per tensor
};

struct AugmentedSample {
    std::vector<AugmentedCopy> copies;
    bool skipped = false;
    std::string skip_reason;
};

/// Searches a perturbation half-range per copy and tensor until the perturbed
/// tensor's seq_cosine to the original lies in the band. The search starts at
/// p0 and grows geometrically until it overshoots, then bisects; every try
/// draws fresh noise. A cycle that exhausts max_tries restarts from p0. If
/// max_cycles pass, or a tensor has zero norm, the sample is skipped.
AugmentedSample augment_sample(const Sample& s, const TtaConfig& cfg, Rng& rng);

/// Copy of `orig` with one augmentation's tensors swapped in and neighbour
/// means recomputed against `graphs`. Content and geometry are shared.
Sample materialize(const Sample& orig, const AugmentedCopy& copy, const Graphs& graphs);

struct Prediction {
    std::string id;
    int label = 0;
    double prob = 0.0;
    int pred = 0;
    std::vector<double> members;                    // original first, then copies
    std::vector<std::array<double, 4>> similarity;  // per copy
    bool tta_skipped = false;
};

/// Decision rule shared by every prediction path.
inline int decide(double prob) { return prob >= 0.5 ? 1 : 0; }

/// Aggregated prediction over the original and its augmentations. Skipped
/// samples fall back to the original alone.
Prediction tta_predict(TrainedModel& model, const Sample& s, const TtaConfig& cfg, Rng& rng);

/// Mean of probabilities (accumulated in double) or majority vote with ties
/// going to the positive class.
int aggregate_class(std::span<const double> probs, TtaAggregation how, double* mean_out = nullptr);

} // namespace mmfuse
