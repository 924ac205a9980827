#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmfuse/features.hpp"
#include "mmfuse/lexicon.hpp"

namespace mmfuse {

struct SynthConfig {
    int n_per_class = 10;
    double separation = 2.0;
    std::uint64_t seed = 0;
    Index max_tokens = 2;  // valid token rows drawn uniformly from 1..max_tokens
    Index max_regions = 2; // likewise for regions
};

/// Ten mild terms shipped with every synthetic dataset as lexicon.txt.
const std::vector<std::string>& synth_lexicon_terms();

struct SynthDataset {
    std::vector<FeatureBundle> train;
    std::vector<FeatureBundle> test;
    double msl_min = 0.0; // over the train split
    double msl_max = 0.0;
};

/// Class-conditional Gaussian data. For each field a per-class direction u_c
/// with N(0, 1) entries is drawn once; a sample of class c is
/// separation * k * u_c + N(0, 1) noise (k = 1 for pair vectors, 0.5
/// otherwise; tox and nsfw pass through a logistic). Texts mix filler words
/// with lexicon terms at a class-dependent rate. Each class contributes
/// floor(n / 5) test samples and the rest to train; both splits are shuffled.
SynthDataset synth_dataset(const SynthConfig& cfg);

/// Writes train.json, test.json, lexicon.txt and features/ under `dir`.
void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& data);

} // namespace mmfuse
