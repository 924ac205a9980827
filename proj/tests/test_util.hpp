#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mmfuse/features.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        const auto base = std::filesystem::temp_directory_path();
        Rng rng(static_cast<std::uint64_t>(std::hash<std::string>{}(base.string())) + ++counter);
        do {
            path_ = base / ("mmfuse_test_" + std::to_string(rng.next_u64() % 1000000000ull));
        } while (std::filesystem::exists(path_));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = static_cast<float>(scale * rng.normal());
    return v;
}

/// Gaussian bundle satisfying every schema invariant.
inline FeatureBundle random_bundle(Rng& rng, Index valid_tokens, Index valid_regions, int label = 1) {
    using namespace schema;
    FeatureBundle b;
    b.id = "s" + std::to_string(rng.below(1000000));
    b.label = label;
    b.valid_tokens = valid_tokens;
    b.valid_regions = valid_regions;
    b.tokens = Matrix::Zero(kSeqLen, kTokenDim);
    b.regions = Matrix::Zero(kSeqLen, kRegionDim);
    b.geometry = Matrix::Zero(kSeqLen, kGeometryDim);
    for (Index r = 0; r < valid_tokens; ++r) b.tokens.row(r) = random_vector(kTokenDim, rng);
    for (Index r = 0; r < valid_regions; ++r) {
        b.regions.row(r) = random_vector(kRegionDim, rng);
        for (Index c = 0; c < kGeometryDim; ++c) b.geometry(r, c) = static_cast<float>(rng.uniform());
    }
    b.pair_txt = random_vector(kPairDim, rng);
    b.pair_img = random_vector(kPairDim, rng);
    b.tox = Vector(kToxDim);
    for (Index i = 0; i < kToxDim; ++i) b.tox[i] = static_cast<float>(rng.uniform());
    b.nsfw = Vector(kNsfwDim);
    for (Index i = 0; i < kNsfwDim; ++i) b.nsfw[i] = static_cast<float>(rng.uniform());
    b.cap = random_vector(kCapDim, rng);
    b.raw_text = "some text";
    return b;
}

struct MslCase {
    int count;
    std::string text;
};

/// Reads "count<TAB>sentence" lines.
inline std::vector<MslCase> load_msl_cases(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<MslCase> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        out.push_back({std::stoi(line.substr(0, tab)), line.substr(tab + 1)});
    }
    return out;
}

} // namespace mmfuse::test
