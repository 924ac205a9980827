#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmfuse/tensor.hpp"

namespace mmfuse {

/// Fixed feature schema. Token and region sequences shorter than kSeqLen are
/// zero-padded on load; the number of real rows is kept alongside.
namespace schema {
inline constexpr Index kSeqLen = 100;
inline constexpr Index kTokenDim = 768;
inline constexpr Index kRegionDim = 1024;
inline constexpr Index kGeometryDim = 6;
inline constexpr Index kPairDim = 512;
inline constexpr Index kToxDim = 6;
inline constexpr Index kNsfwDim = 5;
inline constexpr Index kCapDim = 512;
} // namespace schema

/// One sample's precomputed inputs.
///
/// geometry rows are (x1, y1, x2, y2, area fraction, a / (1 + a)) for image
/// aspect ratio a, all in [0, 1].
struct FeatureBundle {
    std::string id;
    Matrix tokens;   // kSeqLen x kTokenDim, rows >= valid_tokens are zero
    Matrix regions;  // kSeqLen x kRegionDim
    Matrix geometry; // kSeqLen x kGeometryDim
    Vector pair_txt; // kPairDim
    Vector pair_img; // kPairDim
    Vector tox;      // kToxDim
    Vector nsfw;     // kNsfwDim
    Vector cap;      // kCapDim
    std::string raw_text;
    int label = 0;
    Index valid_tokens = 0;
    Index valid_regions = 0;
};

/// Relative paths (from the manifest's directory) of one sample's tensors.
struct FeatureFiles {
    std::string tokens;
    std::string regions;
    std::string geometry;
    std::string pair_txt;
    std::string pair_img;
    std::string tox;
    std::string nsfw;
    std::string cap;
};

struct ManifestEntry {
    std::string id;
    int label = 0;
    std::string raw_text;
    FeatureFiles files;
};

struct Manifest {
    std::string split; // "train" or "test"
    std::vector<ManifestEntry> samples;
    double msl_min = 0.0;
    double msl_max = 0.0;
    std::filesystem::path root; // directory the relative paths resolve against
};

/// Parses and validates a manifest: unique ids, binary labels, every path
/// relative, inside the root, and pointing at an existing file. Throws
/// SchemaError.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Loads and shape-checks one entry, padding sequences to kSeqLen.
/// Throws SchemaError naming the field, with the MMFB diagnostic if a file
/// fails to parse.
FeatureBundle load_bundle(const Manifest& manifest, const ManifestEntry& entry);

/// Pads a (rows x cols) matrix with zero rows up to `rows_to`.
Matrix pad_rows(const Matrix& m, Index rows_to);

/// Writes the bundle's tensors (valid rows only) under `root` and returns the
/// manifest entry that references them.
ManifestEntry save_bundle(const std::filesystem::path& root, const std::string& subdir,
                          const FeatureBundle& bundle);

/// Checks every FeatureBundle invariant; throws SchemaError on the first violation.
void validate_bundle(const FeatureBundle& bundle);

} // namespace mmfuse
