#include "mmfuse/features.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/mmfb.hpp"

namespace mmfuse {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const char* const kFieldNames[] = {"tokens", "regions", "geometry", "pair_txt",
                                   "pair_img", "tox", "nsfw", "cap"};

std::string* file_field(FeatureFiles& f, std::string_view name) {
    if (name == "tokens") return &f.tokens;
    if (name == "regions") return &f.regions;
    if (name == "geometry") return &f.geometry;
    if (name == "pair_txt") return &f.pair_txt;
    if (name == "pair_img") return &f.pair_img;
    if (name == "tox") return &f.tox;
    if (name == "nsfw") return &f.nsfw;
    if (name == "cap") return &f.cap;
    return nullptr;
}

const std::string& file_field(const FeatureFiles& f, std::string_view name) {
    return *file_field(const_cast<FeatureFiles&>(f), name);
}

// Resolves a manifest path, refusing anything that could leave the root.
fs::path resolve_inside(const fs::path& root, const std::string& rel, const std::string& what) {
    const fs::path p(rel);
    if (rel.empty() || p.is_absolute() || p.has_root_name()) {
        throw SchemaError(what + ": path '" + rel + "' must be relative to the dataset root");
    }
    const fs::path norm = p.lexically_normal();
    if (norm.empty() || *norm.begin() == "..") {
        throw SchemaError(what + ": path '" + rel + "' escapes the dataset root");
    }
    return root / norm;
}

Matrix load_field(const Manifest& m, const ManifestEntry& e, std::string_view field) {
    const std::string what = e.id + "." + std::string(field);
    const fs::path path = resolve_inside(m.root, file_field(e.files, field), what);
    try {
        return load_matrix(path);
    } catch (const FormatError& err) {
        throw SchemaError(std::string(field) + ": " + path.string() + ": " + err.what());
    } catch (const IoError& err) {
        throw SchemaError(std::string(field) + ": " + err.what());
    }
}

Vector as_vector(const Matrix& m, std::string_view field, Index n) {
    const bool ok = (m.rows() == 1 && m.cols() == n) || (m.cols() == 1 && m.rows() == n);
    if (!ok) {
        throw SchemaError(std::string(field) + ": expected 1x" + std::to_string(n) + ", got " +
                          shape_str(m));
    }
    return Eigen::Map<const Vector>(m.data(), n);
}

void check_sequence(const Matrix& m, std::string_view field, Index cols) {
    if (m.cols() != cols || m.rows() < 1 || m.rows() > schema::kSeqLen) {
        throw SchemaError(std::string(field) + ": expected " + shape_str(schema::kSeqLen, cols) +
                          " (1.." + std::to_string(schema::kSeqLen) + " rows), got " +
                          shape_str(m));
    }
}

template <typename Derived>
bool finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

} // namespace

Matrix pad_rows(const Matrix& m, Index rows_to) {
    if (m.rows() > rows_to) {
        throw DimensionError("pad_rows: " + shape_str(m) + " exceeds " + std::to_string(rows_to) +
                             " rows");
    }
    Matrix out = Matrix::Zero(rows_to, m.cols());
    out.topRows(m.rows()) = m;
    return out;
}

Manifest load_manifest(const fs::path& path) {
    if (!fs::exists(path)) {
        throw SchemaError("manifest not found: " + path.string());
    }
    std::ifstream in(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError("manifest " + path.string() + ": " + e.what());
    }
    Manifest m;
    m.root = path.parent_path();
    try {
        m.split = doc.at("split").get<std::string>();
        if (m.split != "train" && m.split != "test") {
            throw SchemaError("manifest: split must be 'train' or 'test', got '" + m.split + "'");
        }
        m.msl_min = doc.at("msl_min").get<double>();
        m.msl_max = doc.at("msl_max").get<double>();
        if (m.msl_min > m.msl_max) {
            throw SchemaError("manifest: msl_min exceeds msl_max");
        }
        std::set<std::string> seen;
        for (const auto& s : doc.at("samples")) {
            ManifestEntry e;
            e.id = s.at("id").get<std::string>();
            if (!seen.insert(e.id).second) {
                throw SchemaError("manifest: duplicate id '" + e.id + "'");
            }
            e.label = s.at("label").get<int>();
            if (e.label != 0 && e.label != 1) {
                throw SchemaError("manifest: sample '" + e.id + "' label must be 0 or 1");
            }
            e.raw_text = s.at("raw_text").get<std::string>();
            const auto& files = s.at("files");
            for (const char* field : kFieldNames) {
                std::string rel = files.at(field).get<std::string>();
                const fs::path full = resolve_inside(m.root, rel, e.id + "." + field);
                if (!fs::is_regular_file(full)) {
                    throw SchemaError(std::string(field) + ": missing file " + full.string());
                }
                *file_field(e.files, field) = std::move(rel);
            }
            m.samples.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw SchemaError("manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
    json doc;
    doc["split"] = manifest.split;
    json samples = json::array();
    for (const auto& e : manifest.samples) {
        json files;
        for (const char* field : kFieldNames) {
            files[field] = file_field(e.files, field);
        }
        samples.push_back({{"id", e.id}, {"label", e.label}, {"raw_text", e.raw_text}, {"files", files}});
    }
    doc["samples"] = std::move(samples);
    doc["msl_min"] = manifest.msl_min;
    doc["msl_max"] = manifest.msl_max;
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(1) << '\n';
}

void validate_bundle(const FeatureBundle& b) {
    using namespace schema;
    auto expect = [](const auto& m, Index r, Index c, const char* field) {
        if (m.rows() != r || m.cols() != c) {
            throw SchemaError(std::string(field) + ": expected " + shape_str(r, c) + ", got " +
                              shape_str(m.rows(), m.cols()));
        }
        if (!finite(m)) {
            throw SchemaError(std::string(field) + ": non-finite entries");
        }
    };
    expect(b.tokens, kSeqLen, kTokenDim, "tokens");
    expect(b.regions, kSeqLen, kRegionDim, "regions");
    expect(b.geometry, kSeqLen, kGeometryDim, "geometry");
    expect(b.pair_txt, 1, kPairDim, "pair_txt");
    expect(b.pair_img, 1, kPairDim, "pair_img");
    expect(b.tox, 1, kToxDim, "tox");
    expect(b.nsfw, 1, kNsfwDim, "nsfw");
    expect(b.cap, 1, kCapDim, "cap");
    if (b.label != 0 && b.label != 1) {
        throw SchemaError("label: must be 0 or 1");
    }
    if (b.valid_tokens < 1 || b.valid_tokens > kSeqLen || b.valid_regions < 1 ||
        b.valid_regions > kSeqLen) {
        throw SchemaError("valid counts out of range 1.." + std::to_string(kSeqLen));
    }
    if (b.geometry.minCoeff() < 0.0f || b.geometry.maxCoeff() > 1.0f) {
        throw SchemaError("geometry: entries must lie in [0, 1]");
    }
    if (!b.tokens.bottomRows(kSeqLen - b.valid_tokens).isZero(0.0f) ||
        !b.regions.bottomRows(kSeqLen - b.valid_regions).isZero(0.0f) ||
        !b.geometry.bottomRows(kSeqLen - b.valid_regions).isZero(0.0f)) {
        throw SchemaError("padding rows must be zero");
    }
}

FeatureBundle load_bundle(const Manifest& m, const ManifestEntry& e) {
    using namespace schema;
    FeatureBundle b;
    b.id = e.id;
    b.label = e.label;
    b.raw_text = e.raw_text;

    Matrix tokens = load_field(m, e, "tokens");
    check_sequence(tokens, "tokens", kTokenDim);
    Matrix regions = load_field(m, e, "regions");
    check_sequence(regions, "regions", kRegionDim);
    Matrix geometry = load_field(m, e, "geometry");
    if (geometry.rows() != regions.rows() || geometry.cols() != kGeometryDim) {
        throw SchemaError("geometry: expected " + shape_str(regions.rows(), kGeometryDim) +
                          " (one row per region), got " + shape_str(geometry));
    }
    if (geometry.size() > 0 && (geometry.minCoeff() < 0.0f || geometry.maxCoeff() > 1.0f)) {
        throw SchemaError("geometry: entries must lie in [0, 1]");
    }
    b.valid_tokens = tokens.rows();
    b.valid_regions = regions.rows();
    b.tokens = pad_rows(tokens, kSeqLen);
    b.regions = pad_rows(regions, kSeqLen);
    b.geometry = pad_rows(geometry, kSeqLen);
    b.pair_txt = as_vector(load_field(m, e, "pair_txt"), "pair_txt", kPairDim);
    b.pair_img = as_vector(load_field(m, e, "pair_img"), "pair_img", kPairDim);
    b.tox = as_vector(load_field(m, e, "tox"), "tox", kToxDim);
    b.nsfw = as_vector(load_field(m, e, "nsfw"), "nsfw", kNsfwDim);
    b.cap = as_vector(load_field(m, e, "cap"), "cap", kCapDim);
    return b;
}

ManifestEntry save_bundle(const fs::path& root, const std::string& subdir, const FeatureBundle& b) {
    ManifestEntry e;
    e.id = b.id;
    e.label = b.label;
    e.raw_text = b.raw_text;
    fs::create_directories(root / subdir);
    auto put = [&](const char* field, const Matrix& m) {
        const std::string rel = (fs::path(subdir) / (b.id + "." + field + ".mmfb")).generic_string();
        save_matrix(root / rel, m);
        *file_field(e.files, field) = rel;
    };
    put("tokens", b.tokens.topRows(b.valid_tokens));
    put("regions", b.regions.topRows(b.valid_regions));
    put("geometry", b.geometry.topRows(b.valid_regions));
    put("pair_txt", b.pair_txt);
    put("pair_img", b.pair_img);
    put("tox", b.tox);
    put("nsfw", b.nsfw);
    put("cap", b.cap);
    return e;
}

} // namespace mmfuse
