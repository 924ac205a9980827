#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "mmfuse/error.hpp"
#include "mmfuse/features.hpp"
#include "mmfuse/lexicon.hpp"
#include "mmfuse/mmfb.hpp"
#include "mmfuse/msl.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/synth.hpp"
#include "test_util.hpp"

using namespace mmfuse;
namespace fs = std::filesystem;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
    return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

FormatError::Kind decode_error_kind(std::span<const std::byte> bytes) {
    try {
        decode_mmfb(bytes);
    } catch (const FormatError& e) {
        return e.kind();
    }
    FAIL("decode did not throw");
    return FormatError::Kind::BadMagic;
}

} // namespace

TEST_CASE("MMFB round trip is bit exact") {
    test::TempDir dir;
    Rng rng(5);
    const Matrix m = random_matrix(3, 4, rng);
    save_matrix(dir.path() / "m.mmfb", m);
    CHECK(bitwise_equal(load_matrix(dir.path() / "m.mmfb"), m));
}

TEST_CASE("MMFB round trip over random shapes") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const Index r = 1 + static_cast<Index>(rng.below(256));
        const Index c = 1 + static_cast<Index>(rng.below(1024));
        Matrix m = random_matrix(r, c, rng);
        // include subnormals, signed zero and extremes
        m(0, 0) = -0.0f;
        if (m.size() > 2) {
            m.data()[1] = std::numeric_limits<float>::denorm_min();
            m.data()[2] = std::numeric_limits<float>::max();
        }
        const auto bytes = encode_mmfb(m);
        REQUIRE(bytes.size() == kMmfbHeaderSize + 4 * static_cast<std::size_t>(m.size()));
        CHECK(bitwise_equal(decode_mmfb(bytes), m));
    }
}

TEST_CASE("MMFB header layout is little-endian") {
    Matrix m(1, 1);
    m << 1.0f;
    const auto b = encode_mmfb(m);
    CHECK(std::memcmp(b.data(), "MMFB", 4) == 0);
    CHECK(static_cast<int>(b[4]) == 1);
    CHECK(static_cast<int>(b[8]) == 1);
    CHECK(static_cast<int>(b[12]) == 1);
    // 1.0f = 0x3f800000
    CHECK(static_cast<int>(b[18]) == 0x80);
    CHECK(static_cast<int>(b[19]) == 0x3f);
}

TEST_CASE("MMFB error variants") {
    Rng rng(2);
    const auto good = encode_mmfb(random_matrix(2, 3, rng));

    auto bad_magic = good;
    bad_magic[0] = std::byte{'X'};
    CHECK(decode_error_kind(bad_magic) == FormatError::Kind::BadMagic);

    auto bad_version = good;
    bad_version[4] = std::byte{2};
    CHECK(decode_error_kind(bad_version) == FormatError::Kind::VersionMismatch);

    auto truncated = good;
    truncated.resize(truncated.size() - 4);
    CHECK(decode_error_kind(truncated) == FormatError::Kind::Truncated);

    auto short_header = good;
    short_header.resize(10);
    CHECK(decode_error_kind(short_header) == FormatError::Kind::Truncated);

    auto trailing = good;
    trailing.push_back(std::byte{0});
    CHECK(decode_error_kind(trailing) == FormatError::Kind::TrailingBytes);

    auto nan = good;
    const float q = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan.data() + kMmfbHeaderSize + 4 * 4, &q, 4);
    try {
        decode_mmfb(nan);
        FAIL("expected NonFinite");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::NonFinite);
        CHECK(e.offset() == kMmfbHeaderSize + 16);
        CHECK(std::string(e.what()).find("offset 32") != std::string::npos);
    }

    auto inf = good;
    const float i = std::numeric_limits<float>::infinity();
    std::memcpy(inf.data() + kMmfbHeaderSize, &i, 4);
    CHECK(decode_error_kind(inf) == FormatError::Kind::NonFinite);
}

TEST_CASE("MMFB header claiming more rows than the payload is truncation") {
    Rng rng(3);
    auto bytes = encode_mmfb(random_matrix(2, 2, rng));
    bytes[8] = std::byte{200};
    CHECK(decode_error_kind(bytes) == FormatError::Kind::Truncated);
}

TEST_CASE("missing MMFB file is an IO error") {
    CHECK_THROWS_AS(load_matrix("/nonexistent/dir/x.mmfb"), IoError);
}

TEST_CASE("lexicon parsing") {
    SUBCASE("dedupe and case folding") {
        const Lexicon lex = parse_lexicon("Karen\nkaren\n#comment\n");
        CHECK(lex.size() == 1);
        CHECK(lex.contains("karen"));
    }
    SUBCASE("empty file") {
        CHECK(parse_lexicon("").empty());
    }
    SUBCASE("blank lines, CRLF and surrounding whitespace") {
        const Lexicon lex = parse_lexicon("\n  alpha \r\n\n\tbeta\n");
        CHECK(lex.size() == 2);
        CHECK(lex.contains("alpha"));
        CHECK(lex.contains("beta"));
    }
    SUBCASE("inner whitespace names the line") {
        try {
            parse_lexicon("ok\n#c\ntwo words\n");
            FAIL("expected LexiconError");
        } catch (const LexiconError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("invalid UTF-8") {
        CHECK_THROWS_AS(parse_lexicon("ok\n\xff\xfe\n"), LexiconError);
        CHECK_THROWS_AS(parse_lexicon("\xc0\xaf\n"), LexiconError); // overlong
        const Lexicon lex = parse_lexicon("caf\xc3\xa9\n");
        CHECK(lex.contains("caf\xc3\xa9"));
    }
    SUBCASE("fixture file") {
        const Lexicon lex = load_lexicon(fs::path(MMFUSE_TEST_DATA) / "msl_lexicon.txt");
        CHECK(lex.size() == 10);
        CHECK(lex.contains("shrew"));
    }
}

TEST_CASE("msl raw counts") {
    Lexicon lex;
    lex.add("karen");
    CHECK(msl_score_raw("", lex) == 0);
    CHECK(msl_score_raw("Karen is a KAREN", lex) == 2);
    CHECK(msl_score_raw("karens", lex) == 0);
    CHECK(msl_score_raw("  karen\t", lex) == msl_score_raw("KAREN", lex));
    CHECK(msl_score_raw("karen, karen! @karen http://karen.com www.karen.org", lex) == 2);
}

TEST_CASE("msl count invariant to casing and outer whitespace") {
    const Lexicon lex = load_lexicon(fs::path(MMFUSE_TEST_DATA) / "msl_lexicon.txt");
    Rng rng(4);
    const char* words[] = {"hag", "witch", "the", "Nag!", "@x", "cat", "vixen", "www.a"};
    for (int t = 0; t < 200; ++t) {
        std::string s;
        const auto n = rng.below(8);
        for (std::uint64_t i = 0; i < n; ++i) s += std::string(words[rng.below(8)]) + " ";
        std::string upper = s;
        for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        const int base = msl_score_raw(s, lex);
        CHECK(msl_score_raw(upper, lex) == base);
        CHECK(msl_score_raw(" \t" + s + "\n ", lex) == base);
    }
}

TEST_CASE("msl fixture sentences match hand counts") {
    const Lexicon lex = load_lexicon(fs::path(MMFUSE_TEST_DATA) / "msl_lexicon.txt");
    const auto cases = test::load_msl_cases(fs::path(MMFUSE_TEST_DATA) / "msl_sentences.tsv");
    REQUIRE(cases.size() == 30);
    for (const auto& c : cases) {
        CAPTURE(c.text);
        CHECK(msl_score_raw(c.text, lex) == c.count);
    }
}

TEST_CASE("msl normalization") {
    CHECK(msl_normalize(2, 0, 4) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(msl_normalize(9, 0, 4) == 1.0);
    CHECK(msl_normalize(-1, 0, 4) == 0.0);
    CHECK(msl_normalize(3, 2, 2) == 0.0);
}

TEST_CASE("bundle save and load with padding") {
    test::TempDir dir;
    Rng rng(8);
    FeatureBundle b = test::random_bundle(rng, 80, 7);
    validate_bundle(b);
    Manifest m;
    m.split = "train";
    m.samples.push_back(save_bundle(dir.path(), "features", b));
    save_manifest(dir.path() / "train.json", m);

    const Manifest back = load_manifest(dir.path() / "train.json");
    REQUIRE(back.samples.size() == 1);
    const FeatureBundle got = load_bundle(back, back.samples[0]);
    CHECK(got.tokens.rows() == 100);
    CHECK(got.tokens.cols() == 768);
    CHECK(got.valid_tokens == 80);
    CHECK(got.valid_regions == 7);
    CHECK(bitwise_equal(got.tokens, b.tokens));
    CHECK(bitwise_equal(got.regions, b.regions));
    CHECK(bitwise_equal(got.geometry, b.geometry));
    CHECK(bitwise_equal(got.cap, b.cap));
    CHECK(got.raw_text == b.raw_text);
    CHECK(got.label == b.label);
    validate_bundle(got);
}

TEST_CASE("bundle schema violations name the field") {
    test::TempDir dir;
    Rng rng(9);
    FeatureBundle b = test::random_bundle(rng, 5, 5);
    Manifest m;
    m.split = "test";
    m.samples.push_back(save_bundle(dir.path(), "f", b));
    save_manifest(dir.path() / "test.json", m);
    Manifest back = load_manifest(dir.path() / "test.json");

    save_matrix(dir.path() / back.samples[0].files.regions, random_matrix(100, 512, rng));
    try {
        load_bundle(back, back.samples[0]);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("regions: expected 100x1024") != std::string::npos);
        CHECK(msg.find("100x512") != std::string::npos);
    }

    save_matrix(dir.path() / back.samples[0].files.regions, random_matrix(5, 1024, rng));
    save_matrix(dir.path() / back.samples[0].files.tox, random_matrix(1, 7, rng));
    CHECK_THROWS_WITH_AS(load_bundle(back, back.samples[0]), doctest::Contains("tox: expected 1x6"),
                         SchemaError);

    save_matrix(dir.path() / back.samples[0].files.tox, random_matrix(1, 6, rng));
    auto raw = read_file_bytes(dir.path() / back.samples[0].files.cap);
    raw.resize(raw.size() - 1);
    write_file_bytes(dir.path() / back.samples[0].files.cap, raw);
    CHECK_THROWS_WITH_AS(load_bundle(back, back.samples[0]), doctest::Contains("cap:"), SchemaError);
}

TEST_CASE("manifest validation") {
    test::TempDir dir;
    Rng rng(10);
    const FeatureBundle b = test::random_bundle(rng, 3, 3);
    Manifest m;
    m.split = "train";
    m.samples.push_back(save_bundle(dir.path(), "f", b));

    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(load_manifest(dir.path() / "nope.json"), SchemaError);
    }
    SUBCASE("duplicate ids") {
        m.samples.push_back(m.samples[0]);
        save_manifest(dir.path() / "m.json", m);
        CHECK_THROWS_WITH_AS(load_manifest(dir.path() / "m.json"), doctest::Contains("duplicate"),
                             SchemaError);
    }
    SUBCASE("path escaping the root") {
        m.samples[0].files.cap = "../outside.mmfb";
        save_manifest(dir.path() / "m.json", m);
        CHECK_THROWS_WITH_AS(load_manifest(dir.path() / "m.json"), doctest::Contains("escapes"),
                             SchemaError);
    }
    SUBCASE("absolute path") {
        m.samples[0].files.cap = (dir.path() / m.samples[0].files.cap).string();
        save_manifest(dir.path() / "m.json", m);
        CHECK_THROWS_AS(load_manifest(dir.path() / "m.json"), SchemaError);
    }
    SUBCASE("missing file") {
        m.samples[0].files.nsfw = "f/absent.mmfb";
        save_manifest(dir.path() / "m.json", m);
        CHECK_THROWS_WITH_AS(load_manifest(dir.path() / "m.json"), doctest::Contains("nsfw"),
                             SchemaError);
    }
    SUBCASE("non-binary label") {
        m.samples[0].label = 2;
        save_manifest(dir.path() / "m.json", m);
        CHECK_THROWS_AS(load_manifest(dir.path() / "m.json"), SchemaError);
    }
    SUBCASE("malformed json") {
        std::ofstream(dir.path() / "m.json") << "{ not json";
        CHECK_THROWS_AS(load_manifest(dir.path() / "m.json"), SchemaError);
    }
}

TEST_CASE("manifest preserves sample order") {
    test::TempDir dir;
    Rng rng(12);
    Manifest m;
    m.split = "train";
    for (const char* id : {"zeta", "alpha", "mid"}) {
        FeatureBundle b = test::random_bundle(rng, 2, 2);
        b.id = id;
        m.samples.push_back(save_bundle(dir.path(), "f", b));
    }
    save_manifest(dir.path() / "m.json", m);
    const Manifest back = load_manifest(dir.path() / "m.json");
    REQUIRE(back.samples.size() == 3);
    CHECK(back.samples[0].id == "zeta");
    CHECK(back.samples[1].id == "alpha");
    CHECK(back.samples[2].id == "mid");
}

TEST_CASE("synthetic dataset split sizes and balance") {
    SynthConfig cfg;
    cfg.n_per_class = 10;
    cfg.separation = 2.0;
    cfg.seed = 7;
    const SynthDataset d = synth_dataset(cfg);
    CHECK(d.train.size() == 16);
    CHECK(d.test.size() == 4);
    auto positives = [](const std::vector<FeatureBundle>& v) {
        int n = 0;
        for (const auto& b : v) n += b.label;
        return n;
    };
    CHECK(positives(d.train) == 8);
    CHECK(positives(d.test) == 2);
    for (const auto& b : d.train) validate_bundle(b);
    for (const auto& b : d.test) validate_bundle(b);
    CHECK(d.msl_min <= d.msl_max);

    cfg.n_per_class = 500;
    const SynthDataset big = synth_dataset(cfg);
    CHECK(big.train.size() == 800);
    CHECK(big.test.size() == 200);
    CHECK(positives(big.train) == 400);
    CHECK(positives(big.test) == 100);
}

TEST_CASE("synthetic dataset files are byte-identical for the same seed") {
    test::TempDir a, b;
    SynthConfig cfg;
    cfg.n_per_class = 4;
    cfg.seed = 3;
    write_synth_dataset(a.path(), synth_dataset(cfg));
    write_synth_dataset(b.path(), synth_dataset(cfg));
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), a.path());
        CHECK(slurp(e.path()) == slurp(b.path() / rel));
        ++files;
    }
    CHECK(files == 3 + 8 * 8);

    const Manifest train = load_manifest(a.path() / "train.json");
    CHECK(train.samples.size() == 8);
    for (const auto& e : train.samples) validate_bundle(load_bundle(train, e));

    cfg.seed = 4;
    test::TempDir c;
    write_synth_dataset(c.path(), synth_dataset(cfg));
    CHECK(slurp(a.path() / "train.json") != slurp(c.path() / "train.json"));
}

TEST_CASE("synthetic argument checks") {
    SynthConfig cfg;
    cfg.n_per_class = 0;
    CHECK_THROWS_AS(synth_dataset(cfg), ArgumentError);
    cfg.n_per_class = 2;
    cfg.separation = -1;
    CHECK_THROWS_AS(synth_dataset(cfg), ArgumentError);
}

TEST_CASE("zero separation makes class means coincide") {
    SynthConfig cfg;
    cfg.n_per_class = 200;
    cfg.separation = 0.0;
    cfg.seed = 1;
    const SynthDataset d = synth_dataset(cfg);
    Vector mean[2] = {Vector::Zero(512), Vector::Zero(512)};
    int n[2] = {0, 0};
    for (const auto& b : d.train) {
        mean[b.label] += b.pair_txt;
        ++n[b.label];
    }
    const double gap = (mean[0] / n[0] - mean[1] / n[1]).cwiseAbs().maxCoeff();
    // both class means are the noise mean; 160 samples per class
    CHECK(gap < 0.5);
}

TEST_CASE("separated synthetic pair_txt is linearly separable") {
    SynthConfig cfg;
    cfg.n_per_class = 500;
    cfg.separation = 4.0;
    cfg.seed = 1;
    const SynthDataset d = synth_dataset(cfg);
    // plain logistic regression by full-batch gradient descent
    const Index dim = schema::kPairDim;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
    double bias = 0.0;
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd gw = Eigen::VectorXd::Zero(dim);
        double gb = 0.0;
        for (const auto& b : d.train) {
            const Eigen::VectorXd x = b.pair_txt.transpose().cast<double>();
            const double p = 1.0 / (1.0 + std::exp(-(w.dot(x) + bias)));
            gw += (p - b.label) * x;
            gb += p - b.label;
        }
        w -= 0.01 * gw / static_cast<double>(d.train.size());
        bias -= 0.01 * gb / static_cast<double>(d.train.size());
    }
    int correct = 0;
    for (const auto& b : d.test) {
        const Eigen::VectorXd x = b.pair_txt.transpose().cast<double>();
        correct += ((w.dot(x) + bias) > 0.0) == (b.label == 1);
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(d.test.size()) >= 0.9);
}
