#include "mmfuse/checkpoint.hpp"

#include <cstring>
#include <map>

#include "json.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/mmfb.hpp"

namespace mmfuse {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};
constexpr std::size_t kPreamble = 16;

std::uint64_t fnv1a(std::span<const std::byte> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::byte b : bytes) h = (h ^ static_cast<std::uint64_t>(b)) * 0x100000001b3ull;
    return h;
}

void put_le(std::byte* out, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xffu);
}

std::uint64_t get_le(const std::byte* in, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return v;
}

const char* pool_name(ad::ReduceMode m) { return m == ad::ReduceMode::Max ? "max" : "mean"; }

json config_json(const TrainedModel& m) {
    const ManmConfig& c = m.model.manm;
    json manm = {{"d_txt", c.d_txt},         {"d_region_in", c.d_region_in},
                 {"d_model", c.d_model},     {"geometry_dim", c.geometry_dim},
                 {"msan_dim", c.msan_dim},   {"msan_heads", c.msan_heads},
                 {"seq_len", c.seq_len},     {"pool", pool_name(c.pool)}};
    json train = {{"batch_size", m.train.batch_size}, {"lr", m.train.lr},
                  {"epochs", m.train.epochs},         {"dropout_p", m.train.dropout_p},
                  {"seed", m.train.seed},             {"thr", m.train.thr}};
    json terms = json::array();
    for (const auto& t : m.lexicon.terms()) terms.push_back(t);
    return {{"model", {{"manm", manm}, {"graph_thr", m.model.graph_thr}}},
            {"train", train},
            {"msl", {{"min", m.msl_min}, {"max", m.msl_max}, {"lexicon", terms}}}};
}

void read_config(const json& j, TrainedModel& m) {
    const json& manm = j.at("model").at("manm");
    ManmConfig& c = m.model.manm;
    c.d_txt = manm.at("d_txt").get<Index>();
    c.d_region_in = manm.at("d_region_in").get<Index>();
    c.d_model = manm.at("d_model").get<Index>();
    c.geometry_dim = manm.at("geometry_dim").get<Index>();
    c.msan_dim = manm.at("msan_dim").get<Index>();
    c.msan_heads = manm.at("msan_heads").get<int>();
    c.seq_len = manm.at("seq_len").get<Index>();
    const std::string pool = manm.at("pool").get<std::string>();
    if (pool != "max" && pool != "mean") throw CheckpointError("checkpoint: unknown pool '" + pool + "'");
    c.pool = pool == "max" ? ad::ReduceMode::Max : ad::ReduceMode::Mean;
    m.model.graph_thr = j.at("model").at("graph_thr").get<double>();
    const json& t = j.at("train");
    m.train.batch_size = t.at("batch_size").get<int>();
    m.train.lr = t.at("lr").get<double>();
    m.train.epochs = t.at("epochs").get<int>();
    m.train.dropout_p = t.at("dropout_p").get<double>();
    m.train.seed = t.at("seed").get<std::uint64_t>();
    m.train.thr = t.at("thr").get<double>();
    const json& msl = j.at("msl");
    m.msl_min = msl.at("min").get<double>();
    m.msl_max = msl.at("max").get<double>();
    for (const auto& term : msl.at("lexicon")) m.lexicon.add(term.get<std::string>());
}

} // namespace

std::vector<std::byte> encode_checkpoint(const TrainedModel& m) {
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (const auto& p : m.params) tensors.emplace_back(p.name, &p.value);
    tensors.emplace_back("graph.txt.nodes", &m.graphs.txt.nodes());
    tensors.emplace_back("graph.img.nodes", &m.graphs.img.nodes());

    std::vector<std::byte> blocks;
    json list = json::array();
    for (const auto& [name, mat] : tensors) {
        const auto block = encode_mmfb(*mat);
        list.push_back({{"name", name},
                        {"offset", blocks.size()},
                        {"rows", mat->rows()},
                        {"cols", mat->cols()},
                        {"fnv1a64", fnv1a(block)}});
        blocks.insert(blocks.end(), block.begin(), block.end());
    }
    json index = config_json(m);
    index["tensors"] = std::move(list);
    const std::string text = index.dump();

    std::vector<std::byte> out(kPreamble + text.size());
    std::memcpy(out.data(), kMagic, 4);
    put_le(out.data() + 4, kCheckpointVersion, 4);
    put_le(out.data() + 8, text.size(), 8);
    std::memcpy(out.data() + kPreamble, text.data(), text.size());
    out.insert(out.end(), blocks.begin(), blocks.end());
    return out;
}

TrainedModel decode_checkpoint(std::span<const std::byte> bytes) {
    if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointError("checkpoint: bad magic or truncated preamble");
    }
    const auto version = get_le(bytes.data() + 4, 4);
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto index_len = get_le(bytes.data() + 8, 8);
    if (index_len > bytes.size() - kPreamble) {
        throw CheckpointError("checkpoint: index length exceeds file size");
    }
    json index;
    try {
        index = json::parse(reinterpret_cast<const char*>(bytes.data() + kPreamble),
                            reinterpret_cast<const char*>(bytes.data() + kPreamble + index_len));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: unreadable index: ") + e.what());
    }
    const std::span<const std::byte> data = bytes.subspan(kPreamble + index_len);

    TrainedModel m;
    std::map<std::string, Matrix> loaded;
    try {
        read_config(index, m);
        for (const auto& t : index.at("tensors")) {
            const std::string name = t.at("name").get<std::string>();
            const auto offset = t.at("offset").get<std::uint64_t>();
            const auto rows = t.at("rows").get<Index>();
            const auto cols = t.at("cols").get<Index>();
            const std::size_t len = kMmfbHeaderSize + 4 * static_cast<std::size_t>(rows * cols);
            if (offset > data.size() || len > data.size() - offset) {
                throw CheckpointError("checkpoint: tensor '" + name + "' extends past end of file");
            }
            const auto block = data.subspan(offset, len);
            if (fnv1a(block) != t.at("fnv1a64").get<std::uint64_t>()) {
                throw CheckpointError("checkpoint: tensor '" + name + "' fails its checksum");
            }
            Matrix mat;
            try {
                mat = decode_mmfb(block);
            } catch (const FormatError& e) {
                throw CheckpointError("checkpoint: tensor '" + name + "': " + e.what());
            }
            if (mat.rows() != rows || mat.cols() != cols) {
                throw CheckpointError("checkpoint: tensor '" + name + "' shape disagrees with index");
            }
            loaded.emplace(name, std::move(mat));
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed index: ") + e.what());
    } catch (const Error& e) {
        if (dynamic_cast<const CheckpointError*>(&e)) throw;
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }

    try {
        m.model.manm.validate();
    } catch (const ArgumentError& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    add_model_params(m.params, m.model, 0);
    for (auto& p : m.params) {
        auto it = loaded.find(p.name);
        if (it == loaded.end()) {
            throw CheckpointError("checkpoint: missing tensor '" + p.name + "'");
        }
        if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
            throw CheckpointError("checkpoint: tensor '" + p.name + "' is " + shape_str(it->second) +
                                  ", model expects " + shape_str(p.value));
        }
        p.value = std::move(it->second);
        loaded.erase(it);
    }
    for (const char* tag : {"txt", "img"}) {
        const std::string name = std::string("graph.") + tag + ".nodes";
        auto it = loaded.find(name);
        if (it == loaded.end()) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
        if (it->second.cols() != schema::kPairDim) {
            throw CheckpointError("checkpoint: tensor '" + name + "' has width " +
                                  std::to_string(it->second.cols()));
        }
        (tag[0] == 't' ? m.graphs.txt : m.graphs.img) =
            build_graph(it->second, m.model.graph_thr, tag[0] == 't' ? Modality::Text : Modality::Image);
        loaded.erase(it);
    }
    if (!loaded.empty()) {
        throw CheckpointError("checkpoint: unexpected tensor '" + loaded.begin()->first + "'");
    }
    return m;
}

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
    write_file_bytes(path, encode_checkpoint(model));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::vector<std::byte> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    return decode_checkpoint(bytes);
}

} // namespace mmfuse
