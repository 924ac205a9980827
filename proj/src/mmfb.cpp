#include "mmfuse/mmfb.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mmfuse/error.hpp"

namespace mmfuse {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'F', 'B'};

void put_u32(std::byte* out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xffu);
    }
}

std::uint32_t get_u32(const std::byte* in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
    }
    return v;
}

} // namespace

std::vector<std::byte> encode_mmfb(const Matrix& m) {
    const std::size_t n = static_cast<std::size_t>(m.size());
    std::vector<std::byte> out(kMmfbHeaderSize + 4 * n);
    std::memcpy(out.data(), kMagic, 4);
    put_u32(out.data() + 4, kMmfbVersion);
    put_u32(out.data() + 8, static_cast<std::uint32_t>(m.rows()));
    put_u32(out.data() + 12, static_cast<std::uint32_t>(m.cols()));
    std::byte* p = out.data() + kMmfbHeaderSize;
    for (std::size_t i = 0; i < n; ++i) {
        put_u32(p + 4 * i, std::bit_cast<std::uint32_t>(m.data()[i]));
    }
    return out;
}

Matrix decode_mmfb(std::span<const std::byte> bytes, std::size_t* consumed,
                   std::uint64_t base_offset) {
    if (bytes.size() < kMmfbHeaderSize) {
        if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
            throw FormatError(FormatError::Kind::BadMagic, "MMFB: bad magic", base_offset);
        }
        throw FormatError(FormatError::Kind::Truncated,
                          "MMFB: truncated header (" + std::to_string(bytes.size()) + " bytes)",
                          base_offset + bytes.size());
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(FormatError::Kind::BadMagic, "MMFB: bad magic", base_offset);
    }
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kMmfbVersion) {
        throw FormatError(FormatError::Kind::VersionMismatch,
                          "MMFB: unsupported version " + std::to_string(version), base_offset + 4);
    }
    const std::uint64_t rows = get_u32(bytes.data() + 8);
    const std::uint64_t cols = get_u32(bytes.data() + 12);
    const std::uint64_t payload = rows * cols * 4;
    const std::uint64_t total = kMmfbHeaderSize + payload;
    if (bytes.size() < total) {
        throw FormatError(FormatError::Kind::Truncated,
                          "MMFB: header declares " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " but payload has only " +
                              std::to_string(bytes.size() - kMmfbHeaderSize) + " bytes",
                          base_offset + bytes.size());
    }
    if (!consumed && bytes.size() != total) {
        throw FormatError(FormatError::Kind::TrailingBytes,
                          "MMFB: " + std::to_string(bytes.size() - total) +
                              " trailing bytes after payload",
                          base_offset + total);
    }
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    const std::byte* p = bytes.data() + kMmfbHeaderSize;
    for (std::uint64_t i = 0; i < rows * cols; ++i) {
        const float v = std::bit_cast<float>(get_u32(p + 4 * i));
        if (!std::isfinite(v)) {
            const std::uint64_t off = base_offset + kMmfbHeaderSize + 4 * i;
            throw FormatError(FormatError::Kind::NonFinite,
                              "MMFB: non-finite value at byte offset " + std::to_string(off) +
                                  " (element " + std::to_string(i) + ")",
                              off);
        }
        m.data()[i] = v;
    }
    if (consumed) {
        *consumed = static_cast<std::size_t>(total);
    }
    return m;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) {
        throw IoError("failed reading " + path.string());
    }
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
    write_file_bytes(path, encode_mmfb(m));
}

Matrix load_matrix(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_mmfb(bytes);
}

} // namespace mmfuse
