#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmfuse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes passed to an operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Misuse of the differentiation tape (e.g. a second backward pass).
class TapeError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or precondition violation that is not a shape problem.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// I/O failure: missing file, unwritable path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed MMFB tensor payload.
class FormatError : public Error {
public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, NonFinite, TrailingBytes };

    FormatError(Kind kind, const std::string& what, std::uint64_t offset = 0)
        : Error(what), kind_(kind), offset_(offset) {}

    Kind kind() const noexcept { return kind_; }
    /// Byte offset of the offending value (NonFinite) or of the failure point.
    std::uint64_t offset() const noexcept { return offset_; }

private:
    Kind kind_;
    std::uint64_t offset_;
};

/// A dataset file or manifest entry violates the feature schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Lexicon file problems: bad encoding or an invalid term.
class LexiconError : public Error {
public:
    using Error::Error;
};

/// A checkpoint cannot be read or does not match the model.
class CheckpointError : public Error {
public:
    using Error::Error;
};

} // namespace mmfuse
