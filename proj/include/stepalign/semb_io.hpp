#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stepalign/core.hpp"

namespace stepalign {

// SEMB layout, little-endian throughout:
//   0..3   magic "SEMB"
//   4..5   version (u16) = 1
//   6..7   kind code (u16)
//   8..11  length N (u32)
//   12..15 dim d (u32)
//   16..   N*d float32 values, row-major
inline constexpr std::size_t kSembHeaderBytes = 16;
inline constexpr std::uint16_t kSembVersion = 1;

enum class FormatErrorKind { bad_magic, bad_version, truncated_payload, trailing_bytes, non_finite, empty_shape, io };

struct FormatError : DataError {
  FormatError(FormatErrorKind kind, const std::string& what) : DataError(what), kind(kind) {}
  FormatErrorKind kind;
};

std::vector<std::uint8_t> encode_semb(const EmbeddingSequence& seq);
EmbeddingSequence decode_semb(std::span<const std::uint8_t> bytes);

EmbeddingSequence read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const EmbeddingSequence& seq, const std::filesystem::path& path);
/// Validates a raw matrix before touching the filesystem.
void write_embedding_file(const Matrix& data, SequenceKind kind, const std::filesystem::path& path);

/// Float32 little-endian payload codec shared with checkpoints.
void append_f32_payload(const Matrix& m, std::vector<std::uint8_t>& out);
Matrix read_f32_payload(std::span<const std::uint8_t> bytes, Eigen::Index rows, Eigen::Index cols);

/// Rounds every entry through float32.
Matrix cast_f32(const Matrix& m);

}  // namespace stepalign
