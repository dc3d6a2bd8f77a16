#include "stepalign/semb_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace stepalign {

namespace {

static_assert(std::endian::native == std::endian::little, "SEMB codec assumes a little-endian host");

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

Matrix cast_f32(const Matrix& m) {
  return m.cast<float>().cast<double>();
}

void append_f32_payload(const Matrix& m, std::vector<std::uint8_t>& out) {
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_le(out, static_cast<float>(m(i, j)));
}

Matrix read_f32_payload(std::span<const std::uint8_t> bytes, Eigen::Index rows, Eigen::Index cols) {
  const auto need = static_cast<std::size_t>(rows * cols) * 4;
  if (bytes.size() < need) throw FormatError(FormatErrorKind::truncated_payload, "truncated payload");
  Matrix m(rows, cols);
  std::size_t off = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j, off += 4) {
      const float v = get_le<float>(bytes, off);
      if (!std::isfinite(v)) throw FormatError(FormatErrorKind::non_finite, "non-finite value in payload");
      m(i, j) = v;
    }
  return m;
}

std::vector<std::uint8_t> encode_semb(const EmbeddingSequence& seq) {
  if (!cast_f32(seq.data()).allFinite())
    throw FormatError(FormatErrorKind::non_finite, "values overflow float32");
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'S', 'E', 'M', 'B'});
  put_le<std::uint16_t>(out, kSembVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(seq.kind()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(seq.length()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(seq.dim()));
  append_f32_payload(seq.data(), out);
  return out;
}

EmbeddingSequence decode_semb(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SEMB", 4) != 0)
    throw FormatError(FormatErrorKind::bad_magic, "bad magic");
  if (bytes.size() < kSembHeaderBytes) throw FormatError(FormatErrorKind::truncated_payload, "truncated header");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kSembVersion)
    throw FormatError(FormatErrorKind::bad_version, "unsupported version " + std::to_string(version));
  const auto kind = sequence_kind_from_code(get_le<std::uint16_t>(bytes, 6));
  const auto n = get_le<std::uint32_t>(bytes, 8);
  const auto d = get_le<std::uint32_t>(bytes, 12);
  if (n == 0 || d == 0) throw FormatError(FormatErrorKind::empty_shape, "zero length or dim");
  const auto payload = bytes.subspan(kSembHeaderBytes);
  const auto need = static_cast<std::size_t>(n) * d * 4;
  if (payload.size() < need) throw FormatError(FormatErrorKind::truncated_payload, "truncated payload");
  if (payload.size() > need) throw FormatError(FormatErrorKind::trailing_bytes, "trailing bytes after payload");
  return {read_f32_payload(payload, n, d), kind};
}

EmbeddingSequence read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_semb(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind, path.string() + ": " + e.what());
  }
}

void write_embedding_file(const EmbeddingSequence& seq, const std::filesystem::path& path) {
  const auto bytes = encode_semb(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::io, "write failed for " + path.string());
}

void write_embedding_file(const Matrix& data, SequenceKind kind, const std::filesystem::path& path) {
  if (!data.allFinite()) throw FormatError(FormatErrorKind::non_finite, "refusing to write non-finite values");
  if (data.rows() == 0 || data.cols() == 0) throw FormatError(FormatErrorKind::empty_shape, "zero length or dim");
  write_embedding_file(EmbeddingSequence(data, kind), path);
}

}  // namespace stepalign
