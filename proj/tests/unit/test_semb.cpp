#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "stepalign/checkpoint.hpp"
#include "stepalign/manifest.hpp"
#include "stepalign/semb_io.hpp"
#include "support.hpp"

using namespace stepalign;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stepalign_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

FormatErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_semb(bytes);
  } catch (const FormatError& e) {
    return e.kind;
  }
  FAIL("decode succeeded");
  return FormatErrorKind::io;
}

}  // namespace

TEST_CASE("SEMB header layout and round trip") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6.5;
  const auto bytes = encode_semb(EmbeddingSequence(m, SequenceKind::phrases));
  REQUIRE(bytes.size() == 16 + 6 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SEMB");
  CHECK(bytes[4] == 1);
  CHECK(bytes[6] == 1);  // phrases
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 3);
  const auto back = decode_semb(bytes);
  CHECK(back.kind() == SequenceKind::phrases);
  CHECK(back.data() == m);
}

TEST_CASE("SEMB single value file size") {
  const fs::path dir = temp_dir("semb_size");
  write_embedding_file(EmbeddingSequence(Matrix::Constant(1, 1, 0.5), SequenceKind::video), dir / "x.semb");
  CHECK(fs::file_size(dir / "x.semb") == 20);
  CHECK(read_embedding_file(dir / "x.semb").data()(0, 0) == 0.5);
}

TEST_CASE("SEMB round trip rounds through float32") {
  Rng rng(11);
  const fs::path dir = temp_dir("semb_rt");
  for (int t = 0; t < 20; ++t) {
    const Matrix m = testsupport::random_matrix(rng, rng.between(1, 9), rng.between(1, 7), -5, 5);
    write_embedding_file(EmbeddingSequence(m, SequenceKind::video), dir / "a.semb");
    const auto back = read_embedding_file(dir / "a.semb");
    REQUIRE(back.length() == m.rows());
    REQUIRE(back.dim() == m.cols());
    for (Eigen::Index k = 0; k < m.size(); ++k)
      CHECK(back.data().data()[k] == static_cast<double>(static_cast<float>(m.data()[k])));
  }
}

TEST_CASE("SEMB format errors") {
  const auto good = encode_semb(EmbeddingSequence(Matrix::Ones(5, 2), SequenceKind::video));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(decode_error(bad_magic) == FormatErrorKind::bad_magic);
  auto truncated = good;
  truncated.resize(16 + 3 * 2 * 4);
  CHECK(decode_error(truncated) == FormatErrorKind::truncated_payload);
  auto trailing = good;
  trailing.push_back(0);
  CHECK(decode_error(trailing) == FormatErrorKind::trailing_bytes);
  auto version = good;
  version[4] = 9;
  CHECK(decode_error(version) == FormatErrorKind::bad_version);
  auto nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 16, &q, 4);
  CHECK(decode_error(nan) == FormatErrorKind::non_finite);
}

TEST_CASE("writing a NaN sequence touches no file") {
  const fs::path dir = temp_dir("semb_nan");
  Matrix m = Matrix::Ones(2, 2);
  m(0, 1) = std::nan("");
  CHECK_THROWS(write_embedding_file(m, SequenceKind::video, dir / "n.semb"));
  CHECK_FALSE(fs::exists(dir / "n.semb"));
}

TEST_CASE("manifest round trip") {
  const fs::path dir = temp_dir("manifest");
  DatasetSample s{"v0", "taskA", EmbeddingSequence(Matrix::Ones(4, 2) * 0.25, SequenceKind::video),
                  EmbeddingSequence(Matrix::Ones(2, 2), SequenceKind::phrases), {{3, 1, 2}},
                  EmbeddingSequence(Matrix::Ones(1, 2), SequenceKind::step_texts), std::vector<bool>{true, false}};
  const auto path = save_dataset({s}, dir);
  const auto back = load_manifest(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].id == "v0");
  CHECK(back[0].task == "taskA");
  CHECK(back[0].video == s.video);
  CHECK(back[0].gt_segments == s.gt_segments);
  CHECK(*back[0].phrase_relevance == *s.phrase_relevance);
  CHECK(back[0].gt_step_texts->data() == s.gt_step_texts->data());
  try {
    load_manifest(dir / "missing.json");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.num_slots = 3;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  const ModelParams p = ModelParams::initialize(cfg, 4);
  const auto bytes = encode_checkpoint({p, 12, 99});
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.step == 12);
  CHECK(back.seed == 99);
  CHECK(back.params.config() == cfg);
  CHECK(encode_checkpoint(back) == bytes);
  auto broken = bytes;
  broken[0] = 'Z';
  CHECK_THROWS_AS(decode_checkpoint(broken), DataError);
}
