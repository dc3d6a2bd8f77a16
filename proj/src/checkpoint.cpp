#include "stepalign/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "stepalign/semb_io.hpp"

namespace stepalign {

using nlohmann::json;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.params.config();
  json tensors = json::array();
  for (const auto& t : ckpt.params.tensors())
    tensors.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  const json header = {
      {"format", 1},
      {"config",
       {{"dim", c.dim},
        {"num_slots", c.num_slots},
        {"num_layers", c.num_layers},
        {"num_heads", c.num_heads},
        {"ff_multiplier", c.ff_multiplier},
        {"dropout_rate", c.dropout_rate}}},
      {"step", ckpt.step},
      {"seed", ckpt.seed},
      {"tensors", tensors}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out{'S', 'C', 'K', 'P'};
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.params.tensors()) {
    if (!t.value.allFinite()) throw NumericalError("checkpoint tensor " + t.name + " is not finite");
    append_f32_payload(t.value, out);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "SCKP", 4) != 0) throw DataError("bad checkpoint magic");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[4 + static_cast<std::size_t>(i)]) << (8 * i);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw DataError("truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  ModelConfig c;
  const auto& jc = header.at("config");
  c.dim = jc.at("dim");
  c.num_slots = jc.at("num_slots");
  c.num_layers = jc.at("num_layers");
  c.num_heads = jc.at("num_heads");
  c.ff_multiplier = jc.at("ff_multiplier");
  c.dropout_rate = jc.at("dropout_rate");
  Checkpoint ckpt{ModelParams::zeros(c), header.at("step").get<std::int64_t>(), header.at("seed").get<std::uint64_t>()};
  auto& tensors = ckpt.params.tensors();
  const auto& jt = header.at("tensors");
  if (jt.size() != tensors.size()) throw DataError("checkpoint tensor count does not match its config");
  auto payload = bytes.subspan(8 + len);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& t = tensors[k];
    if (jt[k].at("name") != t.name || jt[k].at("rows") != t.value.rows() || jt[k].at("cols") != t.value.cols())
      throw DataError("checkpoint tensor " + std::to_string(k) + " does not match the model layout");
    t.value = read_f32_payload(payload, t.value.rows(), t.value.cols());
    payload = payload.subspan(static_cast<std::size_t>(t.value.size()) * 4);
  }
  if (!payload.empty()) throw DataError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace stepalign
