#include "dvta/trainer/checkpoint.hpp"

#include <string>

#include "dvta/dataio/crc32.hpp"
#include "dvta/dataio/feature_file.hpp"
#include "dvta/errors.hpp"

namespace dvta {
namespace {

void need(std::span<const std::byte> bytes, std::size_t at, std::size_t n, const char* what) {
  if (at + n > bytes.size()) {
    throw FormatError(std::string("checkpoint truncated while reading ") + what + ": need " +
                          std::to_string(at + n) + " bytes, have " + std::to_string(bytes.size()),
                      bytes.size());
  }
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const ModelConfig& config, const ModelParams& params) {
  std::vector<std::byte> out;
  for (char c : kCheckpointMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kCheckpointVersion);
  const std::string json = to_json(config).dump();
  put_u32(out, static_cast<std::uint32_t>(json.size()));
  for (char c : json) out.push_back(static_cast<std::byte>(c));
  put_u32(out, static_cast<std::uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const std::string& name = params.name(i);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    for (char c : name) out.push_back(static_cast<std::byte>(c));
    const auto block = encode_feature_matrix(params.tensor(i));
    out.insert(out.end(), block.begin(), block.end());
  }
  put_u32(out, crc32(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  need(bytes, 0, 12, "header");
  for (std::size_t i = 0; i < 4; ++i) {
    if (static_cast<char>(bytes[i]) != kCheckpointMagic[i]) {
      throw FormatError("bad checkpoint magic, expected 'DVCK'", i);
    }
  }
  if (const auto v = get_u32(bytes, 4); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v), 4);
  }
  need(bytes, 0, 16, "trailer");
  const std::size_t body = bytes.size() - 4;
  if (get_u32(bytes, body) != crc32(bytes.first(body))) {
    throw FormatError("checkpoint checksum mismatch", body);
  }

  std::size_t at = 8;
  const std::size_t json_len = get_u32(bytes, at);
  at += 4;
  need(bytes, at, json_len, "config");
  std::string json(reinterpret_cast<const char*>(bytes.data() + at), json_len);
  at += json_len;

  Checkpoint ck;
  std::vector<std::string> problems;
  try {
    ck.config = model_config_from_json(nlohmann::json::parse(json), problems);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what(), 12);
  }
  auto more = validate(ck.config);
  problems.insert(problems.end(), more.begin(), more.end());
  if (!problems.empty()) throw ValidationError(problems);

  need(bytes, at, 4, "tensor count");
  const std::size_t count = get_u32(bytes, at);
  at += 4;
  const auto layout = parameter_layout(ck.config);
  if (count != layout.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config needs " +
                          std::to_string(layout.size()),
                      at - 4);
  }
  for (std::size_t i = 0; i < count; ++i) {
    need(bytes, at, 4, "tensor name length");
    const std::size_t name_len = get_u32(bytes, at);
    at += 4;
    need(bytes, at, name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + at), name_len);
    at += name_len;
    std::size_t used = 0;
    Matrix m = decode_feature_matrix(bytes.subspan(at, body - at), &used, at);
    if (name != layout[i].name || m.rows() != layout[i].rows || m.cols() != layout[i].cols) {
      throw FormatError("tensor " + name + " does not match expected " + layout[i].name, at);
    }
    at += used;
    ck.params.add(std::move(name), std::move(m));
  }
  if (at != body) throw FormatError("unexpected bytes before checkpoint trailer", at);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params) {
  write_file_atomic(path, encode_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace dvta
