#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ganinv/models.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts need byte swaps");

namespace ganinv {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'A', 'N', 'I', 'N', 'V', 'A', 'R'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
bool read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return bool(is);
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  auto params = model.net.named_params();
  for (auto& b : model.net.named_buffers()) params.push_back(b);

  json index = json::array();
  uint64_t offset = 0;
  for (const auto& p : params) {
    index.push_back({{"name", p.name},
                     {"shape", p.value->shape()},
                     {"dtype", "float32"},
                     {"offset", offset},
                     {"count", p.value->size()}});
    offset += static_cast<uint64_t>(p.value->size());
  }
  const uint64_t payload_bytes = offset * sizeof(float);

  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& p : params)
    crc = crc32(crc, reinterpret_cast<const Bytef*>(p.value->data()),
                static_cast<uInt>(p.value->size() * sizeof(float)));

  json meta;
  meta["format_version"] = kVersion;
  meta["spec"] = model.spec.to_json();
  meta["spec_hash"] = hash_hex(model.spec_hash_value());
  meta["seed"] = model.meta.seed;
  meta["config_hash"] = hash_hex(model.meta.config_hash);
  meta["paired_spec_hash"] = hash_hex(model.meta.paired_spec_hash);
  meta["params"] = index;
  meta["payload_bytes"] = payload_bytes;
  meta["payload_crc32"] = static_cast<uint64_t>(crc);
  const std::string header = meta.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint64_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : params)
    os.write(reinterpret_cast<const char*>(p.value->data()),
             static_cast<std::streamsize>(p.value->size() * sizeof(float)));
  if (!os) throw std::runtime_error("short write: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, const NetworkSpec* expected_spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError("not a checkpoint archive: " + path.string());
  uint32_t version = 0;
  uint64_t header_len = 0;
  if (!read_pod(is, version) || version != kVersion)
    throw IntegrityError("unsupported archive version in " + path.string());
  if (!read_pod(is, header_len)) throw IntegrityError("truncated header in " + path.string());

  std::string header(header_len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw IntegrityError("truncated header in " + path.string());

  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception& e) {
    throw IntegrityError("corrupt metadata in " + path.string() + ": " + e.what());
  }

  NetworkSpec spec = NetworkSpec::from_json(meta.at("spec"));
  const std::string stored_hash = meta.at("spec_hash").get<std::string>();
  if (stored_hash != hash_hex(spec_hash(spec)))
    throw IntegrityError("spec hash mismatch inside archive " + path.string());
  if (expected_spec && spec_hash(*expected_spec) != spec_hash(spec))
    throw SpecMismatchError("archive spec " + stored_hash + " does not match expected spec " +
                            hash_hex(spec_hash(*expected_spec)));

  const uint64_t payload_bytes = meta.at("payload_bytes").get<uint64_t>();
  std::string payload(payload_bytes, '\0');
  is.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
  if (static_cast<uint64_t>(is.gcount()) != payload_bytes)
    throw IntegrityError("truncated payload in " + path.string());

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size()));
  if (static_cast<uint64_t>(crc) != meta.at("payload_crc32").get<uint64_t>())
    throw IntegrityError("payload checksum mismatch in " + path.string());

  Model model;
  model.spec = spec;
  model.net = build_network<float>(spec, 0);
  model.meta.seed = meta.value("seed", uint64_t(0));
  model.meta.config_hash = std::stoull(meta.value("config_hash", std::string("0")), nullptr, 16);
  model.meta.paired_spec_hash =
      std::stoull(meta.value("paired_spec_hash", std::string("0")), nullptr, 16);

  auto params = model.net.named_params();
  for (auto& b : model.net.named_buffers()) params.push_back(b);
  const json& index = meta.at("params");
  if (index.size() != params.size())
    throw SpecMismatchError("archive holds " + std::to_string(index.size()) +
                            " tensors, model expects " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const json& e = index[i];
    if (e.at("name").get<std::string>() != params[i].name ||
        e.at("shape").get<Shape>() != params[i].value->shape())
      throw SpecMismatchError("tensor " + params[i].name + " does not match archive entry");
    const uint64_t offset = e.at("offset").get<uint64_t>() * sizeof(float);
    const uint64_t count = e.at("count").get<uint64_t>();
    if (offset + count * sizeof(float) > payload_bytes)
      throw IntegrityError("tensor " + params[i].name + " exceeds payload bounds");
    std::memcpy(params[i].value->data(), payload.data() + offset, count * sizeof(float));
  }
  return model;
}

}  // namespace ganinv

// ---------------------------------------------------------------------------
// Named-tensor container (same framing as checkpoints, different magic).

#include "ganinv/tensor_io.hpp"

namespace ganinv {

namespace {
constexpr char kTensorMagic[8] = {'G', 'A', 'N', 'I', 'N', 'V', 'T', 'S'};
}

void save_tensor_archive(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors,
                         const std::string& meta_json) {
  json index = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    index.push_back(
        {{"name", name}, {"shape", t->shape()}, {"offset", offset}, {"count", t->size()}});
    offset += static_cast<uint64_t>(t->size());
  }
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& [name, t] : tensors)
    crc = crc32(crc, reinterpret_cast<const Bytef*>(t->data()),
                static_cast<uInt>(t->size() * sizeof(float)));

  json meta;
  meta["format_version"] = kVersion;
  meta["tensors"] = index;
  meta["payload_bytes"] = offset * sizeof(float);
  meta["payload_crc32"] = static_cast<uint64_t>(crc);
  meta["meta"] = json::parse(meta_json.empty() ? "{}" : meta_json);
  const std::string header = meta.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kTensorMagic, sizeof(kTensorMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint64_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : tensors)
    os.write(reinterpret_cast<const char*>(t->data()),
             static_cast<std::streamsize>(t->size() * sizeof(float)));
  if (!os) throw std::runtime_error("short write: " + path.string());
}

TensorArchive load_tensor_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open archive: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kTensorMagic, sizeof(kTensorMagic)) != 0)
    throw IntegrityError("not a tensor archive: " + path.string());
  uint32_t version = 0;
  uint64_t header_len = 0;
  if (!read_pod(is, version) || version != kVersion)
    throw IntegrityError("unsupported tensor archive version in " + path.string());
  if (!read_pod(is, header_len)) throw IntegrityError("truncated header in " + path.string());
  std::string header(header_len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw IntegrityError("truncated header in " + path.string());

  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception& e) {
    throw IntegrityError("corrupt metadata in " + path.string() + ": " + e.what());
  }
  const uint64_t payload_bytes = meta.at("payload_bytes").get<uint64_t>();
  std::string payload(payload_bytes, '\0');
  is.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
  if (static_cast<uint64_t>(is.gcount()) != payload_bytes)
    throw IntegrityError("truncated payload in " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size()));
  if (static_cast<uint64_t>(crc) != meta.at("payload_crc32").get<uint64_t>())
    throw IntegrityError("payload checksum mismatch in " + path.string());

  TensorArchive out;
  out.meta_json = meta.at("meta").dump();
  for (const auto& e : meta.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    Tensor<float> t(e.at("shape").get<Shape>());
    const uint64_t offset = e.at("offset").get<uint64_t>() * sizeof(float);
    std::memcpy(t.data(), payload.data() + offset, t.size() * sizeof(float));
    out.tensors.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace ganinv
