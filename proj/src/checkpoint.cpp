#include "acfnet/nn/checkpoint.hpp"

#include <zlib.h>

#include "acfnet/io_util.hpp"

namespace acfnet::nn {

namespace {
constexpr char kMagic[4] = {'A', 'C', 'F', 'N'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::size_t kHeaderBytes = 6;

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}
}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& Checkpoint::at(const std::string& name) const {
  const auto* t = find(name);
  if (!t) throw FormatError("checkpoint has no tensor '" + name + "'");
  return *t;
}

void Checkpoint::add(std::string name, Shape shape, std::vector<float> data) {
  if (static_cast<Index>(data.size()) != shape_size(shape)) throw ShapeError("tensor '" + name + "' size mismatch");
  if (find(name)) throw FormatError("duplicate checkpoint tensor '" + name + "'");
  tensors.push_back({std::move(name), std::move(shape), std::move(data)});
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put_string32(ckpt.config.dump());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.put_string16(t.name);
    w.put<std::uint8_t>(kDtypeF32);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (Index d : t.shape) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.put_bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  const auto& b = w.bytes();
  w.put<std::uint32_t>(crc_of(b.data() + kHeaderBytes, b.size() - kHeaderBytes));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + 4) throw FormatError("checkpoint truncated");
  if (std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != std::string_view(kMagic, 4)) {
    throw FormatError("bad checkpoint magic");
  }
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.get_bytes(magic, 4);
  if (const auto v = r.get<std::uint16_t>(); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc_of(bytes.data() + kHeaderBytes, bytes.size() - kHeaderBytes - 4) != stored_crc) {
    throw FormatError("checkpoint checksum mismatch");
  }
  ByteReader body(bytes.data(), bytes.size() - 4);
  body.get_bytes(magic, 4);
  body.get<std::uint16_t>();
  Checkpoint ckpt;
  try {
    ckpt.config = nlohmann::json::parse(body.get_string32());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config block: ") + e.what());
  }
  const auto count = body.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = body.get_string16();
    if (body.get<std::uint8_t>() != kDtypeF32) throw FormatError("unsupported dtype for '" + t.name + "'");
    const auto rank = body.get<std::uint32_t>();
    if (rank > 8) throw FormatError("implausible rank for '" + t.name + "'");
    std::uint64_t n = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      const auto d = body.get<std::uint64_t>();
      t.shape.push_back(static_cast<Index>(d));
      n *= d;
    }
    if (n * sizeof(float) > body.remaining()) throw FormatError("tensor '" + t.name + "' overruns the file");
    t.data.resize(n);
    body.get_bytes(t.data.data(), n * sizeof(float));
    ckpt.tensors.push_back(std::move(t));
  }
  if (body.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return decode_checkpoint(bytes);
}

}  // namespace acfnet::nn
