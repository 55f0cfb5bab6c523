#ifndef ACFNET_NN_CHECKPOINT_HPP
#define ACFNET_NN_CHECKPOINT_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "acfnet/nn/tensor.hpp"

namespace acfnet::nn {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// "ACFN" container: magic, u16 version, u32-prefixed JSON config block,
// u32 tensor count, then per tensor {u16 name, u8 dtype (1 = f32), u32 rank,
// u64 dims, raw little-endian data}, and a trailing CRC-32 of everything after
// the version field.
struct Checkpoint {
  nlohmann::json config;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& at(const std::string& name) const;
  void add(std::string name, Shape shape, std::vector<float> data);

  template <typename Scalar>
  void add(const std::string& name, const Tensor<Scalar>& t) {
    std::vector<float> data(static_cast<std::size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
    add(name, t.shape(), std::move(data));
  }

  // Copies a stored tensor into `out`, which must already have the stored shape.
  template <typename Scalar>
  void read_into(const std::string& name, Tensor<Scalar>& out) const {
    const NamedTensor& nt = at(name);
    require_shape(nt.shape, out.shape(), ("checkpoint tensor '" + name + "'").c_str());
    for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(nt.data[static_cast<std::size_t>(i)]);
  }
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace acfnet::nn

#endif  // ACFNET_NN_CHECKPOINT_HPP
