// SPDX-License-Identifier: Apache-2.0
#include "eqvit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>

namespace eqvit {

namespace {

constexpr char kMagic[4] = {'E', 'Q', 'T', 'C'};
constexpr uint8_t kVersion = 1;

void put_u64(std::ostream& out, uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated integer field");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  for (const auto& t : tensors) {
    put_u64(out, t.name.size());
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u64(out, static_cast<uint64_t>(t.array.rank()));
    for (int64_t e : t.array.shape()) put_u64(out, static_cast<uint64_t>(e));
    for (int64_t i = 0; i < t.array.size(); ++i)
      put_u64(out, std::bit_cast<uint64_t>(t.array[i]));
  }
  if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  int version = in.get();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  std::vector<NamedTensor> tensors;
  while (true) {
    in.peek();
    if (in.eof()) break;
    uint64_t name_len = get_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    uint64_t rank = get_u64(in);
    std::vector<int64_t> shape(rank);
    for (uint64_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(get_u64(in));
    NdArray array(shape);
    for (int64_t i = 0; i < array.size(); ++i)
      array[i] = std::bit_cast<double>(get_u64(in));
    if (!in) throw std::runtime_error("checkpoint: truncated record in '" + path + "'");
    tensors.push_back({std::move(name), std::move(array)});
  }
  return tensors;
}

std::vector<NamedTensor> state_of(const std::vector<ParamEntry>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.tensor.value()});
  return out;
}

void load_state(std::vector<ParamEntry>& params, const std::vector<NamedTensor>& state) {
  std::map<std::string, const NdArray*> by_name;
  for (const auto& t : state) by_name[t.name] = &t.array;
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing tensor '" + p.name + "'");
    if (it->second->shape() != p.tensor.value().shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + p.name + "': " +
                               shape_str(it->second->shape()) + " vs " +
                               shape_str(p.tensor.value().shape()));
    Precision prec = p.tensor.value().precision();
    p.tensor.mutable_value() = *it->second;
    p.tensor.mutable_value().set_precision(prec);
  }
}

}  // namespace eqvit
