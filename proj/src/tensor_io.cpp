#include "cvqa/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "cvqa/errors.hpp"

namespace cvqa {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'Q', 'A'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated tensor file reading " + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated tensor file reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u64(os, entries.size());
  for (const auto& entry : entries) {
    put_u32(os, static_cast<uint32_t>(entry.name.size()));
    os.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    const auto& shape = entry.tensor.shape();
    put_u32(os, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) put_u64(os, static_cast<uint64_t>(d));
    for (double v : entry.tensor.values()) put_f32(os, static_cast<float>(v));
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "' for reading");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("'" + path + "' is not a CVQA tensor file (bad magic)");
  }
  const uint32_t version = get_u32(is, "version");
  if (version != kVersion) {
    throw DataError("'" + path + "' has unsupported version " + std::to_string(version));
  }
  const uint64_t count = get_u64(is, "entry count");
  std::vector<NamedTensor> entries;
  entries.reserve(count);
  for (uint64_t e = 0; e < count; ++e) {
    const uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw DataError("truncated tensor file reading name");
    const uint32_t rank = get_u32(is, "rank");
    Shape shape(rank);
    int64_t total = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int64_t>(get_u64(is, "dimension"));
      total *= shape[i];
    }
    std::vector<double> values(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) {
      uint32_t bits = get_u32(is, "tensor data");
      float f;
      std::memcpy(&f, &bits, 4);
      values[static_cast<size_t>(i)] = static_cast<double>(f);
    }
    entries.push_back({std::move(name), Tensor::from_values(std::move(shape), std::move(values))});
  }
  return entries;
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::vector<NamedTensor> entries;
  entries.reserve(params.size());
  for (const auto& name : params.names()) entries.push_back({name, params.get(name)});
  write_tensor_file(path, entries);
}

void load_checkpoint(const std::string& path, ParamStore& params) {
  auto entries = read_tensor_file(path);
  size_t matched = 0;
  for (auto& entry : entries) {
    if (!params.has(entry.name)) {
      throw DataError("checkpoint entry '" + entry.name + "' does not exist in this model");
    }
    Tensor& dst = params.get(entry.name);
    if (dst.shape() != entry.tensor.shape()) {
      throw DataError("checkpoint entry '" + entry.name + "' has shape " +
                      shape_str(entry.tensor.shape()) + ", expected " + shape_str(dst.shape()));
    }
    dst.values() = entry.tensor.values();
    ++matched;
  }
  if (matched != params.size()) {
    throw DataError("checkpoint '" + path + "' is missing " +
                    std::to_string(params.size() - matched) + " parameter(s)");
  }
}

}  // namespace cvqa
