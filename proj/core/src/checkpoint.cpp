#include "cdi/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "cdi/errors.hpp"

namespace cdi {
namespace {

constexpr char kMagic[4] = {'I', 'I', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxParams = 1u << 20;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::vector<unsigned char>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

// Bounds-checked little-endian reader over the whole file image.
class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size, std::string origin)
      : data_(data), size_(size), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    const unsigned char* p = data_ + pos_;
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }

  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
    pos_ += len;
    return s;
  }

  void f32_array(std::vector<float>& out, std::size_t count) {
    need(count * 4);
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* p = data_ + pos_ + i * 4;
      const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                                 (static_cast<std::uint32_t>(p[1]) << 8) |
                                 (static_cast<std::uint32_t>(p[2]) << 16) |
                                 (static_cast<std::uint32_t>(p[3]) << 24);
      out[i] = std::bit_cast<float>(bits);
    }
    pos_ += count * 4;
  }

  bool done() const { return pos_ == size_; }

  void need(std::size_t count) const {
    if (count > size_ - pos_) {
      throw DataError("checkpoint: truncated file: " + origin_);
    }
  }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open for reading: " + path.string());
  std::fseek(f, 0, SEEK_END);
  const long len = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  if (len < 0) {
    std::fclose(f);
    throw DataError("cannot determine file size: " + path.string());
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(len));
  const std::size_t got = len ? std::fread(bytes.data(), 1, bytes.size(), f) : 0;
  std::fclose(f);
  if (got != bytes.size()) throw DataError("short read: " + path.string());
  return bytes;
}

void write_all_bytes(const std::filesystem::path& path,
                     const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot open for writing: " + path.string());
  const std::size_t put = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (put != bytes.size()) throw DataError("short write: " + path.string());
}

Shape read_shape(ByteReader& r, const std::string& name) {
  Shape s;
  s.n = static_cast<int>(r.u32());
  s.c = static_cast<int>(r.u32());
  s.h = static_cast<int>(r.u32());
  s.w = static_cast<int>(r.u32());
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0 ||
      s.numel() > (std::size_t{1} << 31)) {
    throw DataError("checkpoint: bad shape for '" + name + "': " +
                    s.to_string());
  }
  return s;
}

void check_finite(const std::vector<float>& data, const std::string& name) {
  for (const float v : data) {
    if (!std::isfinite(v)) {
      throw DataError("checkpoint: non-finite value in '" + name + "'");
    }
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path,
                      const CheckpointData& data) {
  if (data.has_optimizer && (data.moment1.size() != data.params.size() ||
                             data.moment2.size() != data.params.size())) {
    throw DataError("checkpoint: optimizer state not aligned with params");
  }
  std::vector<unsigned char> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_u32(bytes, kVersion);
  put_u32(bytes, static_cast<std::uint32_t>(data.params.size()));
  for (const TensorBlob& blob : data.params) {
    if (blob.name.empty() || blob.name.size() > kMaxNameLen) {
      throw DataError("checkpoint: bad blob name length");
    }
    if (blob.data.size() != blob.shape.numel()) {
      throw DataError("checkpoint: blob '" + blob.name +
                      "' data does not match its shape");
    }
    put_u32(bytes, static_cast<std::uint32_t>(blob.name.size()));
    bytes.insert(bytes.end(), blob.name.begin(), blob.name.end());
    put_u32(bytes, static_cast<std::uint32_t>(blob.shape.n));
    put_u32(bytes, static_cast<std::uint32_t>(blob.shape.c));
    put_u32(bytes, static_cast<std::uint32_t>(blob.shape.h));
    put_u32(bytes, static_cast<std::uint32_t>(blob.shape.w));
    for (const float v : blob.data) put_f32(bytes, v);
  }
  put_u32(bytes, data.has_optimizer ? 1u : 0u);
  if (data.has_optimizer) {
    put_u64(bytes, data.optimizer_step);
    for (std::size_t i = 0; i < data.params.size(); ++i) {
      const std::size_t numel = data.params[i].shape.numel();
      if (data.moment1[i].size() != numel || data.moment2[i].size() != numel) {
        throw DataError("checkpoint: optimizer slot size mismatch for '" +
                        data.params[i].name + "'");
      }
      for (const float v : data.moment1[i]) put_f32(bytes, v);
      for (const float v : data.moment2[i]) put_f32(bytes, v);
    }
  }
  write_all_bytes(path, bytes);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_all_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic: " + path.string());
  }
  r.str(4);  // magic
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version) + ": " + path.string());
  }
  const std::uint32_t count = r.u32();
  if (count > kMaxParams) {
    throw DataError("checkpoint: implausible param count: " + path.string());
  }
  CheckpointData data;
  data.params.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlob& blob = data.params[i];
    const std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > kMaxNameLen) {
      throw DataError("checkpoint: bad blob name length: " + path.string());
    }
    blob.name = r.str(name_len);
    blob.shape = read_shape(r, blob.name);
    r.f32_array(blob.data, blob.shape.numel());
    check_finite(blob.data, blob.name);
  }
  const std::uint32_t flag = r.u32();
  if (flag > 1) {
    throw DataError("checkpoint: bad optimizer flag: " + path.string());
  }
  data.has_optimizer = flag == 1;
  if (data.has_optimizer) {
    data.optimizer_step = r.u64();
    data.moment1.resize(count);
    data.moment2.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t numel = data.params[i].shape.numel();
      r.f32_array(data.moment1[i], numel);
      r.f32_array(data.moment2[i], numel);
      check_finite(data.moment1[i], data.params[i].name + ".m");
      check_finite(data.moment2[i], data.params[i].name + ".v");
    }
  }
  if (!r.done()) {
    throw DataError("checkpoint: trailing bytes: " + path.string());
  }
  return data;
}

}  // namespace cdi
