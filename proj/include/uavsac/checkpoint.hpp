#pragma once

// Binary checkpoint container.
//
// Layout (all integers little-endian):
//   char[8]  magic "UAVSACCK"
//   u32      format version (1)
//   u32      scalar width in bytes (4 or 8)
//   u32      metadata count, then per entry: str key, str value
//   u32      parameter-set count, then per set:
//              str name, u64 adam step, u32 param count, then per param:
//              str name, u64 rows, u64 cols, value[rows*cols], m[..], v[..]
//   u32      blob count, then per blob: str name, u64 length, bytes
// where str = u32 length + bytes. Scalars are stored raw, so a save/load/save
// cycle reproduces the file byte for byte.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uavsac/errors.hpp"
#include "uavsac/params.hpp"

namespace uavsac {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'U', 'A', 'V', 'S', 'A', 'C', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class ByteWriter {
 public:
  template <typename U>
  void pod(const U& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(U));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  template <typename U>
  void array(const std::vector<U>& v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(U));
  }
  void raw(const std::string& s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  template <typename U>
  U pod() {
    U v;
    take(&v, sizeof(U));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }
  template <typename U>
  std::vector<U> array(std::size_t n) {
    std::vector<U> v(n);
    take(v.data(), n * sizeof(U));
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void take(void* dst, std::size_t n) {
    if (pos_ + n > data_.size()) throw std::runtime_error("checkpoint: truncated data");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

template <typename T>
struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<ParamSet<T>> sets;
  std::map<std::string, std::string> blobs;

  const ParamSet<T>& set(const std::string& name) const {
    for (const auto& s : sets)
      if (s.name() == name) return s;
    throw TopologyError("checkpoint: missing parameter set " + name);
  }

  std::string serialize() const {
    ByteWriter w;
    for (char c : kCheckpointMagic) w.pod(c);
    w.pod(kCheckpointVersion);
    w.pod(static_cast<std::uint32_t>(sizeof(T)));
    w.pod(static_cast<std::uint32_t>(metadata.size()));
    for (const auto& [k, v] : metadata) {
      w.str(k);
      w.str(v);
    }
    w.pod(static_cast<std::uint32_t>(sets.size()));
    for (const auto& s : sets) {
      w.str(s.name());
      w.pod(static_cast<std::uint64_t>(s.adam_step()));
      w.pod(static_cast<std::uint32_t>(s.size()));
      for (const auto& p : s.params()) {
        w.str(p.name);
        w.pod(static_cast<std::uint64_t>(p.value.rows));
        w.pod(static_cast<std::uint64_t>(p.value.cols));
        w.array(p.value.data);
        w.array(p.m.data);
        w.array(p.v.data);
      }
    }
    w.pod(static_cast<std::uint32_t>(blobs.size()));
    for (const auto& [k, v] : blobs) {
      w.str(k);
      w.pod(static_cast<std::uint64_t>(v.size()));
      w.raw(v);
    }
    return w.bytes();
  }

  static Checkpoint deserialize(std::string_view bytes) {
    ByteReader r(bytes);
    char magic[8];
    for (char& c : magic) c = r.pod<char>();
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CompatibilityError("checkpoint: bad magic");
    if (r.pod<std::uint32_t>() != kCheckpointVersion) throw CompatibilityError("checkpoint: unsupported version");
    if (r.pod<std::uint32_t>() != sizeof(T)) throw CompatibilityError("checkpoint: scalar width mismatch");
    Checkpoint c;
    const auto n_meta = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
      auto k = r.str();
      c.metadata[k] = r.str();
    }
    const auto n_sets = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_sets; ++i) {
      ParamSet<T> s(r.str());
      s.adam_step() = r.pod<std::uint64_t>();
      const auto n_params = r.pod<std::uint32_t>();
      for (std::uint32_t j = 0; j < n_params; ++j) {
        auto name = r.str();
        const auto rows = r.pod<std::uint64_t>();
        const auto cols = r.pod<std::uint64_t>();
        auto& p = s.add(name, rows, cols);
        p.value.data = r.array<T>(rows * cols);
        p.m.data = r.array<T>(rows * cols);
        p.v.data = r.array<T>(rows * cols);
      }
      c.sets.push_back(std::move(s));
    }
    const auto n_blobs = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_blobs; ++i) {
      auto k = r.str();
      const auto len = r.pod<std::uint64_t>();
      auto data = r.array<char>(len);
      c.blobs[k] = std::string(data.begin(), data.end());
    }
    if (!r.done()) throw CompatibilityError("checkpoint: trailing bytes");
    return c;
  }

  void save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp);
      const auto bytes = serialize();
      os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("checkpoint: cannot rename to " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return deserialize(ss.str());
  }
};

// Copies values and optimizer moments; topologies must match.
template <typename T>
void copy_params(ParamSet<T>& dst, const ParamSet<T>& src) {
  if (!dst.same_topology(src)) throw TopologyError("checkpoint: topology mismatch for " + dst.name());
  for (std::size_t k = 0; k < dst.size(); ++k) {
    dst[k].value = src[k].value;
    dst[k].m = src[k].m;
    dst[k].v = src[k].v;
  }
  dst.adam_step() = src.adam_step();
}

}  // namespace uavsac
