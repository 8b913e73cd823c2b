#pragma once

// Versioned binary container of named float64 arrays.
//
// Layout (little endian):
//   magic "REPPOCKP" | u32 version | u64 metadata length | metadata bytes |
//   u64 array count | per array: u64 name length, name bytes, u64 rank,
//   rank x u64 dims, prod(dims) x f64 raw bits.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reppo/errors.hpp"

namespace reppo {

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

class Checkpoint {
 public:
  static constexpr char kMagic[8] = {'R', 'E', 'P', 'P', 'O', 'C', 'K', 'P'};
  static constexpr std::uint32_t kVersion = 1;

  std::string metadata;
  std::vector<NamedArray> arrays;

  void add(const std::string& name, const Eigen::MatrixXd& m) {
    NamedArray a{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                 std::vector<double>(m.data(), m.data() + m.size())};
    push(std::move(a));
  }
  void add(const std::string& name, const Eigen::VectorXd& v) {
    NamedArray a{name, {static_cast<std::uint64_t>(v.size())},
                 std::vector<double>(v.data(), v.data() + v.size())};
    push(std::move(a));
  }
  void add_scalar(const std::string& name, double value) { push(NamedArray{name, {}, {value}}); }

  bool contains(const std::string& name) const { return lookup(name) != nullptr; }

  const NamedArray& at(const std::string& name) const {
    const NamedArray* a = lookup(name);
    if (a == nullptr) throw IoError("checkpoint: missing array '" + name + "'");
    return *a;
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const NamedArray& a = at(name);
    return Eigen::Map<const Eigen::VectorXd>(a.values.data(), static_cast<Eigen::Index>(a.values.size()));
  }
  double scalar(const std::string& name) const {
    const NamedArray& a = at(name);
    if (a.values.size() != 1) throw IoError("checkpoint: '" + name + "' is not a scalar");
    return a.values.front();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);
    write_string(out, metadata);
    write_u64(out, arrays.size());
    for (const NamedArray& a : arrays) {
      write_string(out, a.name);
      write_u64(out, a.shape.size());
      for (std::uint64_t d : a.shape) write_u64(out, d);
      out.write(reinterpret_cast<const char*>(a.values.data()),
                static_cast<std::streamsize>(a.values.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
      throw IoError("checkpoint: '" + path + "' is not a checkpoint file");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kVersion) {
      throw IoError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.metadata = read_string(in);
    const std::uint64_t count = read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
      NamedArray a;
      a.name = read_string(in);
      const std::uint64_t rank = read_u64(in);
      if (rank > 8) throw IoError("checkpoint: corrupt rank for '" + a.name + "'");
      std::uint64_t numel = 1;
      for (std::uint64_t r = 0; r < rank; ++r) {
        a.shape.push_back(read_u64(in));
        numel *= a.shape.back();
      }
      a.values.resize(numel);
      in.read(reinterpret_cast<char*>(a.values.data()),
              static_cast<std::streamsize>(numel * sizeof(double)));
      if (!in) throw IoError("checkpoint: truncated data for '" + a.name + "'");
      ck.arrays.push_back(std::move(a));
    }
    return ck;
  }

 private:
  void push(NamedArray a) {
    if (contains(a.name)) throw ConfigError("checkpoint: duplicate array '" + a.name + "'");
    arrays.push_back(std::move(a));
  }
  const NamedArray* lookup(const std::string& name) const {
    for (const NamedArray& a : arrays) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  static void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("checkpoint: truncated header");
    return v;
  }
  static std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("checkpoint: truncated header");
    return v;
  }
  static std::string read_string(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    if (n > (1ull << 32)) throw IoError("checkpoint: corrupt string length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw IoError("checkpoint: truncated string");
    return s;
  }
};

}  // namespace reppo
