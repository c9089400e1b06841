#pragma once

// Self-describing container of named row-major numeric arrays with an
// embedded JSON manifest.
//
// Layout (little-endian):
//   8 bytes   magic "LLARAARR"
//   u32       format version (1)
//   u64       header length H
//   H bytes   JSON header {"manifest": {...}, "arrays": [{name, shape, dtype, offset, nbytes}]}
//   ...       array payloads, offsets relative to the end of the header

#include "llara/core/nn.hpp"
#include "llara/core/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace llara::io {

class ArchiveError : public Error {
 public:
  using Error::Error;
};

class ArrayArchive {
 public:
  struct Entry {
    std::vector<std::int64_t> shape;
    std::string dtype;  // "f32" | "f64" | "i64"
    std::vector<std::uint8_t> bytes;
    bool operator==(const Entry&) const = default;
  };

  nlohmann::json manifest = nlohmann::json::object();

  void put(const std::string& name, const Matrix<float>& m);
  void put(const std::string& name, const Matrix<double>& m);
  void put_ints(const std::string& name, const std::vector<std::int64_t>& v);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  std::vector<std::string> names() const;
  const Entry& entry(const std::string& name) const;

  /// Converts to the requested scalar type on read.
  template <class S>
  Matrix<S> get(const std::string& name) const;
  std::vector<std::int64_t> get_ints(const std::string& name) const;

  void save(const std::string& path) const;
  static ArrayArchive load(const std::string& path);

  /// Array index (name, shape, dtype) as JSON, for manifests.
  nlohmann::json index() const;

  bool operator==(const ArrayArchive& o) const { return manifest == o.manifest && entries_ == o.entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

template <class S>
void store_params(ArrayArchive& ar, const std::vector<nn::NamedParam<S>>& params, const std::string& prefix = "") {
  for (const auto& p : params) ar.put(prefix + p.name, p.param->value);
}

/// Loads every named parameter; shapes must match exactly.
template <class S>
void load_params(const ArrayArchive& ar, std::vector<nn::NamedParam<S>>& params, const std::string& prefix = "") {
  for (auto& p : params) {
    const std::string key = prefix + p.name;
    if (!ar.contains(key)) throw ArchiveError("checkpoint is missing array '" + key + "'");
    Matrix<S> m = ar.get<S>(key);
    if (m.rows() != p.param->rows() || m.cols() != p.param->cols())
      throw ArchiveError("checkpoint array '" + key + "' has shape " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", model expects " + std::to_string(p.param->rows()) + "x" +
                         std::to_string(p.param->cols()));
    p.param->value = std::move(m);
  }
}

/// FNV-1a 64-bit over a byte string; stable across platforms and runs.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace llara::io
