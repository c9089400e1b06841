#include "llara/core/archive.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace llara::io {

namespace {

constexpr char kMagic[8] = {'L', 'L', 'A', 'R', 'A', 'A', 'R', 'R'};
constexpr std::uint32_t kVersion = 1;

template <class T>
std::vector<std::uint8_t> to_bytes(const T* data, std::size_t n) {
  std::vector<std::uint8_t> out(n * sizeof(T));
  std::memcpy(out.data(), data, out.size());
  return out;
}

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ArchiveError("truncated archive header");
  return v;
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64" || dtype == "i64") return 8;
  throw ArchiveError("unknown dtype '" + dtype + "'");
}

}  // namespace

void ArrayArchive::put(const std::string& name, const Matrix<float>& m) {
  entries_[name] = {{m.rows(), m.cols()}, "f32", to_bytes(m.data(), static_cast<std::size_t>(m.size()))};
}

void ArrayArchive::put(const std::string& name, const Matrix<double>& m) {
  entries_[name] = {{m.rows(), m.cols()}, "f64", to_bytes(m.data(), static_cast<std::size_t>(m.size()))};
}

void ArrayArchive::put_ints(const std::string& name, const std::vector<std::int64_t>& v) {
  entries_[name] = {{static_cast<std::int64_t>(v.size())}, "i64", to_bytes(v.data(), v.size())};
}

std::vector<std::string> ArrayArchive::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

const ArrayArchive::Entry& ArrayArchive::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ArchiveError("no array named '" + name + "'");
  return it->second;
}

template <class S>
Matrix<S> ArrayArchive::get(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.shape.size() != 2) throw ArchiveError("array '" + name + "' is not two-dimensional");
  Matrix<S> out(e.shape[0], e.shape[1]);
  const auto n = static_cast<std::size_t>(out.size());
  if (e.dtype == "f32") {
    std::vector<float> tmp(n);
    std::memcpy(tmp.data(), e.bytes.data(), n * sizeof(float));
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<S>(tmp[i]);
  } else if (e.dtype == "f64") {
    std::vector<double> tmp(n);
    std::memcpy(tmp.data(), e.bytes.data(), n * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<S>(tmp[i]);
  } else {
    throw ArchiveError("array '" + name + "' is not floating point");
  }
  return out;
}

template Matrix<float> ArrayArchive::get<float>(const std::string&) const;
template Matrix<double> ArrayArchive::get<double>(const std::string&) const;

std::vector<std::int64_t> ArrayArchive::get_ints(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != "i64") throw ArchiveError("array '" + name + "' is not i64");
  std::vector<std::int64_t> out(e.bytes.size() / sizeof(std::int64_t));
  std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

nlohmann::json ArrayArchive::index() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [name, e] : entries_) arr.push_back({{"name", name}, {"shape", e.shape}, {"dtype", e.dtype}});
  return arr;
}

void ArrayArchive::save(const std::string& path) const {
  nlohmann::json header;
  header["manifest"] = manifest;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, e] : entries_) {
    header["arrays"].push_back(
        {{"name", name}, {"shape", e.shape}, {"dtype", e.dtype}, {"offset", offset}, {"nbytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ArchiveError("cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [_, e] : entries_)
    os.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
  if (!os) throw ArchiveError("write failed for '" + path + "'");
}

ArrayArchive ArrayArchive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArchiveError("cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ArchiveError("'" + path + "' is not an array archive");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion) throw ArchiveError("unsupported archive version " + std::to_string(version));
  const auto hlen = read_pod<std::uint64_t>(is);
  std::string text(hlen, '\0');
  is.read(text.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw ArchiveError("truncated archive header");
  const auto header = nlohmann::json::parse(text);
  ArrayArchive ar;
  ar.manifest = header.value("manifest", nlohmann::json::object());
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  for (const auto& a : header.at("arrays")) {
    Entry e;
    e.shape = a.at("shape").get<std::vector<std::int64_t>>();
    e.dtype = a.at("dtype").get<std::string>();
    const auto off = a.at("offset").get<std::uint64_t>();
    const auto nbytes = a.at("nbytes").get<std::uint64_t>();
    std::uint64_t count = 1;
    for (auto d : e.shape) count *= static_cast<std::uint64_t>(d);
    if (count * dtype_size(e.dtype) != nbytes || off + nbytes > blob.size())
      throw ArchiveError("corrupt array entry '" + a.at("name").get<std::string>() + "'");
    e.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(off), blob.begin() + static_cast<std::ptrdiff_t>(off + nbytes));
    ar.entries_[a.at("name").get<std::string>()] = std::move(e);
  }
  return ar;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace llara::io
