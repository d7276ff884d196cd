#include "facelab/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "facelab/error.hpp"
#include "facelab/vector_ops.hpp"

namespace facelab {

static_assert(std::endian::native == std::endian::little,
              "embedding store I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'X', 'Z', 'E'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get(const char* what) {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw FormatError(path_ + ": truncated file while reading " + what);
    return v;
  }

  std::string get_string(std::size_t n, const char* what) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError(path_ + ": truncated file while reading " + what);
    return s;
  }

  void get_floats(float* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in_) throw FormatError(path_ + ": truncated file while reading vector data");
  }

 private:
  std::ifstream& in_;
  std::string path_;
};

bool is_unit(const std::vector<float>& v) {
  if (v.empty()) return false;
  return std::abs(l2_norm(v) - 1.0) <= 1e-6;
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::vector<EmbeddingRecord> records) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void EmbeddingStore::add(EmbeddingRecord record) {
  const int d = static_cast<int>(record.vector.size());
  if (records_.empty()) {
    dim_ = d;
  } else if (d != dim_) {
    throw ShapeError("embedding store: record '" + record.image_key + "' has dimension " +
                     std::to_string(d) + ", store has " + std::to_string(dim_));
  }
  if (index_.count(record.image_key)) {
    throw ValueError("embedding store: duplicate key '" + record.image_key + "'");
  }
  index_.emplace(record.image_key, records_.size());
  records_.push_back(std::move(record));
}

const EmbeddingRecord* EmbeddingStore::find(const std::string& image_key) const {
  auto it = index_.find(image_key);
  return it == index_.end() ? nullptr : &records_[it->second];
}

const EmbeddingRecord& EmbeddingStore::at(const std::string& image_key) const {
  if (const auto* r = find(image_key)) return *r;
  throw LookupError("embedding store has no key '" + image_key + "'");
}

void write_embedding_store(std::span<const EmbeddingRecord> records,
                           const std::filesystem::path& path) {
  const std::uint32_t dim =
      records.empty() ? 0u : static_cast<std::uint32_t>(records.front().vector.size());
  for (const auto& r : records) {
    if (r.vector.size() != dim) throw ShapeError("write_embedding_store: non-uniform dimension");
    if (r.id.size() > 0xffff || r.image_key.size() > 0xffff) {
      throw ValueError("write_embedding_store: id or key longer than 65535 bytes");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding store " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kEmbeddingStoreVersion);
  put<std::uint64_t>(out, records.size());
  put<std::uint32_t>(out, dim);
  for (const auto& r : records) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.id.size()));
    out.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.image_key.size()));
    out.write(r.image_key.data(), static_cast<std::streamsize>(r.image_key.size()));
    out.write(reinterpret_cast<const char*>(r.vector.data()),
              static_cast<std::streamsize>(r.vector.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to " + path.string());
}

void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_embedding_store(std::span<const EmbeddingRecord>(store.records()), path);
}

EmbeddingStore read_embedding_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding store " + path.string());
  Reader rd(in, path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic (not an FXZE embedding store)");
  }
  const auto version = rd.get<std::uint32_t>("version");
  if (version != kEmbeddingStoreVersion) {
    throw FormatError(path.string() + ": unsupported store version " + std::to_string(version) +
                      " (expected " + std::to_string(kEmbeddingStoreVersion) + ")");
  }
  const auto count = rd.get<std::uint64_t>("count");
  const auto dim = rd.get<std::uint32_t>("dim");
  std::vector<EmbeddingRecord> records;
  records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    r.id = rd.get_string(rd.get<std::uint16_t>("id length"), "id");
    r.image_key = rd.get_string(rd.get<std::uint16_t>("key length"), "key");
    r.vector.resize(dim);
    rd.get_floats(r.vector.data(), dim);
    r.normalized = is_unit(r.vector);
    records.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after " + std::to_string(count) +
                      " records");
  }
  return EmbeddingStore(std::move(records));
}

EmbeddingStore concat_stores(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.size() != b.size()) throw ShapeError("concat_stores: stores differ in size");
  EmbeddingStore out;
  for (const auto& ra : a.records()) {
    const auto& rb = b.at(ra.image_key);
    if (rb.id != ra.id) {
      throw ValueError("concat_stores: identity mismatch for key '" + ra.image_key + "'");
    }
    EmbeddingRecord r{ra.id, ra.image_key, ra.vector, true};
    r.vector.insert(r.vector.end(), rb.vector.begin(), rb.vector.end());
    l2_normalize_inplace(r.vector);
    out.add(std::move(r));
  }
  return out;
}

}  // namespace facelab
