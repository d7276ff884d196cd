#include "facelab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "facelab/error.hpp"
#include "json_util.hpp"

namespace facelab {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[4] = {'F', 'X', 'Z', 'C'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError(path + ": truncated checkpoint while reading " + what);
  return v;
}

std::string shape_str(const std::array<int, 4>& s) {
  return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) +
         "," + std::to_string(s[3]) + "]";
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void Checkpoint::add(std::string name, const Tensor<float>& t) {
  tensors.push_back({std::move(name), t.shape(), t.storage()});
}

void Checkpoint::add(std::string name, std::array<int, 4> shape, std::vector<float> data) {
  tensors.push_back({std::move(name), shape, std::move(data)});
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ckpt.meta_json.size());
  out.write(ckpt.meta_json.data(), static_cast<std::streamsize>(ckpt.meta_json.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    for (int d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string p = path.string();
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(p + ": bad magic (not an FXZC checkpoint)");
  }
  const auto version = get<std::uint32_t>(in, p, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(p + ": checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  const auto meta_len = get<std::uint64_t>(in, p, "metadata length");
  ckpt.meta_json.resize(static_cast<std::size_t>(meta_len));
  in.read(ckpt.meta_json.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw FormatError(p + ": truncated checkpoint metadata");
  const auto count = get<std::uint32_t>(in, p, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(get<std::uint16_t>(in, p, "name length"));
    in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    std::size_t n = 1;
    for (auto& d : t.shape) {
      d = static_cast<int>(get<std::uint32_t>(in, p, "tensor shape"));
      n *= static_cast<std::size_t>(d);
    }
    t.data.resize(n);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw FormatError(p + ": truncated tensor '" + t.name + "'");
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void store_backbone(Checkpoint& ckpt, BackboneNet<float>& net, const std::string& prefix) {
  for (const auto& p : net.parameters()) ckpt.add(prefix + p.name, p.param->value);
  for (const auto& b : net.buffers()) ckpt.add(prefix + b.name, *b.tensor);
}

void restore_backbone(const Checkpoint& ckpt, BackboneNet<float>& net, const std::string& prefix) {
  auto restore = [&](const std::string& name, Tensor<float>& dst) {
    const NamedTensor* t = ckpt.find(prefix + name);
    if (!t) throw LookupError("checkpoint is missing tensor '" + prefix + name + "'");
    if (t->shape != dst.shape()) {
      throw ShapeError("checkpoint tensor '" + prefix + name + "': expected shape " +
                       dst.shape_string() + ", found " + shape_str(t->shape));
    }
    std::copy(t->data.begin(), t->data.end(), dst.data());
  };
  for (const auto& p : net.parameters()) restore(p.name, p.param->value);
  for (const auto& b : net.buffers()) restore(b.name, *b.tensor);
}

BackboneSpec checkpoint_backbone_spec(const Checkpoint& ckpt) {
  try {
    return backbone_from_json(json::parse(ckpt.meta_json).at("backbone"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata has no valid backbone spec: ") + e.what());
  }
}

std::unique_ptr<BackboneNet<float>> load_backbone_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  auto net = create_backbone<float>(checkpoint_backbone_spec(ckpt), 0);
  restore_backbone(ckpt, *net);
  return net;
}

}  // namespace facelab
