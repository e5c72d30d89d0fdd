#include "han/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "han/errors.hpp"

namespace han {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'N', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(T v) {
    v = to_little(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, const std::filesystem::path& path) : is_(is), path_(path) {}
  template <typename T>
  T pod() {
    T v;
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw IoError("truncated checkpoint: " + path_.string());
    return to_little(v);
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    is_.read(s.data(), n);
    if (!is_) throw IoError("truncated checkpoint: " + path_.string());
    return s;
  }

 private:
  std::istream& is_;
  const std::filesystem::path& path_;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Write to a sibling file and rename so a crash never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + tmp.string());
    Writer w(os);
    os.write(kMagic, sizeof kMagic);
    w.pod<std::uint32_t>(ckpt.version);
    w.pod<std::uint64_t>(ckpt.step);
    w.pod<std::uint64_t>(ckpt.corpus_hash);
    w.str(ckpt.config);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.counters.size()));
    for (const auto& [name, value] : ckpt.counters) {
      w.str(name);
      w.pod<std::uint64_t>(value);
    }
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      w.str(name);
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) w.pod<std::uint64_t>(d);
      for (Real v : t.data()) w.pod<double>(v);
    }
    if (!os) throw IoError("failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof kMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  Reader r(is, path);
  Checkpoint ckpt;
  ckpt.version = r.pod<std::uint32_t>();
  if (ckpt.version != Checkpoint::kFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " +
                  path.string());
  }
  ckpt.step = r.pod<std::uint64_t>();
  ckpt.corpus_hash = r.pod<std::uint64_t>();
  ckpt.config = r.str();
  const auto n_counters = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_counters; ++i) {
    auto name = r.str();
    ckpt.counters[name] = r.pod<std::uint64_t>();
  }
  const auto n_tensors = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank == 0 || rank > 8) throw IoError("corrupt tensor rank in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) v = r.pod<double>();
    ckpt.tensors.emplace_back(std::move(name), Tensor::from_data(shape, std::move(values)));
  }
  return ckpt;
}

void store_tensors(Checkpoint& ckpt, const std::string& prefix, const nn::ParameterSet& set) {
  for (const auto& [name, t] : set) ckpt.tensors.emplace_back(prefix + "." + name, t.detach());
}

void restore_tensors(const Checkpoint& ckpt, const std::string& prefix, nn::ParameterSet& set) {
  for (auto& [name, t] : set) {
    const Tensor* src = ckpt.find(prefix + "." + name);
    if (!src) throw UsageError("checkpoint is missing tensor " + prefix + "." + name);
    if (src->shape() != t.shape()) {
      throw UsageError("checkpoint tensor " + prefix + "." + name + " has shape " +
                       shape_to_string(src->shape()) + ", model expects " +
                       shape_to_string(t.shape()));
    }
    std::copy(src->data().begin(), src->data().end(), t.mutable_data().begin());
  }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace han
