#include "pah/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "pah/errors.hpp"

namespace pah {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'H', 'C', 'K', 'P', 'T', '\0'};

enum class BlockKind : std::uint8_t { kParameter = 0, kBuffer = 1, kOptimizer = 2 };

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot write checkpoint " + path.string());
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, BlockKind kind, const Tensor& t) {
    str(name);
    pod(static_cast<std::uint8_t>(kind));
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) pod<std::uint64_t>(d);
    out_.write(reinterpret_cast<const char*>(t.data().data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("failed writing checkpoint " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot read checkpoint " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 30)) fail("string length out of range");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  void bytes(char* data, std::size_t n) {
    in_.read(data, static_cast<std::streamsize>(n));
    check();
  }
  [[noreturn]] void fail(const std::string& why) {
    throw IoError("corrupt checkpoint " + path_.string() + ": " + why);
  }

 private:
  void check() {
    if (!in_) fail("truncated file");
  }
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const PahModel& model, const Optimizer* optimizer, const CheckpointMeta& meta) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    Writer w(tmp);
    w.raw(kMagic, sizeof kMagic);
    w.pod(kCheckpointVersion);
    w.str(config.to_text());
    w.pod<std::uint64_t>(meta.epoch);
    w.pod<std::uint64_t>(meta.optimizer_steps);
    w.str(meta.rng_state);
    const NamedTensors params = model.parameters();
    const NamedTensors buffers = model.buffers();
    const NamedTensors state = optimizer ? optimizer->state() : NamedTensors{};
    w.pod<std::uint64_t>(params.size() + buffers.size() + state.size());
    for (const auto& p : params) w.tensor(p.name, BlockKind::kParameter, p.tensor);
    for (const auto& b : buffers) w.tensor(b.name, BlockKind::kBuffer, b.tensor);
    for (const auto& s : state) w.tensor(s.name, BlockKind::kOptimizer, s.tensor);
    w.finish();
  }
  std::filesystem::rename(tmp, path);
}

void restore_tensors(const NamedTensors& source, NamedTensors& target, const std::string& what) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : source) by_name[s.name] = &s.tensor;
  for (auto& t : target) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw IoError(what + ": missing tensor '" + t.name + "'");
    if (it->second->shape() != t.tensor.shape()) {
      throw IoError(what + ": shape mismatch for '" + t.name + "': stored " +
                    shape_to_string(it->second->shape()) + ", expected " +
                    shape_to_string(t.tensor.shape()));
    }
    auto src = it->second->data();
    std::copy(src.begin(), src.end(), t.tensor.mutable_data().begin());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("bad magic header");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  LoadedCheckpoint out;
  out.config = RunConfig::parse(r.str());
  out.meta.epoch = r.pod<std::uint64_t>();
  out.meta.optimizer_steps = r.pod<std::uint64_t>();
  out.meta.rng_state = r.str();

  NamedTensors params, buffers;
  const auto blocks = r.pod<std::uint64_t>();
  for (std::uint64_t b = 0; b < blocks; ++b) {
    std::string name = r.str();
    const auto kind = r.pod<std::uint8_t>();
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) r.fail("tensor rank out of range for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    Tensor t(shape);
    r.bytes(reinterpret_cast<char*>(t.mutable_data().data()), t.numel() * sizeof(double));
    switch (static_cast<BlockKind>(kind)) {
      case BlockKind::kParameter: params.push_back({std::move(name), t}); break;
      case BlockKind::kBuffer: buffers.push_back({std::move(name), t}); break;
      case BlockKind::kOptimizer: out.optimizer_state.push_back({std::move(name), t}); break;
      default: r.fail("unknown block kind for '" + name + "'");
    }
  }

  out.model = PahModel(out.config.model);
  NamedTensors model_params = out.model.parameters();
  NamedTensors model_buffers = out.model.buffers();
  restore_tensors(params, model_params, "checkpoint " + path.string());
  restore_tensors(buffers, model_buffers, "checkpoint " + path.string());
  return out;
}

}  // namespace pah
