#include "congrpo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "congrpo/errors.hpp"

namespace congrpo {
namespace {

constexpr std::string_view kMagic = "CGRPOCKP";

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw IoError("checkpoint: truncated data");
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_array(Writer& w, std::string_view name, std::vector<std::uint64_t> shape,
                 std::span<const double> values) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u64(d);
  for (double v : values) w.f64(v);
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kCheckpointFormatVersion);
  w.u8(static_cast<std::uint8_t>(ckpt.role));
  w.str(ckpt.params.version());
  const FeatureLayout& l = ckpt.params.layout();
  for (int v : {l.observation_dim, l.num_axes, l.num_paraphrases, l.num_option_slots,
                l.vocab_size}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(ckpt.vocab.size()));
  for (const auto& t : ckpt.vocab.tokens()) w.str(t);
  w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(2);
  write_array(w, "weight", {ckpt.params.feature_dim(), ckpt.params.vocab_size()},
              ckpt.params.weight());
  write_array(w, "bias", {ckpt.params.vocab_size()}, ckpt.params.bias());
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(kMagic.size()) != kMagic) throw IoError("checkpoint: bad magic (not a checkpoint file)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw ConfigError(fmt::format(
        "checkpoint: format version {} is not supported by this build (expects {}); "
        "re-export the checkpoint with a matching release or upgrade this tool",
        version, kCheckpointFormatVersion));
  }
  const std::uint8_t role = r.u8();
  if (role > 1) throw IoError(fmt::format("checkpoint: unknown role tag {}", role));
  std::string tag = r.str();
  FeatureLayout layout;
  layout.observation_dim = static_cast<int>(r.u32());
  layout.num_axes = static_cast<int>(r.u32());
  layout.num_paraphrases = static_cast<int>(r.u32());
  layout.num_option_slots = static_cast<int>(r.u32());
  layout.vocab_size = static_cast<int>(r.u32());

  std::vector<std::string> tokens(r.u32());
  for (auto& t : tokens) t = r.str();

  Checkpoint ckpt;
  ckpt.role = static_cast<SnapshotRole>(role);
  ckpt.vocab = Vocabulary(std::move(tokens));
  if (static_cast<int>(ckpt.vocab.size()) != layout.vocab_size) {
    throw IoError("checkpoint: vocabulary size does not match layout");
  }
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.meta[k] = r.str();
  }
  ckpt.params = PolicyParams(layout, std::move(tag));
  const std::uint32_t n_arrays = r.u32();
  bool have_weight = false, have_bias = false;
  for (std::uint32_t a = 0; a < n_arrays; ++a) {
    const std::string name = r.str();
    std::vector<std::uint64_t> shape(r.u32());
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      count *= d;
    }
    std::span<double> dst;
    if (name == "weight" && shape.size() == 2 && shape[0] == ckpt.params.feature_dim() &&
        shape[1] == ckpt.params.vocab_size()) {
      dst = ckpt.params.weight();
      have_weight = true;
    } else if (name == "bias" && shape.size() == 1 && shape[0] == ckpt.params.vocab_size()) {
      dst = ckpt.params.bias();
      have_bias = true;
    } else {
      throw IoError(fmt::format("checkpoint: unexpected array '{}' or shape", name));
    }
    for (std::uint64_t i = 0; i < count; ++i) dst[i] = r.f64();
  }
  if (!have_weight || !have_bias) throw IoError("checkpoint: missing weight or bias array");
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("write failed for '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const IoError& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

PolicySnapshot to_snapshot(const Checkpoint& ckpt) { return PolicySnapshot(ckpt.params, ckpt.role); }

}  // namespace congrpo
