#pragma once
// Versioned binary checkpoint container.
//
// Layout (little-endian):
//   magic "CGRPOCKP" | u32 format version | u8 role | str version tag
//   | u32 x5 feature layout | u32 n, str x n vocabulary
//   | u32 n, (str key, str value) x n metadata
//   | u32 n arrays, each: str name, u32 rank, u64 x rank dims, f64 x prod(dims)
// where str is u32 byte length followed by the bytes. Doubles are stored bit
// for bit, so load(save(x)) == x and save(load(bytes)) == bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "congrpo/policy.hpp"
#include "congrpo/vocabulary.hpp"

namespace congrpo {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  Vocabulary vocab;
  PolicyParams params;
  SnapshotRole role = SnapshotRole::kBehavior;
  std::map<std::string, std::string> meta;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws ConfigError on a version mismatch, IoError on corrupt input.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

PolicySnapshot to_snapshot(const Checkpoint& ckpt);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace congrpo
