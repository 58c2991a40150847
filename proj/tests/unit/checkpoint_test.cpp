#include <gtest/gtest.h>

#include <filesystem>

#include "congrpo/checkpoint.hpp"
#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/micromed.hpp"
#include "test_util.hpp"

namespace congrpo {
namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.vocab = micromed::make_vocabulary();
  Rng rng(21);
  c.params = testing::random_params(micromed_layout(c.vocab), rng);
  c.params.set_version("test-v1");
  c.role = SnapshotRole::kSftReference;
  c.meta = {{"stage", "sft"}, {"seed", "4"}};
  return c;
}

TEST(Checkpoint, RoundTripIsExactAndByteStable) {
  const auto c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "congrpo_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto c = sample_checkpoint();
  save_checkpoint(dir / "a.ckpt", c);
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt"), c);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, VersionMismatchIsAConfigError) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[8] = 9;  // format version follows the 8-byte magic
  try {
    decode_checkpoint(bytes);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, CorruptInputIsAnIoError) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  EXPECT_THROW(decode_checkpoint("NOTACKPT"), IoError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), IoError);
  EXPECT_THROW(load_checkpoint("/nonexistent/file.ckpt"), IoError);
}

TEST(Checkpoint, SnapshotKeepsRole) {
  const auto c = sample_checkpoint();
  const auto snap = to_snapshot(c);
  EXPECT_EQ(snap.role(), SnapshotRole::kSftReference);
  EXPECT_EQ(snap.params(), c.params);
}

}  // namespace
}  // namespace congrpo
