#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbgan/run_state.hpp"

namespace pbgan {

inline constexpr char kCheckpointMagic[4] = {'P', 'B', 'G', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFile = "run.ckpt";
inline constexpr const char* kLockFile = "run.lock";

/// Malformed or truncated checkpoint bytes. `offset` is where decoding stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Filesystem failures while reading or writing run files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;

/// Little-endian, self-describing encoding. Wall-clock time is not stored, so
/// identical runs serialize to identical bytes.
Bytes serialize_run(const RunState& run);
RunState deserialize_run(std::span<const std::uint8_t> bytes);

/// Called after each chunk written to the temporary file with the running byte
/// total. Throwing from it simulates a crash part way through a save.
using WriteProbe = std::function<void(std::size_t bytes_written)>;

/// Writes to `<path>.tmp` and renames over `path`, so readers only ever see a
/// complete old or a complete new file.
void save_checkpoint(const RunState& run, const std::filesystem::path& path, const WriteProbe& probe = {});
RunState load_checkpoint(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);

/// Exclusive advisory lock (flock) on `<run_dir>/run.lock`. The kernel drops
/// it when the holder exits, so a killed writer never leaves a stale lock.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace pbgan
