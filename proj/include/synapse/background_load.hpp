#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <thread>
#include <vector>

namespace synapse {

// Manually specified artificial pressure; there is no feedback loop
// measuring the ambient system load.
struct BackgroundLoadSpec {
  double cpu_fraction = 0.0;  // cores' worth of busy time, e.g. 2.5
  double disk_write_mbps = 0.0;
  std::uint64_t memory_bytes = 0;
  std::filesystem::path scratch_dir;  // empty -> temp dir
};

// Sustains the requested load until release() (or destruction). Memory is
// allocated and touched up front; an unsatisfiable request fails
// immediately with AtomError.
class BackgroundLoad {
 public:
  explicit BackgroundLoad(const BackgroundLoadSpec& spec);
  ~BackgroundLoad();

  BackgroundLoad(const BackgroundLoad&) = delete;
  BackgroundLoad& operator=(const BackgroundLoad&) = delete;

  void release();
  bool active() const { return active_; }
  std::uint64_t held_memory_bytes() const;

 private:
  std::atomic<bool> stop_{false};
  bool active_ = false;
  std::vector<std::thread> workers_;
  std::vector<std::unique_ptr<std::byte[]>> memory_blocks_;
  std::uint64_t held_memory_ = 0;
  std::filesystem::path disk_path_;
};

}  // namespace synapse
