#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>

#include "synapse/model.hpp"

namespace synapse {

inline constexpr std::uint64_t kDefaultBlockBytes = 1ull << 20;  // 1 MiB
inline constexpr double kDutyCycleQuantumS = 0.010;

// Host-specific cost of one compute-kernel iteration, measured once per
// process. With hardware counters the instruction cost is measured directly;
// otherwise it is defined as nominal_freq_hz / iterations-per-cpu-second,
// i.e. nominal cycles, matching the profiler's degraded CPU accounting (in
// that mode the atom consumes the corresponding CPU time, measured, rather
// than a fixed iteration count, so calibration drift cannot bias replay).
struct KernelCalibration {
  double instructions_per_iteration = 0.0;
  double iterations_per_cpu_second = 0.0;
  double nominal_freq_hz = 0.0;
  bool from_hardware_counters = false;
};

const KernelCalibration& kernel_calibration();

// What one atom actually consumed.
struct AtomReport {
  std::uint64_t instructions = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t allocated_bytes = 0;
  std::uint64_t freed_bytes = 0;
  std::uint64_t operations = 0;  // kernel iterations / syscalls / allocations

  AtomReport& operator+=(const AtomReport& other);
};

// Cache-resident numeric kernel; executes the instruction budget in
// duty-cycled batches when efficiency_target < 1 (work for target*quantum,
// sleep the remainder). Throws std::invalid_argument unless
// 0 < efficiency_target <= 1.
AtomReport run_compute_atom(std::uint64_t instructions,
                            double efficiency_target);

// Allocation arena shared across sample groups so the replayed resident-set
// trajectory accumulates the way the profiled process's did. Pages are
// touched on allocation. Thread-safe.
class MemoryPool {
 public:
  ~MemoryPool();

  AtomReport allocate(std::uint64_t bytes, std::uint64_t block_bytes);
  // Frees whole blocks, oldest first, until at least `bytes` are released or
  // the pool is empty; reports what was actually freed.
  AtomReport release(std::uint64_t bytes);
  std::uint64_t held_bytes() const;
  void clear();

 private:
  struct Block {
    std::unique_ptr<std::byte[]> data;
    std::uint64_t size = 0;
  };
  mutable std::mutex mu_;
  std::deque<Block> blocks_;
  std::uint64_t held_ = 0;
};

AtomReport run_memory_atom(MemoryPool& pool, std::uint64_t allocate_bytes,
                           std::uint64_t free_bytes,
                           std::uint64_t block_bytes);

// Scratch backing for storage atoms: a sparse pre-seeded read file and a
// write target that wraps at a cap so long replays cannot fill the disk.
// Blocks never straddle the wrap point, so operation counts stay exact.
class ScratchFiles {
 public:
  ScratchFiles(std::filesystem::path directory, std::uint64_t seed_bytes,
               std::uint64_t write_wrap_bytes = 1ull << 30);
  ~ScratchFiles();

  ScratchFiles(const ScratchFiles&) = delete;
  ScratchFiles& operator=(const ScratchFiles&) = delete;

  AtomReport read(std::uint64_t bytes, std::uint64_t block_bytes);
  AtomReport write(std::uint64_t bytes, std::uint64_t block_bytes);

  const std::filesystem::path& directory() const { return directory_; }

 private:
  std::filesystem::path directory_;
  std::filesystem::path read_path_;
  std::filesystem::path write_path_;
  int read_fd_ = -1;
  int write_fd_ = -1;
  std::uint64_t seed_bytes_ = 0;
  std::uint64_t write_wrap_bytes_ = 0;
  std::uint64_t read_offset_ = 0;
  std::uint64_t write_offset_ = 0;
  std::mutex mu_;
};

AtomReport run_storage_atom(ScratchFiles& scratch, std::uint64_t read_bytes,
                            std::uint64_t write_bytes,
                            std::uint64_t block_bytes);

}  // namespace synapse
