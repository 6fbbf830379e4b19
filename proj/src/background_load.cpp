#include "synapse/background_load.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <new>

#include "synapse/atoms.hpp"
#include "synapse/error.hpp"
#include "synapse/telemetry.hpp"

namespace synapse {

namespace {

// Busy work for one duty-cycle quantum's worth of CPU at `fraction`.
void cpu_load_loop(double fraction, const std::atomic<bool>& stop) {
  const double busy_s = kDutyCycleQuantumS * fraction;
  const double idle_s = kDutyCycleQuantumS - busy_s;
  volatile double sink = 1.0;
  while (!stop.load(std::memory_order_relaxed)) {
    const double until = monotonic_now_s() + busy_s;
    while (monotonic_now_s() < until)
      for (int i = 0; i < 2000; ++i) sink = sink * 1.0000001 + 0.0000001;
    if (idle_s > 0.0)
      std::this_thread::sleep_for(std::chrono::duration<double>(idle_s));
  }
}

void disk_load_loop(const std::filesystem::path& path, double mbps,
                    const std::atomic<bool>& stop) {
  constexpr std::uint64_t kWrapBytes = 256ull << 20;
  constexpr double kWindowS = 0.1;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return;
  const auto window_bytes =
      static_cast<std::uint64_t>(mbps * 1e6 * kWindowS);
  std::vector<char> buf(std::min<std::uint64_t>(window_bytes, 1u << 20), 'L');
  std::uint64_t written = 0;
  while (!stop.load(std::memory_order_relaxed)) {
    const double window_start = monotonic_now_s();
    std::uint64_t remaining = window_bytes;
    while (remaining > 0 && !stop.load(std::memory_order_relaxed)) {
      const std::uint64_t chunk =
          std::min<std::uint64_t>(remaining, buf.size());
      out.write(buf.data(), static_cast<std::streamsize>(chunk));
      remaining -= chunk;
      written += chunk;
      if (written >= kWrapBytes) {
        out.seekp(0);
        written = 0;
      }
    }
    out.flush();
    const double leftover = window_start + kWindowS - monotonic_now_s();
    if (leftover > 0.0)
      std::this_thread::sleep_for(std::chrono::duration<double>(leftover));
  }
}

}  // namespace

BackgroundLoad::BackgroundLoad(const BackgroundLoadSpec& spec) {
  if (spec.cpu_fraction < 0.0 || spec.disk_write_mbps < 0.0)
    throw std::invalid_argument("load fractions and rates must be >= 0");

  if (spec.memory_bytes > 0) {
    constexpr std::uint64_t kChunk = 64ull << 20;
    const auto page = static_cast<std::uint64_t>(sysconf(_SC_PAGESIZE));
    std::uint64_t remaining = spec.memory_bytes;
    while (remaining > 0) {
      const std::uint64_t size = std::min(kChunk, remaining);
      std::unique_ptr<std::byte[]> block;
      try {
        block = std::make_unique<std::byte[]>(size);
      } catch (const std::bad_alloc&) {
        memory_blocks_.clear();
        throw AtomError("background load: cannot hold " +
                        std::to_string(spec.memory_bytes) + " bytes");
      }
      for (std::uint64_t off = 0; off < size; off += page)
        block[off] = std::byte{0x6c};
      memory_blocks_.push_back(std::move(block));
      held_memory_ += size;
      remaining -= size;
    }
  }

  double cpu_left = spec.cpu_fraction;
  while (cpu_left > 1e-9) {
    const double fraction = std::min(1.0, cpu_left);
    workers_.emplace_back(
        [this, fraction] { cpu_load_loop(fraction, stop_); });
    cpu_left -= fraction;
  }

  if (spec.disk_write_mbps > 0.0) {
    auto dir = spec.scratch_dir.empty()
                   ? std::filesystem::temp_directory_path()
                   : spec.scratch_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    disk_path_ = dir / ("synapse-load-" + std::to_string(getpid()));
    workers_.emplace_back([this, mbps = spec.disk_write_mbps] {
      disk_load_loop(disk_path_, mbps, stop_);
    });
  }

  active_ = !workers_.empty() || !memory_blocks_.empty();
}

BackgroundLoad::~BackgroundLoad() { release(); }

void BackgroundLoad::release() {
  stop_.store(true, std::memory_order_relaxed);
  for (std::thread& worker : workers_) {
    if (worker.joinable()) worker.join();
  }
  workers_.clear();
  memory_blocks_.clear();
  held_memory_ = 0;
  if (!disk_path_.empty()) {
    std::error_code ec;
    std::filesystem::remove(disk_path_, ec);
    disk_path_.clear();
  }
  active_ = false;
}

std::uint64_t BackgroundLoad::held_memory_bytes() const {
  return held_memory_;
}

}  // namespace synapse
