#pragma once

#include <chrono>
#include <random>
#include <string>

#include "synapse/model.hpp"
#include "synapse/profile_json.hpp"

namespace synapse::testing {

inline SystemInfo test_system_info() {
  SystemInfo info;
  info.core_count = 4;
  info.max_freq_hz = 2'000'000'000;
  info.total_memory_bytes = 8ull << 30;
  info.os_descriptor = "scripted-os 1.0";
  info.cpu_model = "scripted-cpu";
  return info;
}

// Random but internally consistent profile: ordered series, matching totals,
// microsecond-truncated created_at so persistence round-trips exactly.
inline Profile make_random_profile(std::mt19937& rng,
                                   const std::string& command = "cmd",
                                   std::set<std::string> tags = {}) {
  std::uniform_int_distribution<std::uint64_t> count(0, 1'000'000);
  std::uniform_int_distribution<int> samples(1, 12);

  Profile profile;
  profile.command = command;
  profile.tags = std::move(tags);
  profile.system = test_system_info();
  profile.sample_rate_hz = 1.0;
  profile.spawn_offset_s = 0.004;
  profile.created_at = truncate_to_us(std::chrono::system_clock::now());

  const int n = samples(rng);
  std::uint64_t peak = 0;
  std::vector<Sample> cpu, mem, io;
  for (int i = 0; i < n; ++i) {
    Sample c;
    c.index = static_cast<std::uint64_t>(i);
    c.timestamp_s = 0.05 + static_cast<double>(i);
    c.kind = ResourceKind::Compute;
    c.payload = CpuSample{count(rng), count(rng), count(rng) / 4,
                          count(rng) / 4};
    cpu.push_back(c);

    Sample m = c;
    m.kind = ResourceKind::Memory;
    const std::uint64_t resident = count(rng);
    peak = std::max(peak, resident);
    m.payload = MemSample{peak, resident, count(rng), count(rng)};
    mem.push_back(m);

    Sample s = c;
    s.kind = ResourceKind::Storage;
    s.payload = IoSample{count(rng), count(rng)};
    io.push_back(s);
  }
  profile.series[ResourceKind::Compute] = std::move(cpu);
  profile.series[ResourceKind::Memory] = std::move(mem);
  profile.series[ResourceKind::Storage] = std::move(io);
  profile.totals =
      integrate_totals(profile.series, 0.5 + static_cast<double>(n));
  return profile;
}

}  // namespace synapse::testing
