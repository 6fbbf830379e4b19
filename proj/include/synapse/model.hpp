#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace synapse {

// Resource families the profiler observes and the emulator can replay.
// Network is reserved for a future version and has no payload type yet.
enum class ResourceKind { System, Compute, Storage, Memory };

const char* to_string(ResourceKind kind);
ResourceKind resource_kind_from_string(const std::string& name);

// Static machine facts, read once per profile.
struct SystemInfo {
  std::uint32_t core_count = 1;
  std::uint64_t max_freq_hz = 1;      // nominal maximum clock
  std::uint64_t total_memory_bytes = 1;
  std::string os_descriptor;
  std::string cpu_model;

  bool operator==(const SystemInfo&) const = default;
};

// Per-sampling-period deltas of CPU activity. When hardware counters are
// unavailable the fields hold nominal-cycle estimates derived from process
// CPU time (see Profile::cpu_counters_estimated).
struct CpuSample {
  std::uint64_t instructions = 0;
  std::uint64_t cycles_used = 0;
  std::uint64_t cycles_stalled_frontend = 0;
  std::uint64_t cycles_stalled_backend = 0;

  bool operator==(const CpuSample&) const = default;
};

// peak/resident are levels at sample time; allocated/freed are per-period
// deltas derived from resident-size movement.
struct MemSample {
  std::uint64_t peak_bytes = 0;
  std::uint64_t resident_bytes = 0;
  std::uint64_t allocated_bytes = 0;
  std::uint64_t freed_bytes = 0;

  bool operator==(const MemSample&) const = default;
};

struct IoSample {
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;

  bool operator==(const IoSample&) const = default;
};

using SamplePayload = std::variant<CpuSample, MemSample, IoSample>;

// Resource kind implied by a payload alternative.
ResourceKind kind_of(const SamplePayload& payload);

// One sampling-period record for one resource kind.
struct Sample {
  std::uint64_t index = 0;
  double timestamp_s = 0.0;  // seconds since target spawn, per-watcher clock
  ResourceKind kind = ResourceKind::Compute;
  SamplePayload payload;
  bool gap = false;  // set when the period's counters could not be read

  bool matches_kind() const { return kind_of(payload) == kind; }
  bool operator==(const Sample&) const = default;
};

using SampleSeries = std::map<ResourceKind, std::vector<Sample>>;

// Throws std::invalid_argument unless indices and timestamps are strictly
// increasing and every payload matches its declared kind.
void validate_series(const std::vector<Sample>& series);

struct DerivedCpuMetrics {
  double efficiency = 0.0;
  double utilization = 0.0;
  std::uint64_t flops = 0;
  double flops_per_s = 0.0;
};

// Integrated totals over a profile run: sums for delta metrics, maxima for
// the level metrics (peak/resident).
struct Totals {
  double runtime_s = 0.0;
  std::uint64_t instructions = 0;
  std::uint64_t cycles_used = 0;
  std::uint64_t cycles_stalled_frontend = 0;
  std::uint64_t cycles_stalled_backend = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t peak_bytes = 0;
  std::uint64_t resident_bytes = 0;
  std::uint64_t allocated_bytes = 0;
  std::uint64_t freed_bytes = 0;

  bool operator==(const Totals&) const = default;
};

// Fixed iteration order over the totals metrics; shared by stats, JSON and
// CSV emitters so column/field order never drifts.
template <class Fn>
void for_each_metric(const Totals& totals, Fn&& fn) {
  fn("runtime_s", totals.runtime_s);
  fn("instructions", static_cast<double>(totals.instructions));
  fn("cycles_used", static_cast<double>(totals.cycles_used));
  fn("cycles_stalled_frontend",
     static_cast<double>(totals.cycles_stalled_frontend));
  fn("cycles_stalled_backend",
     static_cast<double>(totals.cycles_stalled_backend));
  fn("bytes_read", static_cast<double>(totals.bytes_read));
  fn("bytes_written", static_cast<double>(totals.bytes_written));
  fn("peak_bytes", static_cast<double>(totals.peak_bytes));
  fn("resident_bytes", static_cast<double>(totals.resident_bytes));
  fn("allocated_bytes", static_cast<double>(totals.allocated_bytes));
  fn("freed_bytes", static_cast<double>(totals.freed_bytes));
}

std::vector<std::string> metric_names();

// A complete profiling record for one target run.
struct Profile {
  std::string command;
  std::set<std::string> tags;
  SystemInfo system;
  SampleSeries series;  // per-watcher timestamps may drift; merge is by index
  Totals totals;
  double sample_rate_hz = 1.0;
  double spawn_offset_s = 0.0;
  int exit_status = 0;
  bool cpu_counters_estimated = false;
  std::chrono::system_clock::time_point created_at;

  bool failed() const { return exit_status != 0; }
  bool operator==(const Profile&) const = default;
};

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation

  bool operator==(const MetricStats&) const = default;
};

// Mean and population stddev per totals metric over repeat runs of one key.
struct ProfileStats {
  std::size_t n = 0;
  std::map<std::string, MetricStats> metrics;
};

// --- Derived-metric formulas ------------------------------------------------

// used / (used + stalled_fe + stalled_be); 0.0 when every input is zero.
double derive_cpu_efficiency(std::uint64_t used, std::uint64_t stalled_fe,
                             std::uint64_t stalled_be);

// used / (max_freq_hz * elapsed_s * core_count). Not clamped to 1: dynamic
// clock scaling can exceed the nominal maximum.
double derive_cpu_utilization(std::uint64_t used, double elapsed_s,
                              const SystemInfo& sys);

// round(instructions * fp_fraction); fp_fraction must lie in [0, 1].
std::uint64_t derive_flops(const CpuSample& cpu, double fp_fraction);

DerivedCpuMetrics derive_cpu_metrics(const CpuSample& cpu, double elapsed_s,
                                     const SystemInfo& sys,
                                     double fp_fraction = 1.0);

// Sum delta metrics, max level metrics, copy runtime through.
Totals integrate_totals(const SampleSeries& series, double runtime_s);

// Per-metric mean and population stddev over the profiles' totals. All
// profiles must share command and tags.
ProfileStats aggregate_stats(const std::vector<Profile>& profiles);

}  // namespace synapse
