#pragma once

#include <atomic>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synapse/model.hpp"
#include "synapse/telemetry.hpp"

namespace synapse {

inline constexpr double kMaxSampleRateHz = 10.0;  // one sample every 100 ms
inline constexpr const char* kSampleRateEnvVar = "SYNAPSE_SAMPLE_RATE";

struct ProfilerConfig {
  double sample_rate_hz = 1.0;
  std::set<std::string> tags;
  std::set<ResourceKind> watchers_enabled = {
      ResourceKind::Compute, ResourceKind::Memory, ResourceKind::Storage};
  double fp_fraction = 1.0;  // FLOPs = instructions * fp_fraction

  // Throws std::invalid_argument when the rate is outside (0, 10] or no
  // valid watcher kind is enabled.
  void validate() const;

  // Default config with SYNAPSE_SAMPLE_RATE applied when set.
  static ProfilerConfig from_environment();
};

// Watcher plugins move strictly Created -> PreProcessed -> Sampling ->
// PostProcessed -> Finalized; finalization happens only after every watcher
// has post-processed, because it may read other watchers' raw results.
enum class WatcherState {
  Created,
  PreProcessed,
  Sampling,
  PostProcessed,
  Finalized
};

class WatcherLifecycle {
 public:
  WatcherState state() const { return state_; }
  // Throws std::logic_error unless `next` is the immediate successor.
  void advance(WatcherState next);

 private:
  WatcherState state_ = WatcherState::Created;
};

// Authoritative end-of-run accounting for the wrapped target process
// (rusage of the reaped child, or scripted equivalents).
struct WrapAccounting {
  double cpu_time_s = 0.0;
  std::uint64_t max_rss_bytes = 0;
  int exit_status = 0;
};

// Lifetime control for the profiled target. The profiler owns the sequence:
// probe() -> watchers sample -> wait_exited() -> watchers stop -> reap().
// Between exit and reap() a real child stays a zombie so its counters remain
// readable for the watchers' final samples.
class TargetControl {
 public:
  virtual ~TargetControl() = default;
  virtual ProbeTarget probe() const = 0;
  virtual void wait_exited() = 0;
  virtual WrapAccounting reap() = 0;
};

// fork/exec child. No shell is involved; argv is passed through verbatim.
class ChildProcess : public TargetControl {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv);
  ~ChildProcess() override;

  ProbeTarget probe() const override { return probe_; }
  void wait_exited() override;
  WrapAccounting reap() override;

 private:
  ProbeTarget probe_;
  bool reaped_ = false;
  WrapAccounting accounting_;
};

// Fake target whose lifetime is a fixed duration; pairs with ScriptedBackend.
class ScriptedTarget : public TargetControl {
 public:
  ScriptedTarget(double duration_s, WrapAccounting accounting = {});

  ProbeTarget probe() const override { return probe_; }
  void wait_exited() override;
  WrapAccounting reap() override { return accounting_; }

 private:
  ProbeTarget probe_;
  double duration_s_;
  WrapAccounting accounting_;
};

struct WatcherOutput {
  std::vector<Sample> samples;
  double first_snapshot_at_s = -1.0;  // monotonic; -1 when never sampled
  WatcherState final_state = WatcherState::Created;
};

// One periodic sampling loop: a sample immediately on attach (the delta from
// the implicit zero baseline at spawn), then one per period. The loop ends
// with the first sample whose period boundary was scheduled at or after
// `stop_at_s` (monotonic; +inf while the target runs), so profiling always
// terminates on a full-period boundary. Counter-source failures become gap
// samples; the next good delta spans the gap.
WatcherOutput run_watcher(TelemetryBackend& backend, const ProbeTarget& target,
                          ResourceKind kind, double rate_hz,
                          const std::atomic<double>& stop_at_s);

// Merges watcher series, applies the wrap-accounting corrections (peak
// memory and, for estimated CPU counters, CPU time — larger wins, folded
// into the final sample of the series so totals stay recomputable), then
// integrates totals.
Profile finalize_profile(SampleSeries series, const WrapAccounting& accounting,
                         const SystemInfo& system, const std::string& command,
                         const ProfilerConfig& config, double runtime_s,
                         double spawn_offset_s, bool cpu_counters_estimated);

class Profiler {
 public:
  explicit Profiler(TelemetryBackend& backend) : backend_(backend) {}

  // Spawns argv and profiles it to completion. Throws CommandError when the
  // target cannot be spawned; a nonzero target exit still yields a profile
  // with the status recorded.
  Profile profile_command(const std::vector<std::string>& argv,
                          const ProfilerConfig& config);

  // Profiles an externally managed target (used with scripted backends).
  Profile profile_target(TargetControl& target, const std::string& command,
                         const ProfilerConfig& config);

 private:
  TelemetryBackend& backend_;
};

// Whitespace-split a command line into argv form (no shell semantics).
std::vector<std::string> split_command(const std::string& command);
std::string join_command(const std::vector<std::string>& argv);

}  // namespace synapse
