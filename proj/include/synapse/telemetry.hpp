#pragma once

#include <sys/types.h>

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "synapse/model.hpp"

namespace synapse {

// Seconds on the monotonic clock shared by all watchers and targets.
double monotonic_now_s();

// Handle to a process this run spawned. Counter sources key off the pid;
// the handle is invalid once the process has been reaped.
struct ProbeTarget {
  pid_t pid = 0;
  double spawn_timestamp_s = 0.0;  // monotonic
};

// Raw cumulative counters since target spawn. The payload reuses the sample
// structs with cumulative semantics: every field is non-decreasing across
// successive snapshots except resident_bytes, which tracks the current level.
struct CounterSnapshot {
  double taken_at_s = 0.0;  // monotonic
  ResourceKind kind = ResourceKind::Compute;
  SamplePayload cumulative;
};

// Counter source for one target process. Implementations may be polled from
// one sampling loop per resource kind concurrently.
//
// snapshot() returns nullopt once the target has vanished (normal
// termination path) and throws BackendUnavailableError when a counter
// source cannot be read.
class TelemetryBackend {
 public:
  virtual ~TelemetryBackend() = default;
  virtual SystemInfo read_system_info() = 0;
  virtual std::optional<CounterSnapshot> snapshot(const ProbeTarget& target,
                                                  ResourceKind kind) = 0;
  // True when CPU instruction/cycle counts are estimated from process CPU
  // time instead of hardware counters.
  virtual bool cpu_counters_estimated() const { return false; }
  // Per-target setup/teardown hooks (hardware counter attach wants to happen
  // as early after spawn as possible).
  virtual void attach(const ProbeTarget& target) { (void)target; }
  virtual void release(const ProbeTarget& target) { (void)target; }
};

// --- Scripted backend (deterministic test oracle) ---------------------------

// Piecewise-linear cumulative counter curves. Values before the first
// breakpoint clamp to it, values after the last clamp to the final
// breakpoint. Memory peak is the running maximum of the resident curve and
// is derived, not scripted.
struct ScriptedTrajectory {
  struct CpuPoint {
    double time_s;
    CpuSample cumulative;
  };
  struct MemPoint {
    double time_s;
    MemSample state;  // resident is a level; allocated/freed cumulative
  };
  struct IoPoint {
    double time_s;
    IoSample cumulative;
  };

  std::vector<CpuPoint> cpu;
  std::vector<MemPoint> memory;
  std::vector<IoPoint> io;

  // Throws std::invalid_argument on unordered breakpoints or decreasing
  // cumulative fields.
  void validate() const;

  double end_time_s() const;
  CpuSample cpu_at(double time_s) const;
  MemSample memory_at(double time_s) const;
  IoSample io_at(double time_s) const;

  // Cumulative values at end_time_s, integrated into totals form (runtime
  // left at zero; callers supply it).
  Totals final_totals() const;
};

class ScriptedBackend : public TelemetryBackend {
 public:
  ScriptedBackend(ScriptedTrajectory trajectory, SystemInfo info);

  SystemInfo read_system_info() override { return info_; }
  std::optional<CounterSnapshot> snapshot(const ProbeTarget& target,
                                          ResourceKind kind) override;

  // Deterministic probe at a fixed time since spawn.
  CounterSnapshot snapshot_at(double rel_time_s, ResourceKind kind) const;

  // Snapshots of `kind` inside [from_s, to_s) throw BackendUnavailableError;
  // used to exercise gap handling.
  void fail_window(ResourceKind kind, double from_s, double to_s);

  const ScriptedTrajectory& trajectory() const { return trajectory_; }

 private:
  ScriptedTrajectory trajectory_;
  SystemInfo info_;
  struct FailWindow {
    ResourceKind kind;
    double from_s;
    double to_s;
  };
  std::vector<FailWindow> fail_windows_;
};

// --- Linux backend -----------------------------------------------------------

// Reads hardware performance counters via perf when the kernel allows it and
// falls back to CPU-time accounting otherwise; memory and disk I/O come from
// the /proc filesystem. Safe to poll from one loop per resource kind.
class LinuxBackend : public TelemetryBackend {
 public:
  LinuxBackend();
  ~LinuxBackend() override;

  SystemInfo read_system_info() override;
  std::optional<CounterSnapshot> snapshot(const ProbeTarget& target,
                                          ResourceKind kind) override;
  bool cpu_counters_estimated() const override { return !perf_available_; }
  void attach(const ProbeTarget& target) override;
  void release(const ProbeTarget& target) override;

  // True when perf_event_open works on this host (probed once per process).
  static bool perf_counters_available();

 private:
  struct PidState;

  PidState& state_for(pid_t pid);
  std::optional<CpuSample> read_cpu(const ProbeTarget& target, PidState& st);
  std::optional<MemSample> read_memory(const ProbeTarget& target,
                                       PidState& st);
  static std::optional<IoSample> read_io(pid_t pid);

  bool perf_available_ = false;
  SystemInfo cached_info_;
  bool info_cached_ = false;
  std::mutex mu_;
  std::map<pid_t, std::unique_ptr<PidState>> pids_;
};

}  // namespace synapse
