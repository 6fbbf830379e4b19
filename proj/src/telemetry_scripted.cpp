#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "synapse/error.hpp"
#include "synapse/telemetry.hpp"

namespace synapse {
namespace {

double lerp_counter(double t, double t0, double v0, double t1, double v1) {
  if (t1 <= t0) return v1;
  const double w = (t - t0) / (t1 - t0);
  return v0 + w * (v1 - v0);
}

std::uint64_t lerp_u64(double t, double t0, std::uint64_t v0, double t1,
                       std::uint64_t v1) {
  return static_cast<std::uint64_t>(std::llround(
      lerp_counter(t, t0, static_cast<double>(v0), t1,
                   static_cast<double>(v1))));
}

// Clamped piecewise-linear evaluation over time-ordered points.
template <class Point, class Eval>
auto evaluate(const std::vector<Point>& points, double t, Eval&& eval) {
  using Result = decltype(eval(points.front(), points.front(), t));
  if (points.empty()) return Result{};
  if (t <= points.front().time_s)
    return eval(points.front(), points.front(), points.front().time_s);
  if (t >= points.back().time_s)
    return eval(points.back(), points.back(), points.back().time_s);
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (t <= points[i].time_s) return eval(points[i - 1], points[i], t);
  }
  return eval(points.back(), points.back(), points.back().time_s);
}

template <class Point>
void check_ordered(const std::vector<Point>& points, const char* what) {
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].time_s <= points[i - 1].time_s)
      throw std::invalid_argument(std::string(what) +
                                  " breakpoints must be time-ordered");
  }
}

void check_nondecreasing(std::uint64_t prev, std::uint64_t next,
                         const char* what) {
  if (next < prev)
    throw std::invalid_argument(std::string(what) +
                                " cumulative values must be non-decreasing");
}

}  // namespace

void ScriptedTrajectory::validate() const {
  check_ordered(cpu, "cpu");
  check_ordered(memory, "memory");
  check_ordered(io, "io");
  for (std::size_t i = 1; i < cpu.size(); ++i) {
    check_nondecreasing(cpu[i - 1].cumulative.instructions,
                        cpu[i].cumulative.instructions, "cpu");
    check_nondecreasing(cpu[i - 1].cumulative.cycles_used,
                        cpu[i].cumulative.cycles_used, "cpu");
    check_nondecreasing(cpu[i - 1].cumulative.cycles_stalled_frontend,
                        cpu[i].cumulative.cycles_stalled_frontend, "cpu");
    check_nondecreasing(cpu[i - 1].cumulative.cycles_stalled_backend,
                        cpu[i].cumulative.cycles_stalled_backend, "cpu");
  }
  for (std::size_t i = 1; i < memory.size(); ++i) {
    check_nondecreasing(memory[i - 1].state.allocated_bytes,
                        memory[i].state.allocated_bytes, "memory");
    check_nondecreasing(memory[i - 1].state.freed_bytes,
                        memory[i].state.freed_bytes, "memory");
  }
  for (std::size_t i = 1; i < io.size(); ++i) {
    check_nondecreasing(io[i - 1].cumulative.bytes_read,
                        io[i].cumulative.bytes_read, "io");
    check_nondecreasing(io[i - 1].cumulative.bytes_written,
                        io[i].cumulative.bytes_written, "io");
  }
}

double ScriptedTrajectory::end_time_s() const {
  double end = 0.0;
  if (!cpu.empty()) end = std::max(end, cpu.back().time_s);
  if (!memory.empty()) end = std::max(end, memory.back().time_s);
  if (!io.empty()) end = std::max(end, io.back().time_s);
  return end;
}

CpuSample ScriptedTrajectory::cpu_at(double time_s) const {
  return evaluate(cpu, time_s, [](const CpuPoint& a, const CpuPoint& b,
                                  double t) {
    CpuSample out;
    out.instructions = lerp_u64(t, a.time_s, a.cumulative.instructions,
                                b.time_s, b.cumulative.instructions);
    out.cycles_used = lerp_u64(t, a.time_s, a.cumulative.cycles_used, b.time_s,
                               b.cumulative.cycles_used);
    out.cycles_stalled_frontend =
        lerp_u64(t, a.time_s, a.cumulative.cycles_stalled_frontend, b.time_s,
                 b.cumulative.cycles_stalled_frontend);
    out.cycles_stalled_backend =
        lerp_u64(t, a.time_s, a.cumulative.cycles_stalled_backend, b.time_s,
                 b.cumulative.cycles_stalled_backend);
    return out;
  });
}

MemSample ScriptedTrajectory::memory_at(double time_s) const {
  MemSample out = evaluate(
      memory, time_s, [](const MemPoint& a, const MemPoint& b, double t) {
        MemSample s;
        s.resident_bytes = lerp_u64(t, a.time_s, a.state.resident_bytes,
                                    b.time_s, b.state.resident_bytes);
        s.allocated_bytes = lerp_u64(t, a.time_s, a.state.allocated_bytes,
                                     b.time_s, b.state.allocated_bytes);
        s.freed_bytes = lerp_u64(t, a.time_s, a.state.freed_bytes, b.time_s,
                                 b.state.freed_bytes);
        return s;
      });
  // Peak is the running max of the resident curve: the curve is piecewise
  // linear, so checking breakpoints up to time_s plus the current value
  // is exact.
  std::uint64_t peak = out.resident_bytes;
  for (const MemPoint& p : memory) {
    if (p.time_s > time_s) break;
    peak = std::max(peak, p.state.resident_bytes);
  }
  out.peak_bytes = peak;
  return out;
}

IoSample ScriptedTrajectory::io_at(double time_s) const {
  return evaluate(io, time_s,
                  [](const IoPoint& a, const IoPoint& b, double t) {
                    IoSample out;
                    out.bytes_read = lerp_u64(t, a.time_s,
                                              a.cumulative.bytes_read, b.time_s,
                                              b.cumulative.bytes_read);
                    out.bytes_written = lerp_u64(
                        t, a.time_s, a.cumulative.bytes_written, b.time_s,
                        b.cumulative.bytes_written);
                    return out;
                  });
}

Totals ScriptedTrajectory::final_totals() const {
  const double end = end_time_s();
  Totals totals;
  const CpuSample cpu_final = cpu_at(end);
  totals.instructions = cpu_final.instructions;
  totals.cycles_used = cpu_final.cycles_used;
  totals.cycles_stalled_frontend = cpu_final.cycles_stalled_frontend;
  totals.cycles_stalled_backend = cpu_final.cycles_stalled_backend;
  const MemSample mem_final = memory_at(end);
  totals.peak_bytes = mem_final.peak_bytes;
  totals.resident_bytes = mem_final.peak_bytes;  // max of levels == peak
  totals.allocated_bytes = mem_final.allocated_bytes;
  totals.freed_bytes = mem_final.freed_bytes;
  const IoSample io_final = io_at(end);
  totals.bytes_read = io_final.bytes_read;
  totals.bytes_written = io_final.bytes_written;
  return totals;
}

ScriptedBackend::ScriptedBackend(ScriptedTrajectory trajectory,
                                 SystemInfo info)
    : trajectory_(std::move(trajectory)), info_(std::move(info)) {
  trajectory_.validate();
}

std::optional<CounterSnapshot> ScriptedBackend::snapshot(
    const ProbeTarget& target, ResourceKind kind) {
  const double now = monotonic_now_s();
  CounterSnapshot snap = snapshot_at(now - target.spawn_timestamp_s, kind);
  snap.taken_at_s = now;  // snapshot_at reports time relative to spawn
  return snap;
}

CounterSnapshot ScriptedBackend::snapshot_at(double rel_time_s,
                                             ResourceKind kind) const {
  for (const FailWindow& w : fail_windows_) {
    if (w.kind == kind && rel_time_s >= w.from_s && rel_time_s < w.to_s)
      throw BackendUnavailableError("scripted fail window");
  }
  CounterSnapshot snap;
  snap.taken_at_s = rel_time_s;
  snap.kind = kind;
  switch (kind) {
    case ResourceKind::Compute:
      snap.cumulative = trajectory_.cpu_at(rel_time_s);
      break;
    case ResourceKind::Memory:
      snap.cumulative = trajectory_.memory_at(rel_time_s);
      break;
    case ResourceKind::Storage:
      snap.cumulative = trajectory_.io_at(rel_time_s);
      break;
    case ResourceKind::System:
      throw std::invalid_argument("system kind has no counter snapshot");
  }
  return snap;
}

void ScriptedBackend::fail_window(ResourceKind kind, double from_s,
                                  double to_s) {
  fail_windows_.push_back(FailWindow{kind, from_s, to_s});
}

}  // namespace synapse
