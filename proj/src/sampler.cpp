#include "synapse/sampler.hpp"

#include <fcntl.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "synapse/error.hpp"

namespace synapse {

void ProfilerConfig::validate() const {
  if (!(sample_rate_hz > 0.0) || sample_rate_hz > kMaxSampleRateHz)
    throw std::invalid_argument("sample rate must lie in (0, 10] Hz");
  if (watchers_enabled.empty())
    throw std::invalid_argument("at least one watcher must be enabled");
  for (ResourceKind kind : watchers_enabled) {
    if (kind == ResourceKind::System)
      throw std::invalid_argument("system is not a sampled watcher kind");
  }
}

ProfilerConfig ProfilerConfig::from_environment() {
  ProfilerConfig config;
  if (const char* raw = std::getenv(kSampleRateEnvVar)) {
    try {
      std::size_t used = 0;
      config.sample_rate_hz = std::stod(raw, &used);
      if (used != std::strlen(raw)) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(kSampleRateEnvVar) +
                                  " is not a number: " + raw);
    }
  }
  return config;
}

void WatcherLifecycle::advance(WatcherState next) {
  const auto expected = static_cast<int>(state_) + 1;
  if (static_cast<int>(next) != expected)
    throw std::logic_error("watcher lifecycle transition out of order");
  state_ = next;
}

// --- Targets -----------------------------------------------------------------

ChildProcess::ChildProcess(const std::vector<std::string>& argv) {
  if (argv.empty()) throw CommandError("empty command");

  std::vector<char*> c_argv;
  c_argv.reserve(argv.size() + 1);
  for (const std::string& arg : argv)
    c_argv.push_back(const_cast<char*>(arg.c_str()));
  c_argv.push_back(nullptr);

  int exec_pipe[2];
  if (pipe2(exec_pipe, O_CLOEXEC) != 0)
    throw CommandError(std::string("pipe2: ") + std::strerror(errno));

  probe_.spawn_timestamp_s = monotonic_now_s();
  const pid_t pid = fork();
  if (pid < 0) {
    close(exec_pipe[0]);
    close(exec_pipe[1]);
    throw CommandError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    close(exec_pipe[0]);
    execvp(c_argv[0], c_argv.data());
    const int err = errno;
    ssize_t ignored = write(exec_pipe[1], &err, sizeof(err));
    (void)ignored;
    _exit(127);
  }
  probe_.pid = pid;
  close(exec_pipe[1]);
  int exec_errno = 0;
  const ssize_t n = read(exec_pipe[0], &exec_errno, sizeof(exec_errno));
  close(exec_pipe[0]);
  if (n > 0) {
    int status = 0;
    waitpid(pid, &status, 0);
    reaped_ = true;
    throw CommandError("cannot execute '" + argv.front() +
                       "': " + std::strerror(exec_errno));
  }
}

ChildProcess::~ChildProcess() {
  if (!reaped_ && probe_.pid > 0) {
    kill(probe_.pid, SIGKILL);
    waitpid(probe_.pid, nullptr, 0);
  }
}

void ChildProcess::wait_exited() {
  siginfo_t info;
  std::memset(&info, 0, sizeof(info));
  // WNOWAIT keeps the child a zombie so /proc counters stay readable for the
  // watchers' final samples.
  while (waitid(P_PID, probe_.pid, &info, WEXITED | WNOWAIT) != 0) {
    if (errno != EINTR) break;
  }
}

WrapAccounting ChildProcess::reap() {
  if (reaped_) return accounting_;
  int status = 0;
  rusage usage{};
  while (wait4(probe_.pid, &status, 0, &usage) < 0) {
    if (errno != EINTR) break;
  }
  reaped_ = true;
  accounting_.cpu_time_s =
      static_cast<double>(usage.ru_utime.tv_sec + usage.ru_stime.tv_sec) +
      static_cast<double>(usage.ru_utime.tv_usec + usage.ru_stime.tv_usec) *
          1e-6;
  accounting_.max_rss_bytes =
      static_cast<std::uint64_t>(usage.ru_maxrss) * 1024u;
  if (WIFEXITED(status))
    accounting_.exit_status = WEXITSTATUS(status);
  else if (WIFSIGNALED(status))
    accounting_.exit_status = 128 + WTERMSIG(status);
  return accounting_;
}

ScriptedTarget::ScriptedTarget(double duration_s, WrapAccounting accounting)
    : duration_s_(duration_s), accounting_(accounting) {
  probe_.pid = 0;
  probe_.spawn_timestamp_s = monotonic_now_s();
}

void ScriptedTarget::wait_exited() {
  const double remaining =
      probe_.spawn_timestamp_s + duration_s_ - monotonic_now_s();
  if (remaining > 0.0)
    std::this_thread::sleep_for(std::chrono::duration<double>(remaining));
}

// --- Watcher loop ------------------------------------------------------------

namespace {

std::uint64_t saturating_sub(std::uint64_t a, std::uint64_t b) {
  return a >= b ? a - b : 0;
}

SamplePayload zero_payload(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::Memory:
      return MemSample{};
    case ResourceKind::Storage:
      return IoSample{};
    default:
      return CpuSample{};
  }
}

// Per-period delta between cumulative snapshots. Memory peak/resident are
// levels and pass through.
SamplePayload delta_from(const SamplePayload& prev, const SamplePayload& now) {
  if (const auto* cpu = std::get_if<CpuSample>(&now)) {
    const auto& base = std::get<CpuSample>(prev);
    CpuSample d;
    d.instructions = saturating_sub(cpu->instructions, base.instructions);
    d.cycles_used = saturating_sub(cpu->cycles_used, base.cycles_used);
    d.cycles_stalled_frontend = saturating_sub(cpu->cycles_stalled_frontend,
                                               base.cycles_stalled_frontend);
    d.cycles_stalled_backend = saturating_sub(cpu->cycles_stalled_backend,
                                              base.cycles_stalled_backend);
    return d;
  }
  if (const auto* mem = std::get_if<MemSample>(&now)) {
    const auto& base = std::get<MemSample>(prev);
    MemSample d;
    d.peak_bytes = mem->peak_bytes;
    d.resident_bytes = mem->resident_bytes;
    d.allocated_bytes =
        saturating_sub(mem->allocated_bytes, base.allocated_bytes);
    d.freed_bytes = saturating_sub(mem->freed_bytes, base.freed_bytes);
    return d;
  }
  const auto& io = std::get<IoSample>(now);
  const auto& base = std::get<IoSample>(prev);
  IoSample d;
  d.bytes_read = saturating_sub(io.bytes_read, base.bytes_read);
  d.bytes_written = saturating_sub(io.bytes_written, base.bytes_written);
  return d;
}

void sleep_until_mark(double mark_s) {
  const double remaining = mark_s - monotonic_now_s();
  if (remaining > 0.0)
    std::this_thread::sleep_for(std::chrono::duration<double>(remaining));
}

}  // namespace

WatcherOutput run_watcher(TelemetryBackend& backend, const ProbeTarget& target,
                          ResourceKind kind, double rate_hz,
                          const std::atomic<double>& stop_at_s) {
  WatcherOutput out;
  WatcherLifecycle lifecycle;

  backend.attach(target);
  lifecycle.advance(WatcherState::PreProcessed);
  lifecycle.advance(WatcherState::Sampling);

  const double period_s = 1.0 / rate_hz;
  const double loop_start_s = monotonic_now_s();
  SamplePayload previous = zero_payload(kind);
  std::uint64_t next_index = 0;

  for (std::uint64_t tick = 0;; ++tick) {
    const double scheduled_s =
        loop_start_s + static_cast<double>(tick) * period_s;
    if (tick > 0) sleep_until_mark(scheduled_s);
    // The boundary scheduled at or after the stop mark takes the final
    // sample; comparing scheduled (not wall) times keeps the count exact.
    const bool stopping =
        scheduled_s >= stop_at_s.load(std::memory_order_acquire);

    std::optional<CounterSnapshot> snap;
    bool source_failed = false;
    try {
      snap = backend.snapshot(target, kind);
    } catch (const BackendUnavailableError&) {
      source_failed = true;
    }

    if (source_failed) {
      Sample gap;
      gap.index = next_index++;
      gap.timestamp_s = monotonic_now_s() - target.spawn_timestamp_s;
      gap.kind = kind;
      gap.payload = zero_payload(kind);
      gap.gap = true;
      out.samples.push_back(gap);
      if (stopping) break;
      continue;
    }
    if (!snap) break;  // target vanished: clean stop

    if (out.first_snapshot_at_s < 0.0) out.first_snapshot_at_s = snap->taken_at_s;
    Sample sample;
    sample.index = next_index++;
    sample.timestamp_s = snap->taken_at_s - target.spawn_timestamp_s;
    sample.kind = kind;
    sample.payload = delta_from(previous, snap->cumulative);
    out.samples.push_back(sample);
    previous = snap->cumulative;

    if (stopping) break;
  }

  lifecycle.advance(WatcherState::PostProcessed);
  out.final_state = lifecycle.state();
  return out;
}

// --- Finalize ----------------------------------------------------------------

Profile finalize_profile(SampleSeries series, const WrapAccounting& accounting,
                         const SystemInfo& system, const std::string& command,
                         const ProfilerConfig& config, double runtime_s,
                         double spawn_offset_s, bool cpu_counters_estimated) {
  // Wrap accounting covers the pre-attach gap; larger values win and are
  // folded into the final sample so integrate_totals stays the source of
  // truth for totals.
  auto mem_it = series.find(ResourceKind::Memory);
  if (mem_it != series.end() && !mem_it->second.empty()) {
    std::uint64_t sampled_peak = 0;
    for (const Sample& s : mem_it->second)
      sampled_peak =
          std::max(sampled_peak, std::get<MemSample>(s.payload).peak_bytes);
    if (accounting.max_rss_bytes > sampled_peak) {
      auto& last = std::get<MemSample>(mem_it->second.back().payload);
      last.peak_bytes = accounting.max_rss_bytes;
    }
  }

  auto cpu_it = series.find(ResourceKind::Compute);
  if (cpu_counters_estimated && cpu_it != series.end() &&
      !cpu_it->second.empty() && accounting.cpu_time_s > 0.0) {
    std::uint64_t sampled_cycles = 0;
    for (const Sample& s : cpu_it->second)
      sampled_cycles += std::get<CpuSample>(s.payload).cycles_used;
    const auto wrap_cycles = static_cast<std::uint64_t>(std::llround(
        accounting.cpu_time_s * static_cast<double>(system.max_freq_hz)));
    if (wrap_cycles > sampled_cycles) {
      auto& last = std::get<CpuSample>(cpu_it->second.back().payload);
      last.cycles_used += wrap_cycles - sampled_cycles;
      last.instructions += wrap_cycles - sampled_cycles;
    }
  }

  Profile profile;
  profile.command = command;
  profile.tags = config.tags;
  profile.system = system;
  profile.series = std::move(series);
  profile.totals = integrate_totals(profile.series, runtime_s);
  profile.sample_rate_hz = config.sample_rate_hz;
  profile.spawn_offset_s = spawn_offset_s;
  profile.exit_status = accounting.exit_status;
  profile.cpu_counters_estimated = cpu_counters_estimated;
  profile.created_at = std::chrono::system_clock::now();
  return profile;
}

// --- Profiler ----------------------------------------------------------------

Profile Profiler::profile_target(TargetControl& target,
                                 const std::string& command,
                                 const ProfilerConfig& config) {
  config.validate();
  const SystemInfo system = backend_.read_system_info();
  const ProbeTarget probe = target.probe();

  std::atomic<double> stop_at_s{std::numeric_limits<double>::infinity()};
  struct WatcherRun {
    ResourceKind kind;
    WatcherOutput output;
    std::thread thread;
  };
  std::vector<WatcherRun> watchers;
  watchers.reserve(config.watchers_enabled.size());
  for (ResourceKind kind : config.watchers_enabled)
    watchers.push_back(WatcherRun{kind, {}, {}});
  for (WatcherRun& w : watchers) {
    w.thread = std::thread([&, kind = w.kind, out = &w.output] {
      *out = run_watcher(backend_, probe, kind, config.sample_rate_hz,
                         stop_at_s);
    });
  }

  target.wait_exited();
  const double runtime_s = monotonic_now_s() - probe.spawn_timestamp_s;
  stop_at_s.store(probe.spawn_timestamp_s + runtime_s,
                  std::memory_order_release);
  for (WatcherRun& w : watchers) w.thread.join();

  const WrapAccounting accounting = target.reap();
  backend_.release(probe);

  SampleSeries series;
  double spawn_offset_s = 0.0;
  bool have_offset = false;
  for (WatcherRun& w : watchers) {
    if (w.output.first_snapshot_at_s >= 0.0) {
      const double offset =
          w.output.first_snapshot_at_s - probe.spawn_timestamp_s;
      if (!have_offset || offset < spawn_offset_s) spawn_offset_s = offset;
      have_offset = true;
    }
    series[w.kind] = std::move(w.output.samples);
  }

  return finalize_profile(std::move(series), accounting, system, command,
                          config, runtime_s, spawn_offset_s,
                          backend_.cpu_counters_estimated());
}

Profile Profiler::profile_command(const std::vector<std::string>& argv,
                                  const ProfilerConfig& config) {
  config.validate();
  ChildProcess child(argv);
  return profile_target(child, join_command(argv), config);
}

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream in(command);
  std::vector<std::string> argv;
  std::string token;
  while (in >> token) argv.push_back(token);
  return argv;
}

std::string join_command(const std::vector<std::string>& argv) {
  std::string joined;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (i) joined += ' ';
    joined += argv[i];
  }
  return joined;
}

}  // namespace synapse
