#include <fcntl.h>
#include <linux/perf_event.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <sys/sysinfo.h>
#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "synapse/error.hpp"
#include "synapse/telemetry.hpp"

namespace synapse {

double monotonic_now_s() {
  timespec ts{};
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}

namespace {

long perf_event_open(perf_event_attr* attr, pid_t pid, int cpu, int group_fd,
                     unsigned long flags) {
  return syscall(SYS_perf_event_open, attr, pid, cpu, group_fd, flags);
}

int open_counter(pid_t pid, std::uint64_t config) {
  perf_event_attr attr{};
  attr.size = sizeof(attr);
  attr.type = PERF_TYPE_HARDWARE;
  attr.config = config;
  attr.disabled = 0;
  attr.exclude_kernel = 0;
  attr.exclude_hv = 1;
  attr.inherit = 0;
  return static_cast<int>(perf_event_open(&attr, pid, -1, -1, 0));
}

std::optional<std::uint64_t> read_counter(int fd) {
  if (fd < 0) return std::nullopt;
  std::uint64_t value = 0;
  if (::read(fd, &value, sizeof(value)) != sizeof(value)) return std::nullopt;
  return value;
}

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// utime + stime in seconds from /proc/<pid>/stat; readable for zombies.
std::optional<double> read_cpu_time_s(pid_t pid) {
  auto text = slurp("/proc/" + std::to_string(pid) + "/stat");
  if (!text) return std::nullopt;
  // comm can contain spaces; fields are positional after the last ')'.
  const auto paren = text->rfind(')');
  if (paren == std::string::npos) return std::nullopt;
  std::istringstream rest(text->substr(paren + 1));
  std::string field;
  unsigned long long utime = 0, stime = 0;
  for (int i = 1; rest >> field; ++i) {
    if (i == 12) utime = std::stoull(field);
    if (i == 13) {
      stime = std::stoull(field);
      const double tick = static_cast<double>(sysconf(_SC_CLK_TCK));
      return static_cast<double>(utime + stime) / tick;
    }
  }
  return std::nullopt;
}

std::optional<std::uint64_t> read_resident_bytes(pid_t pid) {
  auto text = slurp("/proc/" + std::to_string(pid) + "/statm");
  if (!text) return std::nullopt;
  std::istringstream in(*text);
  std::uint64_t size_pages = 0, resident_pages = 0;
  if (!(in >> size_pages >> resident_pages)) return std::nullopt;
  return resident_pages * static_cast<std::uint64_t>(sysconf(_SC_PAGESIZE));
}

std::uint64_t max_cpu_freq_hz() {
  // cpufreq sysfs first, /proc/cpuinfo as fallback (containers often hide
  // cpufreq).
  std::uint64_t best = 0;
  std::error_code ec;
  for (const auto& entry :
       std::filesystem::directory_iterator("/sys/devices/system/cpu", ec)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("cpu", 0) != 0 || !isdigit(name[3])) continue;
    auto text = slurp(entry.path() / "cpufreq/cpuinfo_max_freq");
    if (!text) continue;
    try {
      const auto khz = static_cast<std::uint64_t>(std::stoull(*text));
      best = std::max(best, khz * 1000u);
    } catch (const std::exception&) {
    }
  }
  if (best > 0) return best;

  auto cpuinfo = slurp("/proc/cpuinfo");
  if (cpuinfo) {
    std::istringstream in(*cpuinfo);
    std::string line;
    double best_mhz = 0.0;
    while (std::getline(in, line)) {
      if (line.rfind("cpu MHz", 0) == 0) {
        const auto colon = line.find(':');
        if (colon != std::string::npos) {
          try {
            best_mhz = std::max(best_mhz, std::stod(line.substr(colon + 1)));
          } catch (const std::exception&) {
          }
        }
      }
    }
    if (best_mhz > 0.0)
      return static_cast<std::uint64_t>(std::llround(best_mhz * 1e6));
  }
  throw BackendUnavailableError("cpu frequency (cpufreq sysfs, /proc/cpuinfo)");
}

std::string cpu_model_name() {
  auto cpuinfo = slurp("/proc/cpuinfo");
  if (cpuinfo) {
    std::istringstream in(*cpuinfo);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("model name", 0) == 0) {
        const auto colon = line.find(':');
        if (colon != std::string::npos) {
          std::string model = line.substr(colon + 1);
          const auto start = model.find_first_not_of(" \t");
          return start == std::string::npos ? model : model.substr(start);
        }
      }
    }
  }
  return "unknown";
}

}  // namespace

// Per-target counter state. CPU via a group of perf fds when available,
// else CPU-time accounting; memory state accumulates allocation/free
// movement from resident-size deltas.
struct LinuxBackend::PidState {
  std::mutex mu;

  int fd_instructions = -1;
  int fd_cycles = -1;
  int fd_stalled_frontend = -1;
  int fd_stalled_backend = -1;

  bool have_mem_baseline = false;
  std::uint64_t last_resident = 0;
  std::uint64_t peak = 0;
  std::uint64_t allocated_cum = 0;
  std::uint64_t freed_cum = 0;

  // Degraded mode keeps the last CPU-time reading so a final value survives
  // the target turning into a zombie.
  double last_cpu_time_s = 0.0;

  ~PidState() {
    for (int fd : {fd_instructions, fd_cycles, fd_stalled_frontend,
                   fd_stalled_backend}) {
      if (fd >= 0) ::close(fd);
    }
  }
};

bool LinuxBackend::perf_counters_available() {
  static const bool available = [] {
    const int fd = open_counter(0, PERF_COUNT_HW_INSTRUCTIONS);
    if (fd < 0) return false;
    ::close(fd);
    return true;
  }();
  return available;
}

LinuxBackend::LinuxBackend() : perf_available_(perf_counters_available()) {}

LinuxBackend::~LinuxBackend() = default;

SystemInfo LinuxBackend::read_system_info() {
  std::lock_guard lock(mu_);
  if (info_cached_) return cached_info_;

  SystemInfo info;
  const long cores = sysconf(_SC_NPROCESSORS_ONLN);
  if (cores < 1) throw BackendUnavailableError("online processor count");
  info.core_count = static_cast<std::uint32_t>(cores);
  info.max_freq_hz = max_cpu_freq_hz();

  struct sysinfo si{};
  if (sysinfo(&si) != 0) throw BackendUnavailableError("sysinfo(2)");
  info.total_memory_bytes =
      static_cast<std::uint64_t>(si.totalram) * si.mem_unit;

  utsname uts{};
  if (uname(&uts) == 0) {
    info.os_descriptor = std::string(uts.sysname) + " " + uts.release + " " +
                         uts.machine;
  }
  info.cpu_model = cpu_model_name();

  cached_info_ = info;
  info_cached_ = true;
  return info;
}

LinuxBackend::PidState& LinuxBackend::state_for(pid_t pid) {
  std::lock_guard lock(mu_);
  auto& slot = pids_[pid];
  if (!slot) slot = std::make_unique<PidState>();
  return *slot;
}

void LinuxBackend::attach(const ProbeTarget& target) {
  PidState& st = state_for(target.pid);
  std::lock_guard lock(st.mu);
  if (!perf_available_ || st.fd_instructions >= 0) return;
  st.fd_instructions = open_counter(target.pid, PERF_COUNT_HW_INSTRUCTIONS);
  st.fd_cycles = open_counter(target.pid, PERF_COUNT_HW_CPU_CYCLES);
  st.fd_stalled_frontend =
      open_counter(target.pid, PERF_COUNT_HW_STALLED_CYCLES_FRONTEND);
  st.fd_stalled_backend =
      open_counter(target.pid, PERF_COUNT_HW_STALLED_CYCLES_BACKEND);
}

void LinuxBackend::release(const ProbeTarget& target) {
  std::lock_guard lock(mu_);
  pids_.erase(target.pid);
}

std::optional<CpuSample> LinuxBackend::read_cpu(const ProbeTarget& target,
                                                PidState& st) {
  std::lock_guard lock(st.mu);
  if (perf_available_ && st.fd_instructions >= 0) {
    CpuSample cpu;
    const auto instructions = read_counter(st.fd_instructions);
    const auto cycles = read_counter(st.fd_cycles);
    if (!instructions || !cycles) return std::nullopt;
    cpu.instructions = *instructions;
    cpu.cycles_used = *cycles;
    cpu.cycles_stalled_frontend =
        read_counter(st.fd_stalled_frontend).value_or(0);
    cpu.cycles_stalled_backend =
        read_counter(st.fd_stalled_backend).value_or(0);
    return cpu;
  }

  // Degraded path: nominal cycles from CPU time, instruction count carries
  // the same value so downstream replay has a consistent quantity.
  const auto cpu_time = read_cpu_time_s(target.pid);
  if (!cpu_time) return std::nullopt;
  st.last_cpu_time_s = *cpu_time;
  const SystemInfo info = read_system_info();
  const auto nominal_cycles = static_cast<std::uint64_t>(
      std::llround(*cpu_time * static_cast<double>(info.max_freq_hz)));
  CpuSample cpu;
  cpu.instructions = nominal_cycles;
  cpu.cycles_used = nominal_cycles;
  return cpu;
}

std::optional<MemSample> LinuxBackend::read_memory(const ProbeTarget& target,
                                                   PidState& st) {
  const auto resident = read_resident_bytes(target.pid);
  if (!resident) return std::nullopt;
  std::lock_guard lock(st.mu);
  if (!st.have_mem_baseline) {
    st.have_mem_baseline = true;
    st.last_resident = 0;
  }
  if (*resident >= st.last_resident) {
    st.allocated_cum += *resident - st.last_resident;
  } else {
    st.freed_cum += st.last_resident - *resident;
  }
  st.last_resident = *resident;
  st.peak = std::max(st.peak, *resident);

  MemSample mem;
  mem.peak_bytes = st.peak;
  mem.resident_bytes = *resident;
  mem.allocated_bytes = st.allocated_cum;
  mem.freed_bytes = st.freed_cum;
  return mem;
}

std::optional<IoSample> LinuxBackend::read_io(pid_t pid) {
  auto text = slurp("/proc/" + std::to_string(pid) + "/io");
  if (!text || text->empty()) return std::nullopt;
  IoSample io;
  std::istringstream in(*text);
  std::string line;
  while (std::getline(in, line)) {
    // rchar/wchar count bytes the process requested via syscalls; the
    // block-device rows (read_bytes/write_bytes) miss cache-served traffic.
    if (line.rfind("rchar:", 0) == 0)
      io.bytes_read = std::stoull(line.substr(6));
    else if (line.rfind("wchar:", 0) == 0)
      io.bytes_written = std::stoull(line.substr(6));
  }
  return io;
}

std::optional<CounterSnapshot> LinuxBackend::snapshot(
    const ProbeTarget& target, ResourceKind kind) {
  PidState& st = state_for(target.pid);
  CounterSnapshot snap;
  snap.taken_at_s = monotonic_now_s();
  snap.kind = kind;
  switch (kind) {
    case ResourceKind::Compute: {
      auto cpu = read_cpu(target, st);
      if (!cpu) return std::nullopt;
      snap.cumulative = *cpu;
      return snap;
    }
    case ResourceKind::Memory: {
      auto mem = read_memory(target, st);
      if (!mem) return std::nullopt;
      snap.cumulative = *mem;
      return snap;
    }
    case ResourceKind::Storage: {
      auto io = read_io(target.pid);
      if (!io) return std::nullopt;
      snap.cumulative = *io;
      return snap;
    }
    case ResourceKind::System:
      throw std::invalid_argument("system kind has no counter snapshot");
  }
  return std::nullopt;
}

}  // namespace synapse
