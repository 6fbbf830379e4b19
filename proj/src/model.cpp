#include "synapse/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "synapse/error.hpp"

namespace synapse {

const char* to_string(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::System:
      return "system";
    case ResourceKind::Compute:
      return "compute";
    case ResourceKind::Storage:
      return "storage";
    case ResourceKind::Memory:
      return "memory";
  }
  return "unknown";
}

ResourceKind resource_kind_from_string(const std::string& name) {
  if (name == "system") return ResourceKind::System;
  if (name == "compute") return ResourceKind::Compute;
  if (name == "storage") return ResourceKind::Storage;
  if (name == "memory") return ResourceKind::Memory;
  throw std::invalid_argument("unknown resource kind: " + name);
}

ResourceKind kind_of(const SamplePayload& payload) {
  switch (payload.index()) {
    case 0:
      return ResourceKind::Compute;
    case 1:
      return ResourceKind::Memory;
    default:
      return ResourceKind::Storage;
  }
}

void validate_series(const std::vector<Sample>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!series[i].matches_kind())
      throw std::invalid_argument("sample payload does not match its kind");
    if (i == 0) continue;
    if (series[i].index <= series[i - 1].index)
      throw std::invalid_argument("sample indices must be strictly increasing");
    if (series[i].timestamp_s <= series[i - 1].timestamp_s)
      throw std::invalid_argument(
          "sample timestamps must be strictly increasing");
  }
}

std::vector<std::string> metric_names() {
  std::vector<std::string> names;
  for_each_metric(Totals{},
                  [&](const char* name, double) { names.emplace_back(name); });
  return names;
}

double derive_cpu_efficiency(std::uint64_t used, std::uint64_t stalled_fe,
                             std::uint64_t stalled_be) {
  const std::uint64_t spent = used + stalled_fe + stalled_be;
  if (spent == 0) return 0.0;  // idle sample contributed no useful work
  return static_cast<double>(used) / static_cast<double>(spent);
}

double derive_cpu_utilization(std::uint64_t used, double elapsed_s,
                              const SystemInfo& sys) {
  if (!(elapsed_s > 0.0))
    throw std::invalid_argument("utilization requires elapsed_s > 0");
  const double max_cycles = static_cast<double>(sys.max_freq_hz) * elapsed_s *
                            static_cast<double>(sys.core_count);
  return static_cast<double>(used) / max_cycles;
}

std::uint64_t derive_flops(const CpuSample& cpu, double fp_fraction) {
  if (!(fp_fraction >= 0.0 && fp_fraction <= 1.0))
    throw std::invalid_argument("fp_fraction must lie in [0, 1]");
  return static_cast<std::uint64_t>(
      std::llround(static_cast<double>(cpu.instructions) * fp_fraction));
}

DerivedCpuMetrics derive_cpu_metrics(const CpuSample& cpu, double elapsed_s,
                                     const SystemInfo& sys,
                                     double fp_fraction) {
  DerivedCpuMetrics out;
  out.efficiency =
      derive_cpu_efficiency(cpu.cycles_used, cpu.cycles_stalled_frontend,
                            cpu.cycles_stalled_backend);
  out.utilization = derive_cpu_utilization(cpu.cycles_used, elapsed_s, sys);
  out.flops = derive_flops(cpu, fp_fraction);
  out.flops_per_s = static_cast<double>(out.flops) / elapsed_s;
  return out;
}

Totals integrate_totals(const SampleSeries& series, double runtime_s) {
  Totals totals;
  totals.runtime_s = runtime_s;
  for (const auto& [kind, samples] : series) {
    (void)kind;
    for (const Sample& sample : samples) {
      if (const auto* cpu = std::get_if<CpuSample>(&sample.payload)) {
        totals.instructions += cpu->instructions;
        totals.cycles_used += cpu->cycles_used;
        totals.cycles_stalled_frontend += cpu->cycles_stalled_frontend;
        totals.cycles_stalled_backend += cpu->cycles_stalled_backend;
      } else if (const auto* mem = std::get_if<MemSample>(&sample.payload)) {
        totals.peak_bytes = std::max(totals.peak_bytes, mem->peak_bytes);
        totals.resident_bytes =
            std::max(totals.resident_bytes, mem->resident_bytes);
        totals.allocated_bytes += mem->allocated_bytes;
        totals.freed_bytes += mem->freed_bytes;
      } else if (const auto* io = std::get_if<IoSample>(&sample.payload)) {
        totals.bytes_read += io->bytes_read;
        totals.bytes_written += io->bytes_written;
      }
    }
  }
  return totals;
}

ProfileStats aggregate_stats(const std::vector<Profile>& profiles) {
  if (profiles.empty())
    throw std::invalid_argument("aggregate_stats requires profiles");
  for (const Profile& p : profiles) {
    if (p.command != profiles.front().command ||
        p.tags != profiles.front().tags)
      throw IncompatibleProfilesError(
          "profiles must share command and tags to be aggregated");
  }

  ProfileStats stats;
  stats.n = profiles.size();
  const double n = static_cast<double>(profiles.size());

  // Two-pass mean / population stddev, left-to-right summation order.
  std::map<std::string, std::vector<double>> values;
  for (const Profile& p : profiles) {
    for_each_metric(p.totals, [&](const char* name, double value) {
      values[name].push_back(value);
    });
  }
  for (const auto& [name, xs] : values) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / n;
    double sq = 0.0;
    for (double x : xs) sq += (x - mean) * (x - mean);
    stats.metrics[name] = MetricStats{mean, std::sqrt(sq / n)};
  }
  return stats;
}

}  // namespace synapse
