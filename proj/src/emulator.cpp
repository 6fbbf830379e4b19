#include "synapse/emulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "synapse/telemetry.hpp"

namespace synapse {

ResourceKind kind_of(const AtomTask& task) {
  switch (task.index()) {
    case 0:
      return ResourceKind::Compute;
    case 1:
      return ResourceKind::Memory;
    default:
      return ResourceKind::Storage;
  }
}

Totals plan_totals(const EmulationPlan& plan) {
  Totals totals;
  for (const SampleGroup& group : plan.groups) {
    for (const AtomTask& task : group.tasks) {
      if (const auto* compute = std::get_if<ComputeTask>(&task)) {
        totals.instructions += compute->instructions;
      } else if (const auto* memory = std::get_if<MemoryTask>(&task)) {
        totals.allocated_bytes += memory->allocate_bytes;
        totals.freed_bytes += memory->free_bytes;
      } else if (const auto* storage = std::get_if<StorageTask>(&task)) {
        totals.bytes_read += storage->read_bytes;
        totals.bytes_written += storage->write_bytes;
      }
    }
  }
  return totals;
}

EmulationPlan plan_from_profile(const Profile& profile,
                                const PlanTuning& tuning) {
  std::map<std::uint64_t, const CpuSample*> cpu;
  std::map<std::uint64_t, const MemSample*> mem;
  std::map<std::uint64_t, const IoSample*> io;
  std::set<std::uint64_t> indices;

  for (const auto& [kind, samples] : profile.series) {
    for (const Sample& sample : samples) {
      indices.insert(sample.index);
      if (const auto* c = std::get_if<CpuSample>(&sample.payload))
        cpu[sample.index] = c;
      else if (const auto* m = std::get_if<MemSample>(&sample.payload))
        mem[sample.index] = m;
      else if (const auto* i = std::get_if<IoSample>(&sample.payload))
        io[sample.index] = i;
    }
  }
  if (indices.empty())
    throw EmptyPlanError("profile for '" + profile.command +
                         "' has no samples to replay");

  EmulationPlan plan;
  plan.groups.reserve(indices.size());
  for (std::uint64_t index : indices) {
    SampleGroup group;
    group.sample_index = index;
    if (auto it = cpu.find(index); it != cpu.end()) {
      const CpuSample& s = *it->second;
      if (s.instructions > 0) {
        ComputeTask task;
        task.instructions = s.instructions;
        if (tuning.efficiency_override) {
          task.efficiency_target = *tuning.efficiency_override;
        } else if (s.cycles_used + s.cycles_stalled_frontend +
                       s.cycles_stalled_backend >
                   0) {
          task.efficiency_target = std::clamp(
              derive_cpu_efficiency(s.cycles_used, s.cycles_stalled_frontend,
                                    s.cycles_stalled_backend),
              0.01, 1.0);
        }
        group.tasks.push_back(task);
      }
    }
    if (auto it = mem.find(index); it != mem.end()) {
      const MemSample& s = *it->second;
      if (s.allocated_bytes > 0 || s.freed_bytes > 0) {
        MemoryTask task;
        task.allocate_bytes = s.allocated_bytes;
        task.free_bytes = s.freed_bytes;
        task.block_bytes = tuning.memory_block_bytes;
        group.tasks.push_back(task);
      }
    }
    if (auto it = io.find(index); it != io.end()) {
      const IoSample& s = *it->second;
      if (s.bytes_read > 0 || s.bytes_written > 0) {
        StorageTask task;
        task.read_bytes = s.bytes_read;
        task.write_bytes = s.bytes_written;
        task.block_bytes = tuning.io_block_bytes;
        group.tasks.push_back(task);
      }
    }
    plan.groups.push_back(std::move(group));
  }
  return plan;
}

Emulator::Emulator(EmulatorOptions options) : options_(std::move(options)) {
  if (options_.scratch_dir.empty())
    options_.scratch_dir = std::filesystem::temp_directory_path();
}

namespace {

struct AtomOutcome {
  AtomReport report;
  std::string error;
  ResourceKind kind = ResourceKind::Compute;
};

void finish_report(EmulationReport& report, double ttc_s) {
  report.ttc_s = ttc_s;
  report.self_check.runtime_s = ttc_s;
  static const char* kReplayed[] = {"instructions", "bytes_read",
                                    "bytes_written", "allocated_bytes",
                                    "freed_bytes"};
  std::map<std::string, double> planned, measured;
  for_each_metric(report.planned,
                  [&](const char* n, double v) { planned[n] = v; });
  for_each_metric(report.self_check,
                  [&](const char* n, double v) { measured[n] = v; });
  for (const char* name : kReplayed) {
    const double p = planned[name];
    report.deviations[name] = p > 0.0 ? (measured[name] - p) / p : 0.0;
  }
}

}  // namespace

EmulationReport Emulator::emulate(const EmulationPlan& plan) {
  if (plan.groups.empty())
    throw std::invalid_argument("cannot emulate an empty plan");

  // Size the read seed from the plan; skip scratch setup entirely when no
  // group does I/O.
  std::uint64_t total_reads = 0, total_writes = 0, max_block = 0;
  for (const SampleGroup& group : plan.groups) {
    for (const AtomTask& task : group.tasks) {
      if (const auto* storage = std::get_if<StorageTask>(&task)) {
        total_reads += storage->read_bytes;
        total_writes += storage->write_bytes;
        max_block = std::max(max_block, storage->block_bytes);
      }
    }
  }
  std::unique_ptr<ScratchFiles> scratch;
  if (total_reads + total_writes > 0) {
    const std::uint64_t seed =
        std::min(std::max(total_reads, max_block), options_.max_read_seed_bytes);
    scratch = std::make_unique<ScratchFiles>(
        options_.scratch_dir, total_reads > 0 ? seed : 0,
        options_.write_wrap_bytes);
  }

  // Touch the calibration before timing starts; it is measured once per
  // process and would otherwise land inside the first compute group.
  kernel_calibration();

  MemoryPool pool;
  EmulationReport report;
  report.planned = plan_totals(plan);

  const double t0 = monotonic_now_s();
  for (std::size_t g = 0; g < plan.groups.size(); ++g) {
    const SampleGroup& group = plan.groups[g];
    GroupInterval interval;
    interval.sample_index = group.sample_index;
    interval.start_s = monotonic_now_s() - t0;

    std::vector<AtomOutcome> outcomes(group.tasks.size());
    std::vector<std::thread> workers;
    workers.reserve(group.tasks.size());
    for (std::size_t i = 0; i < group.tasks.size(); ++i) {
      workers.emplace_back([&, i] {
        AtomOutcome& outcome = outcomes[i];
        const AtomTask& task = group.tasks[i];
        outcome.kind = kind_of(task);
        try {
          if (const auto* compute = std::get_if<ComputeTask>(&task)) {
            outcome.report = run_compute_atom(compute->instructions,
                                              compute->efficiency_target);
          } else if (const auto* memory = std::get_if<MemoryTask>(&task)) {
            outcome.report = run_memory_atom(pool, memory->allocate_bytes,
                                             memory->free_bytes,
                                             memory->block_bytes);
          } else if (const auto* storage = std::get_if<StorageTask>(&task)) {
            outcome.report = run_storage_atom(*scratch, storage->read_bytes,
                                              storage->write_bytes,
                                              storage->block_bytes);
          }
        } catch (const std::exception& e) {
          outcome.error = e.what();
        }
      });
    }
    for (std::thread& worker : workers) worker.join();  // group barrier
    interval.end_s = monotonic_now_s() - t0;
    report.groups.push_back(interval);

    for (const AtomOutcome& outcome : outcomes) {
      const AtomReport& r = outcome.report;
      report.self_check.instructions += r.instructions;
      report.self_check.bytes_read += r.bytes_read;
      report.self_check.bytes_written += r.bytes_written;
      report.self_check.allocated_bytes += r.allocated_bytes;
      report.self_check.freed_bytes += r.freed_bytes;
    }
    for (const AtomOutcome& outcome : outcomes) {
      if (!outcome.error.empty()) {
        finish_report(report, monotonic_now_s() - t0);
        throw EmulationAborted(
            "atom failure in group " + std::to_string(group.sample_index) +
                " (" + to_string(outcome.kind) + "): " + outcome.error,
            report, group.sample_index, outcome.kind);
      }
    }
  }

  finish_report(report, monotonic_now_s() - t0);
  return report;
}

nlohmann::json report_to_json(const EmulationReport& report) {
  nlohmann::json doc;
  doc["ttc_s"] = report.ttc_s;
  nlohmann::json groups = nlohmann::json::array();
  for (const GroupInterval& g : report.groups) {
    groups.push_back({{"sample_index", g.sample_index},
                      {"start_s", g.start_s},
                      {"end_s", g.end_s}});
  }
  doc["groups"] = std::move(groups);
  auto totals_json = [](const Totals& totals) {
    nlohmann::json j;
    for_each_metric(totals,
                    [&](const char* name, double value) { j[name] = value; });
    return j;
  };
  doc["planned"] = totals_json(report.planned);
  doc["self_check"] = totals_json(report.self_check);
  doc["deviations"] = report.deviations;
  return doc;
}

}  // namespace synapse
