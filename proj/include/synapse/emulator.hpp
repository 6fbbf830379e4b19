#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "synapse/atoms.hpp"
#include "synapse/error.hpp"
#include "synapse/model.hpp"

namespace synapse {

// One quantity of one resource kind to consume.
struct ComputeTask {
  std::uint64_t instructions = 0;
  double efficiency_target = 1.0;

  bool operator==(const ComputeTask&) const = default;
};

struct MemoryTask {
  std::uint64_t allocate_bytes = 0;
  std::uint64_t free_bytes = 0;
  std::uint64_t block_bytes = kDefaultBlockBytes;

  bool operator==(const MemoryTask&) const = default;
};

struct StorageTask {
  std::uint64_t read_bytes = 0;
  std::uint64_t write_bytes = 0;
  std::uint64_t block_bytes = kDefaultBlockBytes;

  bool operator==(const StorageTask&) const = default;
};

// Placeholder for the planned network atom. Not part of AtomTask yet:
// network consumption is neither profiled nor replayed in this version.
struct NetworkTask {
  std::uint64_t send_bytes = 0;
  std::uint64_t receive_bytes = 0;
  std::uint64_t block_bytes = kDefaultBlockBytes;
};

using AtomTask = std::variant<ComputeTask, MemoryTask, StorageTask>;

ResourceKind kind_of(const AtomTask& task);

// All atoms of one profiled sample; they run concurrently and the next group
// starts only when every one of them has finished.
struct SampleGroup {
  std::uint64_t sample_index = 0;
  std::vector<AtomTask> tasks;
};

// Replay order equals profiled sample-index order; the profile's timing
// information is deliberately absent.
struct EmulationPlan {
  std::vector<SampleGroup> groups;
};

// Sums of the plan's quantities (runtime_s stays zero).
Totals plan_totals(const EmulationPlan& plan);

struct PlanTuning {
  std::uint64_t io_block_bytes = kDefaultBlockBytes;
  std::uint64_t memory_block_bytes = kDefaultBlockBytes;
  std::optional<double> efficiency_override;  // else per-sample efficiency
};

// One group per merged sample index across the profile's series; only the
// replayable metrics (instructions, bytes read/written/allocated/freed)
// become atom tasks. Throws EmptyPlanError when the profile has no samples.
EmulationPlan plan_from_profile(const Profile& profile,
                                const PlanTuning& tuning = {});

struct GroupInterval {
  std::uint64_t sample_index = 0;
  double start_s = 0.0;  // relative to emulation start
  double end_s = 0.0;
};

struct EmulationReport {
  double ttc_s = 0.0;
  std::vector<GroupInterval> groups;
  Totals planned;
  Totals self_check;  // what the atoms measured themselves consuming
  std::map<std::string, double> deviations;  // relative, per replayed metric
};

nlohmann::json report_to_json(const EmulationReport& report);

// Thrown when an atom fails mid-plan; carries the partial report and the
// failing group/atom.
class EmulationAborted : public AtomError {
 public:
  EmulationAborted(const std::string& what, EmulationReport partial,
                   std::uint64_t group_index, ResourceKind atom_kind)
      : AtomError(what),
        partial_report(std::move(partial)),
        group_index(group_index),
        atom_kind(atom_kind) {}

  EmulationReport partial_report;
  std::uint64_t group_index;
  ResourceKind atom_kind;
};

struct EmulatorOptions {
  std::filesystem::path scratch_dir;  // empty -> std::filesystem temp dir
  std::uint64_t write_wrap_bytes = 1ull << 30;
  std::uint64_t max_read_seed_bytes = 256ull << 20;
};

class Emulator {
 public:
  explicit Emulator(EmulatorOptions options = {});

  // Runs the plan group by group with a join barrier between groups.
  // Throws std::invalid_argument on an empty plan and EmulationAborted when
  // an atom fails.
  EmulationReport emulate(const EmulationPlan& plan);

 private:
  EmulatorOptions options_;
};

}  // namespace synapse
