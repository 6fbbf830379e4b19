#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/resource.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

#include "synapse/background_load.hpp"
#include "synapse/emulator.hpp"
#include "synapse/error.hpp"
#include "synapse/telemetry.hpp"

#include "helpers.hpp"

using namespace synapse;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() /
             ("synapse-emulator-test-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

Sample make_sample(std::uint64_t index, ResourceKind kind,
                   SamplePayload payload) {
  Sample s;
  s.index = index;
  s.timestamp_s = 0.1 + static_cast<double>(index);
  s.kind = kind;
  s.payload = std::move(payload);
  return s;
}

}  // namespace

TEST_CASE("plan construction from a two-sample profile") {
  Profile profile;
  profile.command = "two-sample";
  profile.series[ResourceKind::Compute] = {
      make_sample(0, ResourceKind::Compute,
                  CpuSample{1'000'000'000, 0, 0, 0}),
      make_sample(1, ResourceKind::Compute, CpuSample{500'000'000, 0, 0, 0})};
  profile.series[ResourceKind::Storage] = {
      make_sample(0, ResourceKind::Storage, IoSample{0, 4ull << 20})};
  profile.totals = integrate_totals(profile.series, 2.0);

  const EmulationPlan plan = plan_from_profile(profile);
  REQUIRE(plan.groups.size() == 2);
  CHECK(plan.groups[0].tasks.size() == 2);  // compute + storage
  CHECK(plan.groups[1].tasks.size() == 1);  // compute only
  std::size_t atoms = 0;
  for (const auto& group : plan.groups) atoms += group.tasks.size();
  CHECK(atoms == 3);

  const Totals planned = plan_totals(plan);
  CHECK(planned.instructions == 1'500'000'000);
  CHECK(planned.bytes_written == 4ull << 20);
}

TEST_CASE("plan ordering and group count match the merged sample indices") {
  std::mt19937 rng(83);
  for (int round = 0; round < 20; ++round) {
    const Profile profile = testing::make_random_profile(rng, "merge");
    std::set<std::uint64_t> indices;
    for (const auto& [kind, samples] : profile.series)
      for (const Sample& s : samples) indices.insert(s.index);

    const EmulationPlan plan = plan_from_profile(profile);
    REQUIRE(plan.groups.size() == indices.size());
    auto it = indices.begin();
    for (const auto& group : plan.groups) CHECK(group.sample_index == *it++);
  }
}

TEST_CASE("profiles with nothing to replay raise empty-plan errors") {
  Profile empty;
  empty.command = "empty";
  CHECK_THROWS_AS(plan_from_profile(empty), EmptyPlanError);

  Profile no_samples;
  no_samples.command = "no-samples";
  no_samples.series[ResourceKind::Compute] = {};
  CHECK_THROWS_AS(plan_from_profile(no_samples), EmptyPlanError);
}

TEST_CASE("per-sample efficiency is carried into compute tasks") {
  Profile profile;
  profile.command = "eff";
  profile.series[ResourceKind::Compute] = {make_sample(
      0, ResourceKind::Compute, CpuSample{1'000'000, 60, 20, 20})};
  profile.totals = integrate_totals(profile.series, 1.0);

  const EmulationPlan plan = plan_from_profile(profile);
  const auto& task = std::get<ComputeTask>(plan.groups[0].tasks[0]);
  CHECK(task.efficiency_target == doctest::Approx(0.6));

  PlanTuning tuning;
  tuning.efficiency_override = 0.9;
  const EmulationPlan tuned = plan_from_profile(profile, tuning);
  CHECK(std::get<ComputeTask>(tuned.groups[0].tasks[0]).efficiency_target ==
        doctest::Approx(0.9));
}

TEST_CASE("tuning block sizes reach the atom tasks") {
  Profile profile;
  profile.command = "blocks";
  profile.series[ResourceKind::Storage] = {
      make_sample(0, ResourceKind::Storage, IoSample{1 << 20, 1 << 20})};
  profile.series[ResourceKind::Memory] = {make_sample(
      0, ResourceKind::Memory, MemSample{1 << 20, 1 << 20, 1 << 20, 0})};
  profile.totals = integrate_totals(profile.series, 1.0);

  PlanTuning tuning;
  tuning.io_block_bytes = 4096;
  tuning.memory_block_bytes = 8192;
  const EmulationPlan plan = plan_from_profile(profile, tuning);
  for (const AtomTask& task : plan.groups[0].tasks) {
    if (const auto* storage = std::get_if<StorageTask>(&task))
      CHECK(storage->block_bytes == 4096);
    if (const auto* memory = std::get_if<MemoryTask>(&task))
      CHECK(memory->block_bytes == 8192);
  }
}

TEST_CASE("storage atom performs exact block-count arithmetic") {
  ScratchFiles scratch(scratch_dir(), 8ull << 20);

  SUBCASE("10 MiB in 1 MiB blocks is 10 operations") {
    const AtomReport r = scratch.write(10ull << 20, 1ull << 20);
    CHECK(r.operations == 10);
    CHECK(r.bytes_written == 10ull << 20);
  }
  SUBCASE("a trailing partial block adds one operation") {
    const AtomReport r = scratch.write((10ull << 20) + 1, 1ull << 20);
    CHECK(r.operations == 11);
    CHECK(r.bytes_written == (10ull << 20) + 1);
  }
  SUBCASE("reads wrap over the seeded file") {
    const AtomReport r = scratch.read(24ull << 20, 1ull << 20);
    CHECK(r.operations == 24);
    CHECK(r.bytes_read == 24ull << 20);
  }
  SUBCASE("zero quantities are no-ops") {
    const AtomReport r = run_storage_atom(scratch, 0, 0, 1 << 20);
    CHECK(r.operations == 0);
    CHECK(r.bytes_read == 0);
    CHECK(r.bytes_written == 0);
  }
}

TEST_CASE("memory pool allocates, touches and frees in blocks") {
  MemoryPool pool;
  const AtomReport alloc = pool.allocate(10ull << 20, 4ull << 20);
  CHECK(alloc.operations == 3);  // 4 + 4 + 2 MiB
  CHECK(alloc.allocated_bytes == 10ull << 20);
  CHECK(pool.held_bytes() == 10ull << 20);

  const AtomReport freed = pool.release(5ull << 20);
  CHECK(freed.freed_bytes == 8ull << 20);  // whole blocks, oldest first
  CHECK(pool.held_bytes() == 2ull << 20);

  const AtomReport rest = pool.release(100ull << 20);
  CHECK(rest.freed_bytes == 2ull << 20);  // pool exhausted, reports actual
  CHECK(pool.held_bytes() == 0);

  CHECK(run_memory_atom(pool, 0, 0, 1 << 20).operations == 0);
}

TEST_CASE("compute atom consumes its calibrated budget") {
  const KernelCalibration& cal = kernel_calibration();
  CHECK(cal.instructions_per_iteration > 0);
  CHECK(cal.iterations_per_cpu_second > 0);

  SUBCASE("zero instructions returns immediately") {
    const double t0 = monotonic_now_s();
    const AtomReport r = run_compute_atom(0, 1.0);
    CHECK(r.instructions == 0);
    CHECK(r.operations == 0);
    CHECK(monotonic_now_s() - t0 < 0.05);
  }

  SUBCASE("executed budget lands on the requested amount") {
    const auto budget = static_cast<std::uint64_t>(
        cal.instructions_per_iteration * cal.iterations_per_cpu_second * 0.2);
    const AtomReport r = run_compute_atom(budget, 1.0);
    CHECK(static_cast<double>(r.instructions) ==
          doctest::Approx(static_cast<double>(budget)).epsilon(0.02));
  }

  SUBCASE("invalid efficiency targets are rejected") {
    CHECK_THROWS_AS(run_compute_atom(1000, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(run_compute_atom(1000, 1.5), std::invalid_argument);
  }
}

TEST_CASE("compute consumption is visible to the profiler's counter source") {
  const KernelCalibration& cal = kernel_calibration();
  const auto budget = static_cast<std::uint64_t>(
      cal.instructions_per_iteration * cal.iterations_per_cpu_second * 0.8);

  LinuxBackend backend;
  ProbeTarget self{getpid(), monotonic_now_s()};
  backend.attach(self);

  // median of three rounds rides out shared-machine throughput jitter
  std::vector<double> ratios;
  for (int round = 0; round < 3; ++round) {
    const auto before = backend.snapshot(self, ResourceKind::Compute);
    REQUIRE(before.has_value());
    const AtomReport r = run_compute_atom(budget, 1.0);
    const auto after = backend.snapshot(self, ResourceKind::Compute);
    REQUIRE(after.has_value());
    const double measured = static_cast<double>(
        std::get<CpuSample>(after->cumulative).instructions -
        std::get<CpuSample>(before->cumulative).instructions);
    ratios.push_back(measured / static_cast<double>(budget));
    CHECK(static_cast<double>(r.instructions) ==
          doctest::Approx(static_cast<double>(budget)).epsilon(0.02));
  }
  backend.release(self);
  std::sort(ratios.begin(), ratios.end());
  CHECK(ratios[1] == doctest::Approx(1.0).epsilon(0.10));
}

TEST_CASE("self-check totals conserve the planned quantities") {
  const KernelCalibration& cal = kernel_calibration();
  EmulatorOptions options;
  options.scratch_dir = scratch_dir();
  Emulator emulator(options);

  const auto chunk = static_cast<std::uint64_t>(
      cal.instructions_per_iteration * cal.iterations_per_cpu_second * 0.05);
  EmulationPlan plan;
  for (int g = 0; g < 3; ++g) {
    SampleGroup group;
    group.sample_index = static_cast<std::uint64_t>(g);
    group.tasks.push_back(ComputeTask{chunk, 1.0});
    group.tasks.push_back(
        StorageTask{8ull << 20, 8ull << 20, 1ull << 20});
    group.tasks.push_back(MemoryTask{8ull << 20, 4ull << 20, 1ull << 20});
    plan.groups.push_back(std::move(group));
  }

  const EmulationReport report = emulator.emulate(plan);
  for (const auto& [metric, deviation] : report.deviations) {
    INFO("metric ", metric);
    CHECK(std::fabs(deviation) <= 0.10);
  }
  CHECK(report.self_check.bytes_read == 24ull << 20);
  CHECK(report.self_check.bytes_written == 24ull << 20);
}

TEST_CASE("duty cycling stretches wall time by the efficiency factor") {
  const KernelCalibration& cal = kernel_calibration();
  // ~0.5 s of work at full efficiency; alternate the two efficiency targets
  // so machine-load drift hits both sides of the ratio equally
  const auto budget = static_cast<std::uint64_t>(
      cal.instructions_per_iteration * cal.iterations_per_cpu_second * 0.5);

  double full = 0.0, half = 0.0;
  for (int round = 0; round < 2; ++round) {
    const double t0 = monotonic_now_s();
    run_compute_atom(budget, 1.0);
    full += monotonic_now_s() - t0;
    const double t1 = monotonic_now_s();
    run_compute_atom(budget, 0.5);
    half += monotonic_now_s() - t1;
  }

  CHECK(half >= 1.8 * full);
  CHECK(half < 3.5 * full);
}

TEST_CASE("emulating a single write group self-checks exactly") {
  EmulatorOptions options;
  options.scratch_dir = scratch_dir();
  Emulator emulator(options);

  EmulationPlan plan;
  SampleGroup group;
  group.sample_index = 0;
  group.tasks.push_back(StorageTask{0, 64ull << 20, 1ull << 20});
  plan.groups.push_back(group);

  const EmulationReport report = emulator.emulate(plan);
  CHECK(report.self_check.bytes_written == 64ull << 20);
  CHECK(report.deviations.at("bytes_written") == doctest::Approx(0.0));
  CHECK(report.ttc_s > 0.0);
  REQUIRE(report.groups.size() == 1);
  CHECK(report.groups[0].end_s >= report.groups[0].start_s);
}

TEST_CASE("emulating an empty plan is a precondition violation") {
  Emulator emulator;
  CHECK_THROWS_AS(emulator.emulate(EmulationPlan{}), std::invalid_argument);
}

TEST_CASE("group intervals are ordered and non-overlapping") {
  std::mt19937 rng(97);
  std::uniform_int_distribution<int> n_groups(1, 6);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_int_distribution<std::uint64_t> small(0, 200'000);

  EmulatorOptions options;
  options.scratch_dir = scratch_dir();

  for (int round = 0; round < 25; ++round) {
    EmulationPlan plan;
    const int n = n_groups(rng);
    for (int g = 0; g < n; ++g) {
      SampleGroup group;
      group.sample_index = static_cast<std::uint64_t>(g);
      const int atoms = kind(rng);
      for (int a = 0; a <= atoms; ++a) {
        switch (kind(rng)) {
          case 0:
            group.tasks.push_back(ComputeTask{small(rng), 1.0});
            break;
          case 1:
            group.tasks.push_back(MemoryTask{small(rng), small(rng) / 2,
                                             64 * 1024});
            break;
          default:
            group.tasks.push_back(
                StorageTask{small(rng), small(rng), 64 * 1024});
        }
      }
      plan.groups.push_back(std::move(group));
    }

    Emulator emulator(options);
    const EmulationReport report = emulator.emulate(plan);
    REQUIRE(report.groups.size() == plan.groups.size());
    for (std::size_t i = 0; i < report.groups.size(); ++i) {
      CHECK(report.groups[i].end_s >= report.groups[i].start_s);
      if (i > 0) CHECK(report.groups[i].start_s >= report.groups[i - 1].end_s);
    }
  }
}

TEST_CASE("atom failure aborts with a partial report naming the atom") {
  EmulatorOptions options;
  options.scratch_dir = scratch_dir();
  Emulator emulator(options);

  EmulationPlan plan;
  SampleGroup ok;
  ok.sample_index = 3;
  ok.tasks.push_back(ComputeTask{1000, 1.0});
  plan.groups.push_back(ok);
  SampleGroup bad;
  bad.sample_index = 7;
  bad.tasks.push_back(ComputeTask{1000, 0.0});  // invalid on purpose
  plan.groups.push_back(bad);

  try {
    emulator.emulate(plan);
    FAIL("expected EmulationAborted");
  } catch (const EmulationAborted& e) {
    CHECK(e.group_index == 7);
    CHECK(e.atom_kind == ResourceKind::Compute);
    CHECK(e.partial_report.groups.size() == 2);
    CHECK(std::string(e.what()).find("group 7") != std::string::npos);
  }
}

TEST_CASE("emulation report serializes") {
  EmulationReport report;
  report.ttc_s = 1.5;
  report.groups.push_back(GroupInterval{0, 0.0, 0.5});
  report.planned.instructions = 100;
  report.self_check.instructions = 101;
  report.deviations["instructions"] = 0.01;
  const auto doc = report_to_json(report);
  CHECK(doc.at("ttc_s") == 1.5);
  CHECK(doc.at("groups").size() == 1);
  CHECK(doc.at("deviations").at("instructions") == 0.01);
}

TEST_CASE("background load holds and releases memory") {
  LinuxBackend backend;
  ProbeTarget self{getpid(), monotonic_now_s()};
  const auto before = backend.snapshot(self, ResourceKind::Memory);
  REQUIRE(before.has_value());

  BackgroundLoadSpec spec;
  spec.memory_bytes = 128ull << 20;
  BackgroundLoad load(spec);
  CHECK(load.active());
  CHECK(load.held_memory_bytes() == 128ull << 20);

  const auto during = backend.snapshot(self, ResourceKind::Memory);
  REQUIRE(during.has_value());
  const auto rss_before =
      std::get<MemSample>(before->cumulative).resident_bytes;
  const auto rss_during =
      std::get<MemSample>(during->cumulative).resident_bytes;
  CHECK(rss_during >= rss_before + (120ull << 20));  // page-rounding slack

  load.release();
  CHECK_FALSE(load.active());
  CHECK(load.held_memory_bytes() == 0);
  backend.release(self);
}

TEST_CASE("zero background load is inert") {
  BackgroundLoad load(BackgroundLoadSpec{});
  CHECK_FALSE(load.active());
}

TEST_CASE("cpu background load burns the requested core fraction") {
  rusage before{};
  getrusage(RUSAGE_SELF, &before);
  BackgroundLoadSpec spec;
  spec.cpu_fraction = 0.5;
  {
    BackgroundLoad load(spec);
    std::this_thread::sleep_for(std::chrono::seconds(2));
  }
  rusage after{};
  getrusage(RUSAGE_SELF, &after);
  const double cpu_s =
      static_cast<double>(after.ru_utime.tv_sec - before.ru_utime.tv_sec) +
      static_cast<double>(after.ru_utime.tv_usec - before.ru_utime.tv_usec) *
          1e-6 +
      static_cast<double>(after.ru_stime.tv_sec - before.ru_stime.tv_sec) +
      static_cast<double>(after.ru_stime.tv_usec - before.ru_stime.tv_usec) *
          1e-6;
  CHECK(cpu_s == doctest::Approx(1.0).epsilon(0.30));  // ~50% of 2 s
}

TEST_CASE("disk background load sustains the requested write rate") {
  LinuxBackend backend;
  ProbeTarget self{getpid(), monotonic_now_s()};
  const auto before = backend.snapshot(self, ResourceKind::Storage);
  REQUIRE(before.has_value());

  BackgroundLoadSpec spec;
  spec.disk_write_mbps = 10.0;
  spec.scratch_dir = scratch_dir();
  {
    BackgroundLoad load(spec);
    std::this_thread::sleep_for(std::chrono::seconds(5));
  }
  const auto after = backend.snapshot(self, ResourceKind::Storage);
  REQUIRE(after.has_value());
  const double written =
      static_cast<double>(std::get<IoSample>(after->cumulative).bytes_written -
                          std::get<IoSample>(before->cumulative).bytes_written);
  CHECK(written == doctest::Approx(50e6).epsilon(0.20));
}
