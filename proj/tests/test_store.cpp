#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "synapse/error.hpp"
#include "synapse/profile_json.hpp"
#include "synapse/store.hpp"

#include "helpers.hpp"

using namespace synapse;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("synapse-store-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

Profile tick(Profile p) {
  // distinct created_at per save when tests save "repeats"
  static int bump = 0;
  p.created_at += std::chrono::microseconds(++bump);
  return p;
}

}  // namespace

TEST_CASE("file store round-trips a profile exactly") {
  TempDir dir;
  FileProfileStore store(dir.path);
  std::mt19937 rng(41);
  Profile profile = testing::make_random_profile(rng, "round trip", {"a=1"});
  profile.cpu_counters_estimated = true;
  profile.exit_status = 3;

  const std::string id = store.save(profile);
  CHECK(std::filesystem::exists(id));

  const auto loaded = store.load(ProfileKey::of(profile));
  REQUIRE(loaded.size() == 1);
  CHECK(loaded.front() == profile);
}

TEST_CASE("document store round-trips a profile exactly") {
  InMemoryDocumentStore docs;
  DocumentProfileStore store(docs);
  std::mt19937 rng(43);
  const Profile profile = testing::make_random_profile(rng, "doc trip");
  store.save(profile);
  const auto loaded = store.load(ProfileKey::of(profile));
  REQUIRE(loaded.size() == 1);
  CHECK(loaded.front() == profile);
}

TEST_CASE("equal-key saves accumulate in save order") {
  TempDir dir;
  FileProfileStore store(dir.path);
  std::mt19937 rng(47);
  const Profile base = testing::make_random_profile(rng, "repeats");

  SUBCASE("same profile twice yields a 2-element collection") {
    store.save(base);
    store.save(base);
    CHECK(store.load(ProfileKey::of(base)).size() == 2);
  }

  SUBCASE("three repeats come back ordered by created_at") {
    Profile p1 = tick(base), p2 = tick(base), p3 = tick(base);
    store.save(p1);
    store.save(p2);
    store.save(p3);
    const auto loaded = store.load(ProfileKey::of(base));
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].created_at == p1.created_at);
    CHECK(loaded[1].created_at == p2.created_at);
    CHECK(loaded[2].created_at == p3.created_at);
  }
}

TEST_CASE("keys discriminate by command and tags") {
  TempDir dir;
  FileProfileStore store(dir.path);
  std::mt19937 rng(53);
  const Profile plain = testing::make_random_profile(rng, "cmd");
  const Profile tagged = testing::make_random_profile(rng, "cmd", {"run=b"});
  store.save(plain);
  store.save(tagged);

  CHECK(store.load(ProfileKey::of(plain)).size() == 1);
  CHECK(store.load(ProfileKey::of(tagged)).size() == 1);
  CHECK(store.load(ProfileKey::of(plain)).front().tags.empty());
  CHECK(store.load(ProfileKey{"cmd", {"run=c"}}).empty());
  CHECK(store.load(ProfileKey{"other", {}}).empty());  // absence, not error
}

TEST_CASE("document backend rejects oversized profiles before writing") {
  InMemoryDocumentStore docs;
  DocumentProfileStore store(docs);

  std::mt19937 rng(59);
  Profile big = testing::make_random_profile(rng, "big");
  auto& io = big.series[ResourceKind::Storage];
  io.clear();
  for (std::uint64_t i = 0; i < 300'000; ++i) {
    Sample s;
    s.index = i;
    s.timestamp_s = 0.1 * static_cast<double>(i + 1);
    s.kind = ResourceKind::Storage;
    s.payload = IoSample{i, i};
    io.push_back(s);
  }
  big.series.erase(ResourceKind::Compute);
  big.series.erase(ResourceKind::Memory);
  big.totals = integrate_totals(big.series, big.totals.runtime_s);

  try {
    store.save(big);
    FAIL("expected StoreLimitError");
  } catch (const StoreLimitError& e) {
    CHECK(e.actual_bytes() > StoreLimits::kMaxDocumentBytes);
    CHECK(e.limit_bytes() == StoreLimits::kMaxDocumentBytes);
    CHECK(std::string(e.what()).find(std::to_string(e.actual_bytes())) !=
          std::string::npos);
  }
  CHECK(docs.list_keys().empty());  // nothing reached the backend
}

TEST_CASE("stats_for") {
  TempDir dir;
  FileProfileStore store(dir.path);
  std::mt19937 rng(61);

  SUBCASE("single profile: n=1, stddev 0") {
    const Profile p = testing::make_random_profile(rng, "solo");
    store.save(p);
    const ProfileStats stats = store.stats_for(ProfileKey::of(p));
    CHECK(stats.n == 1);
    CHECK(stats.metrics.at("instructions").stddev == 0.0);
    CHECK(stats.metrics.at("instructions").mean ==
          static_cast<double>(p.totals.instructions));
  }

  SUBCASE("two-point mean and stddev") {
    auto with_instructions = [&](std::uint64_t instructions) {
      Profile p = testing::make_random_profile(rng, "pair");
      Sample s;
      s.index = 0;
      s.timestamp_s = 0.5;
      s.kind = ResourceKind::Compute;
      s.payload = CpuSample{instructions, 0, 0, 0};
      p.series = {{ResourceKind::Compute, {s}}};
      p.totals = integrate_totals(p.series, 1.0);
      return tick(p);
    };
    store.save(with_instructions(1'000'000'000ull));
    store.save(with_instructions(1'200'000'000ull));
    const ProfileStats stats = store.stats_for(ProfileKey{"pair", {}});
    CHECK(stats.metrics.at("instructions").mean ==
          doctest::Approx(1.1e9));
    CHECK(stats.metrics.at("instructions").stddev ==
          doctest::Approx(1.0e8));
  }

  SUBCASE("missing key is a not-found error") {
    CHECK_THROWS_AS(store.stats_for(ProfileKey{"nope", {}}), NotFoundError);
  }

  SUBCASE("k random repeats match the brute-force oracle") {
    std::vector<Profile> saved;
    for (int i = 0; i < 6; ++i) {
      Profile p = testing::make_random_profile(rng, "many");
      p = tick(p);
      saved.push_back(p);
      store.save(p);
    }
    const ProfileStats stats = store.stats_for(ProfileKey{"many", {}});
    REQUIRE(stats.n == 6);
    for (const std::string& name : metric_names()) {
      std::vector<double> xs;
      for (const Profile& p : saved)
        for_each_metric(p.totals, [&](const char* n, double v) {
          if (name == n) xs.push_back(v);
        });
      double sum = 0;
      for (double x : xs) sum += x;
      const double mean = sum / xs.size();
      double sq = 0;
      for (double x : xs) sq += (x - mean) * (x - mean);
      CHECK(stats.metrics.at(name).mean ==
            doctest::Approx(mean).epsilon(1e-12));
      CHECK(stats.metrics.at(name).stddev ==
            doctest::Approx(std::sqrt(sq / xs.size())).epsilon(1e-12));
    }
  }
}

TEST_CASE("corrupt records are reported with their identity") {
  TempDir dir;
  FileProfileStore store(dir.path);
  {
    std::ofstream bad(dir.path / "broken.json");
    bad << "{ not json";
  }
  try {
    store.load(ProfileKey{"x", {}});
    FAIL("expected CorruptProfileError");
  } catch (const CorruptProfileError& e) {
    CHECK(e.record().find("broken.json") != std::string::npos);
  }
}

TEST_CASE("saving an invariant-violating profile is rejected") {
  TempDir dir;
  FileProfileStore store(dir.path);
  std::mt19937 rng(67);
  Profile p = testing::make_random_profile(rng, "invalid");
  p.totals.instructions += 1;  // totals no longer match the series
  CHECK_THROWS_AS(store.save(p), std::invalid_argument);
}

TEST_CASE("concurrent same-key saves all survive") {
  TempDir dir;
  FileProfileStore store(dir.path);
  std::mt19937 rng(71);
  const Profile base = testing::make_random_profile(rng, "concurrent");

  std::vector<std::thread> writers;
  for (int i = 0; i < 8; ++i) {
    writers.emplace_back([&store, p = tick(base)] { store.save(p); });
  }
  for (auto& t : writers) t.join();
  CHECK(store.load(ProfileKey::of(base)).size() == 8);
}
