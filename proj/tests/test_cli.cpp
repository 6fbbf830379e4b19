#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "synapse/profile_json.hpp"
#include "synapse/store.hpp"

using namespace synapse;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(SYNAPSE_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0)
    result.output.append(buf, n);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::filesystem::path temp_store() {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("synapse-cli-test-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

TEST_CASE("rate above the cap is a usage error") {
  const auto store = temp_store();
  const auto r =
      run_cli("profile --rate 11 --store " + store.string() + " -- true");
  CHECK(r.exit_code == 2);
}

TEST_CASE("unspawnable targets exit 2 with a diagnostic") {
  const auto store = temp_store();
  const auto r = run_cli("profile --rate 10 --store " + store.string() +
                         " -- /no/such/binary-anywhere");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("cannot execute") != std::string::npos);
}

TEST_CASE("a failing target exits 3 but the profile is stored and flagged") {
  const auto store = temp_store();
  const auto r =
      run_cli("profile --rate 10 --store " + store.string() + " -- false");
  CHECK(r.exit_code == 3);
  FileProfileStore files(store);
  const auto profiles = files.load(ProfileKey{"false", {}});
  REQUIRE(profiles.size() == 1);
  CHECK(profiles.front().failed());
  CHECK(profiles.front().exit_status == 1);
}

TEST_CASE("profiles of a healthy target exit 0 and print a summary") {
  const auto store = temp_store();
  const auto r =
      run_cli("profile --rate 10 --store " + store.string() + " -- true");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("profiled 'true'") != std::string::npos);
  CHECK(r.output.find("stored:") != std::string::npos);
}

TEST_CASE("tags produce distinct store keys") {
  const auto store = temp_store();
  CHECK(run_cli("profile --rate 10 --tag run=a --store " + store.string() +
                " -- true")
            .exit_code == 0);
  CHECK(run_cli("profile --rate 10 --tag run=b --store " + store.string() +
                " -- true")
            .exit_code == 0);
  FileProfileStore files(store);
  CHECK(files.load(ProfileKey{"true", {"run=a"}}).size() == 1);
  CHECK(files.load(ProfileKey{"true", {"run=b"}}).size() == 1);
  CHECK(files.load(ProfileKey{"true", {}}).empty());
}

TEST_CASE("sample-rate environment variable is honored, flag wins") {
  const auto store = temp_store();
  setenv("SYNAPSE_SAMPLE_RATE", "5", 1);
  CHECK(run_cli("profile --store " + store.string() + " -- true").exit_code ==
        0);
  CHECK(run_cli("profile --rate 10 --tag via=flag --store " + store.string() +
                " -- true")
            .exit_code == 0);
  unsetenv("SYNAPSE_SAMPLE_RATE");

  FileProfileStore files(store);
  const auto via_env = files.load(ProfileKey{"true", {}});
  REQUIRE(via_env.size() == 1);
  CHECK(via_env.front().sample_rate_hz == 5.0);
  const auto via_flag = files.load(ProfileKey{"true", {"via=flag"}});
  REQUIRE(via_flag.size() == 1);
  CHECK(via_flag.front().sample_rate_hz == 10.0);
}

TEST_CASE("emulating an unknown key exits 4") {
  const auto store = temp_store();
  const auto r =
      run_cli("emulate --store " + store.string() + " -- never profiled");
  CHECK(r.exit_code == 4);
  CHECK(r.output.find("no profile") != std::string::npos);
}

TEST_CASE("profile then emulate round-trips through the store") {
  const auto store = temp_store();
  const auto scratch = temp_store();
  const std::string workload = std::string(WORKLOAD_BIN) + " write 30";

  const auto profiled = run_cli("profile --rate 10 --store " + store.string() +
                                " -- " + workload);
  REQUIRE(profiled.exit_code == 0);

  const auto emulated =
      run_cli("emulate --store " + store.string() + " --scratch " +
              scratch.string() + " --block-size 4096 -- " + workload);
  CHECK(emulated.exit_code == 0);
  CHECK(emulated.output.find("block 4096") != std::string::npos);
  CHECK(emulated.output.find("ttc:") != std::string::npos);
  CHECK(emulated.output.find("self-check bytes_written") != std::string::npos);
}

TEST_CASE("a stored repeat can be selected by its created_at") {
  const auto store = temp_store();
  for (int i = 0; i < 2; ++i)
    REQUIRE(run_cli("profile --rate 10 --store " + store.string() +
                    " -- true")
                .exit_code == 0);
  FileProfileStore files(store);
  const auto repeats = files.load(ProfileKey{"true", {}});
  REQUIRE(repeats.size() == 2);

  const std::string first = iso8601_utc(repeats.front().created_at);
  const auto r = run_cli("emulate --store " + store.string() +
                         " --created-at " + first + " -- true");
  CHECK(r.exit_code == 0);

  const auto missing = run_cli("emulate --store " + store.string() +
                               " --created-at 1999-01-01T00:00:00.000000Z "
                               "-- true");
  CHECK(missing.exit_code == 4);
}

TEST_CASE("report on an empty store exits 4") {
  const auto store = temp_store();
  CHECK(run_cli("report --store " + store.string()).exit_code == 4);
}

TEST_CASE("report summary emits one row per key with matching sums") {
  const auto store = temp_store();
  REQUIRE(run_cli("profile --rate 10 --store " + store.string() +
                  " -- true")
              .exit_code == 0);
  REQUIRE(run_cli("profile --rate 10 --store " + store.string() +
                  " -- sleep 0.1")
              .exit_code == 0);

  const auto r = run_cli("report --store " + store.string());
  CHECK(r.exit_code == 0);
  const auto rows = parse_csv(r.output);
  REQUIRE(rows.size() == 3);  // header + two keys

  std::size_t instr_col = 0;
  for (std::size_t i = 0; i < rows[0].size(); ++i)
    if (rows[0][i] == "instructions_mean") instr_col = i;
  REQUIRE(instr_col > 0);

  double csv_sum = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    csv_sum += std::stod(rows[i][instr_col]);

  FileProfileStore files(store);
  double store_sum = 0.0;
  for (const Profile& p : files.load_all())
    store_sum += static_cast<double>(p.totals.instructions);
  CHECK(csv_sum == doctest::Approx(store_sum).epsilon(1e-9));
}

TEST_CASE("report summary aggregates repeats of one key") {
  const auto store = temp_store();
  for (int i = 0; i < 2; ++i)
    REQUIRE(run_cli("profile --rate 10 --store " + store.string() +
                    " -- true")
                .exit_code == 0);
  const auto r = run_cli("report --store " + store.string());
  CHECK(r.exit_code == 0);
  const auto rows = parse_csv(r.output);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][3] == "2");  // n column
}

TEST_CASE("report compare pairs key-sets by residual tags") {
  const auto store = temp_store();
  REQUIRE(run_cli("profile --rate 10 --tag phase=base --tag case=w --store " +
                  store.string() + " -- true")
              .exit_code == 0);
  REQUIRE(run_cli("profile --rate 10 --tag phase=other --tag case=w --store " +
                  store.string() + " -- sleep 0.1")
              .exit_code == 0);

  const auto r = run_cli("report --mode compare --select phase=base "
                         "--against phase=other --store " +
                         store.string());
  CHECK(r.exit_code == 0);
  const auto rows = parse_csv(r.output);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][4] == "diff_percent");
  CHECK(rows[1][0] == "case=w");
  CHECK_NOTHROW(std::stod(rows[1][4]));

  const auto missing = run_cli(
      "report --mode compare --select phase=nope --against phase=other "
      "--store " +
      store.string());
  CHECK(missing.exit_code == 4);
}

TEST_CASE("zero-load stress is an immediate no-op") {
  const auto r = run_cli("stress --duration 5");
  CHECK(r.exit_code == 0);
}

TEST_CASE("stress holds memory for the requested duration") {
  const auto r = run_cli("stress --mem 64MiB --duration 1");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("holding load") != std::string::npos);
}

TEST_CASE("report svg plot is written when requested") {
  const auto store = temp_store();
  REQUIRE(run_cli("profile --rate 10 --store " + store.string() +
                  " -- true")
              .exit_code == 0);
  const auto svg = store / "plot.svg";
  const auto r = run_cli("report --store " + store.string() + " --svg " +
                         svg.string());
  CHECK(r.exit_code == 0);
  std::ifstream in(svg);
  std::string body((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(body.find("<svg") != std::string::npos);
}
