// Command-line front door: profile | emulate | report | stress.
// Exit codes: 0 success, 2 usage/spawn error, 3 target command failed
// (profile still stored), 4 no matching profile / missing report keys,
// 5 atom failure or unsatisfiable load.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "synapse/background_load.hpp"
#include "synapse/emulator.hpp"
#include "synapse/error.hpp"
#include "synapse/profile_json.hpp"
#include "synapse/sampler.hpp"
#include "synapse/store.hpp"

namespace {

using namespace synapse;

volatile std::sig_atomic_t g_interrupted = 0;
void on_interrupt(int) { g_interrupted = 1; }

std::string default_store() {
  if (const char* env = std::getenv("SYNAPSE_STORE")) return env;
  return "./synapse-profiles";
}

std::string human_bytes(double bytes) {
  char buf[64];
  if (bytes >= 1e9)
    std::snprintf(buf, sizeof(buf), "%.2f GB", bytes / 1e9);
  else if (bytes >= 1e6)
    std::snprintf(buf, sizeof(buf), "%.2f MB", bytes / 1e6);
  else if (bytes >= 1e3)
    std::snprintf(buf, sizeof(buf), "%.2f kB", bytes / 1e3);
  else
    std::snprintf(buf, sizeof(buf), "%.0f B", bytes);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string join_tags(const std::set<std::string>& tags) {
  std::string out;
  for (const auto& tag : tags) {
    if (!out.empty()) out += ';';
    out += tag;
  }
  return out;
}

// --- profile -------------------------------------------------------------

struct ProfileArgs {
  std::optional<double> rate;
  std::vector<std::string> tags;
  std::string store = default_store();
};

int cmd_profile(const ProfileArgs& args,
                const std::vector<std::string>& target) {
  if (target.empty()) {
    std::cerr << "profile: missing target command (use -- <command>)\n";
    return 2;
  }
  ProfilerConfig config = ProfilerConfig::from_environment();
  if (args.rate) config.sample_rate_hz = *args.rate;  // flag beats env var
  config.tags.insert(args.tags.begin(), args.tags.end());
  config.validate();

  LinuxBackend backend;
  Profiler profiler(backend);
  Profile profile = profiler.profile_command(target, config);

  FileProfileStore store(args.store);
  const std::string stored_id = store.save(profile);

  std::printf(
      "profiled '%s': runtime %.3f s, %llu instructions, read %s, wrote %s, "
      "peak rss %s\n",
      profile.command.c_str(), profile.totals.runtime_s,
      static_cast<unsigned long long>(profile.totals.instructions),
      human_bytes(static_cast<double>(profile.totals.bytes_read)).c_str(),
      human_bytes(static_cast<double>(profile.totals.bytes_written)).c_str(),
      human_bytes(static_cast<double>(profile.totals.peak_bytes)).c_str());
  std::printf("stored: %s\n", stored_id.c_str());

  if (profile.failed()) {
    std::fprintf(stderr, "target exited with status %d (profile flagged)\n",
                 profile.exit_status);
    return 3;
  }
  return 0;
}

// --- emulate -------------------------------------------------------------

struct EmulateArgs {
  std::vector<std::string> tags;
  std::string store = default_store();
  std::string scratch;
  std::uint64_t block_bytes = kDefaultBlockBytes;
  std::optional<double> efficiency;
  std::string created_at;  // select a specific repeat; default most recent
  std::string report_path;
};

int cmd_emulate(const EmulateArgs& args,
                const std::vector<std::string>& target) {
  if (target.empty()) {
    std::cerr << "emulate: missing target command (use -- <command>)\n";
    return 2;
  }
  ProfileKey key;
  key.command = join_command(target);
  key.tags.insert(args.tags.begin(), args.tags.end());

  FileProfileStore store(args.store);
  std::vector<Profile> matches = store.load(key);
  if (matches.empty()) {
    std::cerr << "no profile for key '" << key.command << "'";
    if (!key.tags.empty()) std::cerr << " tags [" << join_tags(key.tags) << "]";
    std::cerr << "\n";
    return 4;
  }

  Profile profile = matches.back();
  if (!args.created_at.empty()) {
    const auto wanted = parse_iso8601_utc(args.created_at);
    bool found = false;
    for (Profile& candidate : matches) {
      if (candidate.created_at == wanted) {
        profile = candidate;
        found = true;
        break;
      }
    }
    if (!found) {
      std::cerr << "no stored repeat created at " << args.created_at << "\n";
      return 4;
    }
  }

  PlanTuning tuning;
  tuning.io_block_bytes = args.block_bytes;
  tuning.memory_block_bytes = args.block_bytes;
  tuning.efficiency_override = args.efficiency;

  EmulatorOptions options;
  if (!args.scratch.empty()) options.scratch_dir = args.scratch;

  auto print_report = [&](const EmulationReport& report) {
    std::printf("emulated '%s' (%zu sample groups, block %llu bytes)\n",
                key.command.c_str(), report.groups.size(),
                static_cast<unsigned long long>(args.block_bytes));
    std::printf("ttc: %.3f s (profiled runtime was %.3f s)\n", report.ttc_s,
                profile.totals.runtime_s);
    for (const auto& [metric, deviation] : report.deviations)
      std::printf("self-check %s: %+.2f%%\n", metric.c_str(),
                  deviation * 100.0);
    if (!args.report_path.empty()) {
      std::ofstream out(args.report_path);
      out << report_to_json(report).dump(1) << "\n";
    }
  };

  try {
    EmulationPlan plan = plan_from_profile(profile, tuning);
    Emulator emulator(options);
    EmulationReport report = emulator.emulate(plan);
    print_report(report);
  } catch (const EmulationAborted& e) {
    std::fprintf(stderr, "emulation aborted: %s\n", e.what());
    print_report(e.partial_report);
    return 5;
  } catch (const EmptyPlanError& e) {
    std::fprintf(stderr, "emulation failed: %s\n", e.what());
    return 5;
  }
  return 0;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::string store = default_store();
  std::string mode = "summary";
  std::vector<std::string> select_tags;
  std::string against_tag;
  std::string out_path;  // empty -> stdout
  std::string svg_path;
};

struct ReportGroup {
  ProfileKey key;
  double sample_rate_hz;
  std::vector<Profile> members;
};

std::vector<ReportGroup> group_profiles(std::vector<Profile> profiles) {
  std::map<std::pair<ProfileKey, double>, std::vector<Profile>> grouped;
  for (Profile& p : profiles) {
    grouped[{ProfileKey::of(p), p.sample_rate_hz}].push_back(std::move(p));
  }
  std::vector<ReportGroup> out;
  for (auto& [key, members] : grouped)
    out.push_back(ReportGroup{key.first, key.second, std::move(members)});
  return out;
}

void write_svg_bars(const std::string& path,
                    const std::vector<std::string>& labels,
                    const std::vector<double>& base,
                    const std::vector<double>& other) {
  const int width = 80 + static_cast<int>(labels.size()) * 70;
  const int height = 260;
  double peak = 1e-9;
  for (double v : base) peak = std::max(peak, v);
  for (double v : other) peak = std::max(peak, v);

  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n";
  out << "<line x1='40' y1='220' x2='" << width - 20
      << "' y2='220' stroke='black'/>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int x = 50 + static_cast<int>(i) * 70;
    const auto bar = [&](double value, int offset, const char* color) {
      const int h = static_cast<int>(200.0 * value / peak);
      out << "<rect x='" << x + offset << "' y='" << 220 - h
          << "' width='24' height='" << h << "' fill='" << color << "'/>\n";
    };
    bar(base[i], 0, "#4878a8");
    if (i < other.size()) bar(other[i], 28, "#c05050");
    out << "<text x='" << x << "' y='240' font-size='10'>"
        << labels[i].substr(0, 12) << "</text>\n";
  }
  out << "</svg>\n";
}

int cmd_report(const ReportArgs& args) {
  FileProfileStore store(args.store);
  std::vector<ReportGroup> groups = group_profiles(store.load_all());

  std::ofstream file_out;
  if (!args.out_path.empty()) {
    file_out.open(args.out_path);
    if (!file_out) {
      std::cerr << "cannot open " << args.out_path << "\n";
      return 2;
    }
  }
  std::ostream& out = args.out_path.empty() ? std::cout : file_out;

  if (args.mode == "summary") {
    auto wanted = [&](const ReportGroup& g) {
      for (const std::string& tag : args.select_tags)
        if (!g.key.tags.count(tag)) return false;
      return true;
    };
    std::vector<const ReportGroup*> rows;
    for (const ReportGroup& g : groups)
      if (wanted(g)) rows.push_back(&g);
    if (rows.empty()) {
      std::cerr << "report: no matching profiles in " << args.store << "\n";
      return 4;
    }

    out << "command,tags,sample_rate_hz,n";
    for (const std::string& name : metric_names())
      out << "," << name << "_mean," << name << "_stddev";
    out << ",instructions_cv\n";
    std::vector<std::string> labels;
    std::vector<double> runtimes;
    for (const ReportGroup* g : rows) {
      const ProfileStats stats = aggregate_stats(g->members);
      out << csv_escape(g->key.command) << ","
          << csv_escape(join_tags(g->key.tags)) << "," << g->sample_rate_hz
          << "," << stats.n;
      char buf[64];
      for (const std::string& name : metric_names()) {
        const MetricStats& ms = stats.metrics.at(name);
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", ms.mean, ms.stddev);
        out << buf;
      }
      const MetricStats& instr = stats.metrics.at("instructions");
      std::snprintf(buf, sizeof(buf), ",%.6g",
                    instr.mean > 0 ? instr.stddev / instr.mean : 0.0);
      out << buf << "\n";
      labels.push_back(g->key.command);
      runtimes.push_back(stats.metrics.at("runtime_s").mean);
    }
    if (!args.svg_path.empty())
      write_svg_bars(args.svg_path, labels, runtimes, {});
    return 0;
  }

  if (args.mode == "compare") {
    if (args.select_tags.empty() || args.against_tag.empty()) {
      std::cerr << "compare mode needs --select TAG and --against TAG\n";
      return 2;
    }
    const std::string base_tag = args.select_tags.front();
    // Pair rows by the tags that remain after stripping the selector tags;
    // commands differ between e.g. execution and emulation runs.
    auto residue = [&](const ProfileKey& key) {
      std::set<std::string> rest = key.tags;
      rest.erase(base_tag);
      rest.erase(args.against_tag);
      return rest;
    };
    std::map<std::set<std::string>, std::pair<const ReportGroup*,
                                              const ReportGroup*>> paired;
    for (const ReportGroup& g : groups) {
      if (g.key.tags.count(base_tag)) paired[residue(g.key)].first = &g;
      if (g.key.tags.count(args.against_tag))
        paired[residue(g.key)].second = &g;
    }

    std::vector<std::string> labels;
    std::vector<double> base_ttc, other_ttc;
    out << "label,command,base_runtime_s,other_runtime_s,diff_percent\n";
    std::size_t rows = 0;
    for (const auto& [rest, pair] : paired) {
      if (!pair.first || !pair.second) continue;
      const double base =
          aggregate_stats(pair.first->members).metrics.at("runtime_s").mean;
      const double other =
          aggregate_stats(pair.second->members).metrics.at("runtime_s").mean;
      const std::string label = join_tags(rest);
      char buf[96];
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.4g", base, other,
                    base > 0 ? (other - base) / base * 100.0 : 0.0);
      out << csv_escape(label) << ","
          << csv_escape(pair.first->key.command) << buf << "\n";
      labels.push_back(label.empty() ? pair.first->key.command : label);
      base_ttc.push_back(base);
      other_ttc.push_back(other);
      ++rows;
    }
    if (rows == 0) {
      std::cerr << "report: no paired keys for tags '" << base_tag
                << "' vs '" << args.against_tag << "'\n";
      return 4;
    }
    if (!args.svg_path.empty())
      write_svg_bars(args.svg_path, labels, base_ttc, other_ttc);
    return 0;
  }

  std::cerr << "unknown report mode '" << args.mode << "'\n";
  return 2;
}

// --- stress ----------------------------------------------------------------

struct StressArgs {
  double cpu = 0.0;
  double disk_mbps = 0.0;
  std::uint64_t mem_bytes = 0;
  double duration_s = 0.0;  // 0 -> run until SIGINT
  std::string scratch;
};

int cmd_stress(const StressArgs& args) {
  if (args.cpu == 0.0 && args.disk_mbps == 0.0 && args.mem_bytes == 0)
    return 0;  // zero load is a no-op

  BackgroundLoadSpec spec;
  spec.cpu_fraction = args.cpu;
  spec.disk_write_mbps = args.disk_mbps;
  spec.memory_bytes = args.mem_bytes;
  if (!args.scratch.empty()) spec.scratch_dir = args.scratch;

  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  try {
    BackgroundLoad load(spec);
    std::printf("holding load: cpu %.2f cores, disk %.1f MB/s, mem %s%s\n",
                args.cpu, args.disk_mbps,
                human_bytes(static_cast<double>(args.mem_bytes)).c_str(),
                args.duration_s > 0 ? "" : " (interrupt to stop)");
    std::fflush(stdout);
    const double until =
        args.duration_s > 0 ? monotonic_now_s() + args.duration_s : 0.0;
    while (!g_interrupted) {
      if (until > 0 && monotonic_now_s() >= until) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    load.release();
  } catch (const AtomError& e) {
    std::fprintf(stderr, "stress: %s\n", e.what());
    return 5;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Everything after a bare `--` is the target command, verbatim.
  std::vector<std::string> tool_args, target;
  bool seen_separator = false;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (!seen_separator && arg == "--") {
      seen_separator = true;
      continue;
    }
    (seen_separator ? target : tool_args).push_back(std::move(arg));
  }

  CLI::App app{"black-box resource profiler and workload emulator"};
  app.require_subcommand(1);

  ProfileArgs profile_args;
  auto* profile = app.add_subcommand(
      "profile", "profile a command and store the result");
  double rate_flag = 0.0;
  auto* rate_opt =
      profile->add_option("--rate", rate_flag, "samples per second (max 10)");
  profile->add_option("--tag", profile_args.tags, "key tag (repeatable)");
  profile->add_option("--store", profile_args.store, "profile store directory");

  EmulateArgs emulate_args;
  auto* emulate = app.add_subcommand(
      "emulate", "replay a stored profile's resource consumption");
  emulate->add_option("--tag", emulate_args.tags, "key tag (repeatable)");
  emulate->add_option("--store", emulate_args.store, "profile store directory");
  emulate->add_option("--scratch", emulate_args.scratch,
                      "scratch directory for storage atoms");
  emulate->add_option("--block-size", emulate_args.block_bytes,
                      "I/O and memory block size in bytes")
      ->transform(CLI::AsSizeValue(false));
  double efficiency_flag = 0.0;
  auto* eff_opt = emulate->add_option("--efficiency", efficiency_flag,
                                      "override compute efficiency (0,1]");
  emulate->add_option("--created-at", emulate_args.created_at,
                      "select the repeat with this created_at timestamp");
  emulate->add_option("--report-json", emulate_args.report_path,
                      "write the emulation report to this JSON file");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "emit plot-ready CSV data");
  report->add_option("--store", report_args.store, "profile store directory");
  report->add_option("--mode", report_args.mode, "summary | compare");
  report->add_option("--select", report_args.select_tags,
                     "tag filter (compare: base key-set)");
  report->add_option("--against", report_args.against_tag,
                     "compare: tag of the other key-set");
  report->add_option("--out", report_args.out_path, "CSV output path");
  report->add_option("--svg", report_args.svg_path, "optional SVG plot path");

  StressArgs stress_args;
  auto* stress = app.add_subcommand(
      "stress", "hold an artificial background load");
  stress->add_option("--cpu", stress_args.cpu, "cores' worth of CPU load");
  stress->add_option("--disk-mbps", stress_args.disk_mbps,
                     "disk write load in MB/s");
  stress->add_option("--mem", stress_args.mem_bytes,
                     "resident memory to hold (accepts 256MiB style)")
      ->transform(CLI::AsSizeValue(false));
  stress->add_option("--duration", stress_args.duration_s,
                     "seconds to hold the load (0 = until interrupt)");
  stress->add_option("--scratch", stress_args.scratch, "scratch directory");

  try {
    std::reverse(tool_args.begin(), tool_args.end());
    app.parse(tool_args);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_name() == "CallForHelp" ? 0 : 2;
  }

  try {
    if (profile->parsed()) {
      if (rate_opt->count()) profile_args.rate = rate_flag;
      return cmd_profile(profile_args, target);
    }
    if (emulate->parsed()) {
      if (eff_opt->count()) emulate_args.efficiency = efficiency_flag;
      return cmd_emulate(emulate_args, target);
    }
    if (report->parsed()) return cmd_report(report_args);
    if (stress->parsed()) return cmd_stress(stress_args);
  } catch (const CommandError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
