#include "synapse/profile_json.hpp"

#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <stdexcept>

namespace synapse {

using nlohmann::json;

std::chrono::system_clock::time_point truncate_to_us(
    std::chrono::system_clock::time_point tp) {
  return std::chrono::time_point_cast<std::chrono::microseconds>(tp);
}

std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
  const auto us_total =
      std::chrono::duration_cast<std::chrono::microseconds>(
          tp.time_since_epoch())
          .count();
  const std::time_t secs = static_cast<std::time_t>(us_total / 1000000);
  const auto us = static_cast<unsigned>(us_total % 1000000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%06uZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, us);
  return buf;
}

std::chrono::system_clock::time_point parse_iso8601_utc(
    const std::string& text) {
  std::tm tm{};
  unsigned us = 0;
  char zone = 0;
  const int matched =
      std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%6u%c", &tm.tm_year,
                  &tm.tm_mon, &tm.tm_mday, &tm.tm_hour, &tm.tm_min, &tm.tm_sec,
                  &us, &zone);
  if (matched != 8 || zone != 'Z')
    throw std::invalid_argument("bad timestamp: " + text);
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  const std::time_t secs = timegm(&tm);
  return std::chrono::system_clock::time_point(std::chrono::seconds(secs) +
                                               std::chrono::microseconds(us));
}

namespace {

json sample_to_json(const Sample& sample) {
  json j;
  j["index"] = sample.index;
  j["t"] = sample.timestamp_s;
  if (sample.gap) j["gap"] = true;
  if (const auto* cpu = std::get_if<CpuSample>(&sample.payload)) {
    j["instructions"] = cpu->instructions;
    j["cycles_used"] = cpu->cycles_used;
    j["cycles_stalled_frontend"] = cpu->cycles_stalled_frontend;
    j["cycles_stalled_backend"] = cpu->cycles_stalled_backend;
  } else if (const auto* mem = std::get_if<MemSample>(&sample.payload)) {
    j["peak_bytes"] = mem->peak_bytes;
    j["resident_bytes"] = mem->resident_bytes;
    j["allocated_bytes"] = mem->allocated_bytes;
    j["freed_bytes"] = mem->freed_bytes;
  } else if (const auto* io = std::get_if<IoSample>(&sample.payload)) {
    j["bytes_read"] = io->bytes_read;
    j["bytes_written"] = io->bytes_written;
  }
  return j;
}

Sample sample_from_json(const json& j, ResourceKind kind) {
  Sample sample;
  sample.index = j.at("index").get<std::uint64_t>();
  sample.timestamp_s = j.at("t").get<double>();
  sample.kind = kind;
  sample.gap = j.value("gap", false);
  switch (kind) {
    case ResourceKind::Compute: {
      CpuSample cpu;
      cpu.instructions = j.at("instructions").get<std::uint64_t>();
      cpu.cycles_used = j.at("cycles_used").get<std::uint64_t>();
      cpu.cycles_stalled_frontend =
          j.at("cycles_stalled_frontend").get<std::uint64_t>();
      cpu.cycles_stalled_backend =
          j.at("cycles_stalled_backend").get<std::uint64_t>();
      sample.payload = cpu;
      break;
    }
    case ResourceKind::Memory: {
      MemSample mem;
      mem.peak_bytes = j.at("peak_bytes").get<std::uint64_t>();
      mem.resident_bytes = j.at("resident_bytes").get<std::uint64_t>();
      mem.allocated_bytes = j.at("allocated_bytes").get<std::uint64_t>();
      mem.freed_bytes = j.at("freed_bytes").get<std::uint64_t>();
      sample.payload = mem;
      break;
    }
    case ResourceKind::Storage: {
      IoSample io;
      io.bytes_read = j.at("bytes_read").get<std::uint64_t>();
      io.bytes_written = j.at("bytes_written").get<std::uint64_t>();
      sample.payload = io;
      break;
    }
    case ResourceKind::System:
      throw std::invalid_argument("system series cannot hold samples");
  }
  return sample;
}

json totals_to_json(const Totals& totals) {
  json j;
  j["runtime_s"] = totals.runtime_s;
  j["instructions"] = totals.instructions;
  j["cycles_used"] = totals.cycles_used;
  j["cycles_stalled_frontend"] = totals.cycles_stalled_frontend;
  j["cycles_stalled_backend"] = totals.cycles_stalled_backend;
  j["bytes_read"] = totals.bytes_read;
  j["bytes_written"] = totals.bytes_written;
  j["peak_bytes"] = totals.peak_bytes;
  j["resident_bytes"] = totals.resident_bytes;
  j["allocated_bytes"] = totals.allocated_bytes;
  j["freed_bytes"] = totals.freed_bytes;
  return j;
}

Totals totals_from_json(const json& j) {
  Totals totals;
  totals.runtime_s = j.at("runtime_s").get<double>();
  totals.instructions = j.at("instructions").get<std::uint64_t>();
  totals.cycles_used = j.at("cycles_used").get<std::uint64_t>();
  totals.cycles_stalled_frontend =
      j.at("cycles_stalled_frontend").get<std::uint64_t>();
  totals.cycles_stalled_backend =
      j.at("cycles_stalled_backend").get<std::uint64_t>();
  totals.bytes_read = j.at("bytes_read").get<std::uint64_t>();
  totals.bytes_written = j.at("bytes_written").get<std::uint64_t>();
  totals.peak_bytes = j.at("peak_bytes").get<std::uint64_t>();
  totals.resident_bytes = j.at("resident_bytes").get<std::uint64_t>();
  totals.allocated_bytes = j.at("allocated_bytes").get<std::uint64_t>();
  totals.freed_bytes = j.at("freed_bytes").get<std::uint64_t>();
  return totals;
}

}  // namespace

json profile_to_json(const Profile& profile) {
  json doc;
  doc["version"] = 1;
  doc["command"] = profile.command;
  doc["tags"] = profile.tags;  // std::set serializes sorted
  doc["system"] = {{"core_count", profile.system.core_count},
                   {"max_freq_hz", profile.system.max_freq_hz},
                   {"total_memory_bytes", profile.system.total_memory_bytes},
                   {"os_descriptor", profile.system.os_descriptor},
                   {"cpu_model", profile.system.cpu_model}};
  doc["sample_rate_hz"] = profile.sample_rate_hz;
  doc["spawn_offset_s"] = profile.spawn_offset_s;
  doc["exit_status"] = profile.exit_status;
  if (profile.cpu_counters_estimated) doc["cpu_counters_estimated"] = true;
  json series = json::object();
  for (const auto& [kind, samples] : profile.series) {
    json arr = json::array();
    for (const Sample& sample : samples) arr.push_back(sample_to_json(sample));
    series[to_string(kind)] = std::move(arr);
  }
  doc["series"] = std::move(series);
  doc["totals"] = totals_to_json(profile.totals);
  doc["created_at"] = iso8601_utc(profile.created_at);
  return doc;
}

Profile profile_from_json(const json& doc) {
  if (doc.value("version", 0) != 1)
    throw std::invalid_argument("unsupported profile schema version");
  Profile profile;
  profile.command = doc.at("command").get<std::string>();
  profile.tags = doc.at("tags").get<std::set<std::string>>();
  const json& sys = doc.at("system");
  profile.system.core_count = sys.at("core_count").get<std::uint32_t>();
  profile.system.max_freq_hz = sys.at("max_freq_hz").get<std::uint64_t>();
  profile.system.total_memory_bytes =
      sys.at("total_memory_bytes").get<std::uint64_t>();
  profile.system.os_descriptor = sys.at("os_descriptor").get<std::string>();
  profile.system.cpu_model = sys.at("cpu_model").get<std::string>();
  profile.sample_rate_hz = doc.at("sample_rate_hz").get<double>();
  profile.spawn_offset_s = doc.at("spawn_offset_s").get<double>();
  profile.exit_status = doc.at("exit_status").get<int>();
  profile.cpu_counters_estimated = doc.value("cpu_counters_estimated", false);
  for (const auto& [name, arr] : doc.at("series").items()) {
    const ResourceKind kind = resource_kind_from_string(name);
    std::vector<Sample> samples;
    samples.reserve(arr.size());
    for (const json& j : arr) samples.push_back(sample_from_json(j, kind));
    profile.series[kind] = std::move(samples);
  }
  profile.totals = totals_from_json(doc.at("totals"));
  profile.created_at = parse_iso8601_utc(doc.at("created_at").get<std::string>());
  return profile;
}

json stats_to_json(const ProfileStats& stats) {
  json doc;
  doc["n"] = stats.n;
  json metrics = json::object();
  for (const auto& [name, ms] : stats.metrics)
    metrics[name] = {{"mean", ms.mean}, {"stddev", ms.stddev}};
  doc["metrics"] = std::move(metrics);
  return doc;
}

}  // namespace synapse
