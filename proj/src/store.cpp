#include "synapse/store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "synapse/error.hpp"
#include "synapse/profile_json.hpp"

namespace synapse {

using nlohmann::json;

void validate_profile(const Profile& profile) {
  for (const auto& [kind, samples] : profile.series) {
    validate_series(samples);
    for (const Sample& s : samples) {
      if (s.kind != kind)
        throw std::invalid_argument("sample filed under the wrong series");
    }
    if (kind == ResourceKind::Memory) {
      std::uint64_t prev_peak = 0;
      for (const Sample& s : samples) {
        const auto& mem = std::get<MemSample>(s.payload);
        if (mem.peak_bytes < prev_peak)
          throw std::invalid_argument("memory peak must be non-decreasing");
        prev_peak = mem.peak_bytes;
      }
    }
  }
  if (integrate_totals(profile.series, profile.totals.runtime_s) !=
      profile.totals)
    throw std::invalid_argument("totals do not match the sample series");
}

ProfileStats ProfileStore::stats_for(const ProfileKey& key) {
  const std::vector<Profile> matches = load(key);
  if (matches.empty())
    throw NotFoundError("no profile for command '" + key.command + "'");
  return aggregate_stats(matches);
}

namespace {

std::uint64_t fnv1a(const std::string& text, std::uint64_t hash) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string content_hash(const Profile& profile) {
  std::uint64_t hash = 14695981039346656037ull;
  hash = fnv1a(profile.command, hash);
  hash = fnv1a("\x1f", hash);
  for (const std::string& tag : profile.tags) {
    hash = fnv1a(tag, hash);
    hash = fnv1a("\x1f", hash);
  }
  hash = fnv1a(iso8601_utc(profile.created_at), hash);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

void sort_by_created_at(std::vector<Profile>& profiles) {
  std::stable_sort(profiles.begin(), profiles.end(),
                   [](const Profile& a, const Profile& b) {
                     return a.created_at < b.created_at;
                   });
}

std::string key_string(const ProfileKey& key) {
  json j;
  j["command"] = key.command;
  j["tags"] = key.tags;
  return j.dump();
}

}  // namespace

// --- File store --------------------------------------------------------------

FileProfileStore::FileProfileStore(std::filesystem::path directory)
    : directory_(std::move(directory)) {
  std::error_code ec;
  std::filesystem::create_directories(directory_, ec);
  if (ec)
    throw StorageError("cannot create store directory " + directory_.string() +
                       ": " + ec.message());
}

std::string FileProfileStore::save(const Profile& profile) {
  validate_profile(profile);
  const std::string body = profile_to_json(profile).dump(1);

  std::filesystem::path path =
      directory_ / ("profile-" + content_hash(profile) + ".json");
  for (int attempt = 1; std::filesystem::exists(path); ++attempt) {
    path = directory_ / ("profile-" + content_hash(profile) + "-" +
                         std::to_string(attempt) + ".json");
  }

  // Write-then-rename so concurrent readers never see a partial record.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open " + tmp.string());
    out << body << "\n";
    if (!out.flush())
      throw StorageError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw StorageError("cannot finalize " + path.string() + ": " +
                       ec.message());
  return path.string();
}

std::vector<Profile> FileProfileStore::load_all() {
  std::vector<Profile> out;
  std::error_code ec;
  for (const auto& entry :
       std::filesystem::directory_iterator(directory_, ec)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json")
      continue;
    std::ifstream in(entry.path(), std::ios::binary);
    if (!in)
      throw CorruptProfileError(entry.path().string(), "unreadable file");
    try {
      json doc = json::parse(in);
      out.push_back(profile_from_json(doc));
    } catch (const std::exception& e) {
      throw CorruptProfileError(entry.path().string(), e.what());
    }
  }
  sort_by_created_at(out);
  return out;
}

std::vector<Profile> FileProfileStore::load(const ProfileKey& key) {
  std::vector<Profile> out;
  for (Profile& profile : load_all()) {
    if (ProfileKey::of(profile) == key) out.push_back(std::move(profile));
  }
  return out;
}

// --- Document store ----------------------------------------------------------

void InMemoryDocumentStore::put(const std::string& key,
                                const std::string& document) {
  std::lock_guard lock(mu_);
  documents_[key].push_back(document);
}

std::vector<std::string> InMemoryDocumentStore::query(
    const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = documents_.find(key);
  return it == documents_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> InMemoryDocumentStore::list_keys() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  out.reserve(documents_.size());
  for (const auto& [key, docs] : documents_) out.push_back(key);
  return out;
}

DocumentProfileStore::DocumentProfileStore(DocumentStore& backend,
                                           std::size_t max_document_bytes)
    : backend_(backend), max_document_bytes_(max_document_bytes) {}

std::string DocumentProfileStore::save(const Profile& profile) {
  validate_profile(profile);
  const std::string document = profile_to_json(profile).dump();
  if (document.size() > max_document_bytes_)
    throw StoreLimitError(document.size(), max_document_bytes_);
  const std::string key = key_string(ProfileKey::of(profile));
  backend_.put(key, document);
  return key + "#" + std::to_string(backend_.query(key).size() - 1);
}

std::vector<Profile> DocumentProfileStore::load(const ProfileKey& key) {
  const std::string keystr = key_string(key);
  std::vector<Profile> out;
  std::size_t i = 0;
  for (const std::string& document : backend_.query(keystr)) {
    try {
      out.push_back(profile_from_json(json::parse(document)));
    } catch (const std::exception& e) {
      throw CorruptProfileError(keystr + "#" + std::to_string(i), e.what());
    }
    ++i;
  }
  sort_by_created_at(out);
  return out;
}

std::vector<Profile> DocumentProfileStore::load_all() {
  std::vector<Profile> out;
  for (const std::string& keystr : backend_.list_keys()) {
    std::size_t i = 0;
    for (const std::string& document : backend_.query(keystr)) {
      try {
        out.push_back(profile_from_json(json::parse(document)));
      } catch (const std::exception& e) {
        throw CorruptProfileError(keystr + "#" + std::to_string(i), e.what());
      }
      ++i;
    }
  }
  sort_by_created_at(out);
  return out;
}

}  // namespace synapse
