#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "synapse/model.hpp"

namespace synapse {

// Profiles match a key iff the command strings are byte-identical and the
// tag sets are equal.
struct ProfileKey {
  std::string command;
  std::set<std::string> tags;

  auto operator<=>(const ProfileKey&) const = default;
  static ProfileKey of(const Profile& profile) {
    return ProfileKey{profile.command, profile.tags};
  }
};

struct StoreLimits {
  // Document stores commonly cap single documents at 16 MiB, which bounds a
  // profile to roughly 250,000 samples.
  static constexpr std::size_t kMaxDocumentBytes = 16ull << 20;
};

// Throws std::invalid_argument when a profile violates its own invariants
// (series ordering, payload kinds, peak monotonicity, totals mismatch).
void validate_profile(const Profile& profile);

class ProfileStore {
 public:
  virtual ~ProfileStore() = default;

  // Durable save; repeated saves of equal-key profiles accumulate. Returns a
  // stored-id usable in diagnostics.
  virtual std::string save(const Profile& profile) = 0;

  // Every profile matching the key, ordered by created_at (save order breaks
  // ties). An unknown key yields an empty list, not an error.
  virtual std::vector<Profile> load(const ProfileKey& key) = 0;

  // All stored profiles, for reporting.
  virtual std::vector<Profile> load_all() = 0;

  // aggregate_stats over the matching profiles; NotFoundError when none.
  ProfileStats stats_for(const ProfileKey& key);
};

// One JSON file per profile under a directory; file names derive from a
// content hash of (command, tags, created_at). No size limit.
class FileProfileStore : public ProfileStore {
 public:
  explicit FileProfileStore(std::filesystem::path directory);

  std::string save(const Profile& profile) override;
  std::vector<Profile> load(const ProfileKey& key) override;
  std::vector<Profile> load_all() override;

  const std::filesystem::path& directory() const { return directory_; }

 private:
  std::filesystem::path directory_;
};

// Key-document adapter in front of a database; put appends, query returns
// every document stored under the key in insertion order.
class DocumentStore {
 public:
  virtual ~DocumentStore() = default;
  virtual void put(const std::string& key, const std::string& document) = 0;
  virtual std::vector<std::string> query(const std::string& key) const = 0;
  virtual std::vector<std::string> list_keys() const = 0;
};

class InMemoryDocumentStore : public DocumentStore {
 public:
  void put(const std::string& key, const std::string& document) override;
  std::vector<std::string> query(const std::string& key) const override;
  std::vector<std::string> list_keys() const override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<std::string>> documents_;
};

// Profile store on a key-document backend. The serialized-size check runs
// before any write reaches the backend.
class DocumentProfileStore : public ProfileStore {
 public:
  explicit DocumentProfileStore(
      DocumentStore& backend,
      std::size_t max_document_bytes = StoreLimits::kMaxDocumentBytes);

  std::string save(const Profile& profile) override;
  std::vector<Profile> load(const ProfileKey& key) override;
  std::vector<Profile> load_all() override;

 private:
  DocumentStore& backend_;
  std::size_t max_document_bytes_;
};

}  // namespace synapse
