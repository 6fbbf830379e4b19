#pragma once

#include <stdexcept>
#include <string>

namespace synapse {

// Base for all library errors that are not plain precondition violations
// (those use std::invalid_argument).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// An OS counter source (perf, /proc, ...) cannot be read at all.
class BackendUnavailableError : public Error {
 public:
  explicit BackendUnavailableError(const std::string& facility)
      : Error("backend unavailable: " + facility), facility_(facility) {}
  const std::string& facility() const { return facility_; }

 private:
  std::string facility_;
};

// Target command could not be spawned.
class CommandError : public Error {
 public:
  using Error::Error;
};

// Serialized profile exceeds the document backend's size cap.
class StoreLimitError : public Error {
 public:
  StoreLimitError(std::size_t actual_bytes, std::size_t limit_bytes)
      : Error("profile document is " + std::to_string(actual_bytes) +
              " bytes, exceeds store limit of " + std::to_string(limit_bytes)),
        actual_bytes_(actual_bytes),
        limit_bytes_(limit_bytes) {}
  std::size_t actual_bytes() const { return actual_bytes_; }
  std::size_t limit_bytes() const { return limit_bytes_; }

 private:
  std::size_t actual_bytes_;
  std::size_t limit_bytes_;
};

// A stored record exists but cannot be decoded.
class CorruptProfileError : public Error {
 public:
  CorruptProfileError(const std::string& record, const std::string& reason)
      : Error("corrupt profile record '" + record + "': " + reason),
        record_(record) {}
  const std::string& record() const { return record_; }

 private:
  std::string record_;
};

// A lookup that requires at least one match found none.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Profiles with different keys were passed to an aggregate operation.
class IncompatibleProfilesError : public Error {
 public:
  using Error::Error;
};

// Storage-layer I/O failure.
class StorageError : public Error {
 public:
  using Error::Error;
};

// A profile yields no replayable work.
class EmptyPlanError : public Error {
 public:
  using Error::Error;
};

// A resource-consumption worker failed (allocation failure, disk full, ...).
class AtomError : public Error {
 public:
  using Error::Error;
};

}  // namespace synapse
