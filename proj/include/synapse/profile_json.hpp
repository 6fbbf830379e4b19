#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

#include "synapse/model.hpp"

namespace synapse {

// Versioned profile document schema (version 1). Counters stay integers so
// round-trips are lossless and files diff cleanly.
nlohmann::json profile_to_json(const Profile& profile);

// Throws std::invalid_argument on schema violations (callers wrap into
// CorruptProfileError with the record id).
Profile profile_from_json(const nlohmann::json& doc);

nlohmann::json stats_to_json(const ProfileStats& stats);

// ISO-8601 UTC with microsecond precision, e.g. 2024-05-01T12:34:56.000123Z.
std::string iso8601_utc(std::chrono::system_clock::time_point tp);
std::chrono::system_clock::time_point parse_iso8601_utc(
    const std::string& text);

// Profile timestamps are persisted at microsecond precision; new profiles
// are created pre-truncated so save/load is the identity.
std::chrono::system_clock::time_point truncate_to_us(
    std::chrono::system_clock::time_point tp);

}  // namespace synapse
