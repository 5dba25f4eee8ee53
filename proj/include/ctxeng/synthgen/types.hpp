#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxeng/names.hpp"

namespace ctxeng::synthgen {

enum class Connectivity : unsigned char { wifi = 0, cell = 1 };

/// Multipliers of context cues on the log active-vs-passive propensity.
struct ContextCoefficients {
  double mobile = 0.0;                              // per unit cell-session fraction
  std::array<double, kNumLocCategories> location{}; // per unit max category probability
  double rain = 0.0;                                // rain or drizzle label present
  double temperature = 0.0;                         // per 10 K above 293 K
  double evening = 0.0;                             // smooth evening bump on hour of day
  double census = 0.0;                              // kept at 0: census carries no signal

  bool operator==(const ContextCoefficients&) const = default;
};

struct UserProfile {
  std::string user_id;
  // Expected hourly counts for each count feature at unit intensity and
  // neutral propensity. Entry 0 (raw_session) is the mean number of extra
  // sessions beyond the first in a session hour.
  std::array<double, kNumCounts> base_rates{};
  ContextCoefficients context_coefficients;
  std::array<double, 24> diurnal_phase{};  // sums to 1
  std::string home_zip;
  std::string work_zip;
  double trait = 0.0;             // stable active-use propensity
  double session_hours_per_day = 6.0;
  bool shares_location = true;
  double p_cell_home = 0.1;
  double p_cell_work = 0.3;
  double p_cell_out = 0.85;
  std::size_t work_category = loc::education;

  bool operator==(const UserProfile&) const = default;
};

struct WeatherRow {
  std::array<double, kNumWeatherNumeric> values{};
  std::size_t label = 0;  // index into kWeatherLabels

  bool operator==(const WeatherRow&) const = default;
};

using CensusRow = std::array<double, kNumCensus>;

/// Weather by (zip, hour) and census by zip. Hour indices are absolute
/// hours since the unix epoch, covering [start_hour, start_hour + n_hours).
struct ContextTables {
  std::vector<std::string> zip_universe;
  long long start_hour = kDefaultStartUnix / 3600;
  std::size_t n_hours = 0;
  // weather[zip_index][hour - start_hour]; nullopt marks a deleted cell.
  std::vector<std::vector<std::optional<WeatherRow>>> weather;
  std::vector<CensusRow> census;  // parallel to zip_universe

  std::optional<std::size_t> zip_index(const std::string& zip) const {
    for (std::size_t i = 0; i < zip_universe.size(); ++i)
      if (zip_universe[i] == zip) return i;
    return std::nullopt;
  }

  bool covers(std::size_t zip_idx, long long hour) const {
    return zip_idx < weather.size() && hour >= start_hour &&
           hour < start_hour + static_cast<long long>(n_hours);
  }

  const std::optional<WeatherRow>& weather_at(std::size_t zip_idx, long long hour) const {
    return weather[zip_idx][static_cast<std::size_t>(hour - start_hour)];
  }
};

struct EventRecord {
  std::uint32_t user = 0;  // index into EventLog::user_ids
  std::int64_t unix_ts = 0;
  EventType type{};
  std::uint32_t zip = 0;   // index into EventLog::zips
  Connectivity conn = Connectivity::wifi;
  std::int32_t loc = -1;   // index into EventLog::loc_probs, -1 when absent

  bool operator==(const EventRecord&) const = default;
};

/// Time-ordered in-app events. Identifiers are interned; records sorted by
/// (user_id, timestamp).
struct EventLog {
  std::vector<std::string> user_ids;
  std::vector<std::string> zips;
  std::vector<std::array<float, kNumLocation>> loc_probs;
  std::vector<EventRecord> records;
  int span_days = 0;
  long long start_unix = kDefaultStartUnix;

  bool operator==(const EventLog&) const = default;
};

}  // namespace ctxeng::synthgen
