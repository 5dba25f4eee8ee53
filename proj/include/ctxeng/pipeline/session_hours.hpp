#pragma once

// Hourly aggregation of event logs and context enrichment.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/names.hpp"
#include "ctxeng/synthgen/types.hpp"

namespace ctxeng::pipeline {

inline constexpr double kTimeDeltaCapHours = 7.0 * 24.0;

struct SessionHour {
  std::string user_id;
  long long hour_index = 0;  // hours since the unix epoch
  std::array<double, kNumCounts> counts{};
  double session_time = 0.0;  // active seconds in (0, 3600]

  // Raw per-hour aggregates used by enrichment.
  std::vector<std::pair<std::string, double>> zip_seconds;  // active seconds per zip
  std::optional<std::array<double, kNumLocation>> loc_max;
  double connectivity_fraction = 0.0;  // cell / (cell + wifi) sessions

  // Context, filled by enrich_context.
  std::array<double, kNumWeatherNumeric> weather{};
  std::optional<std::size_t> weather_label;
  bool weather_missing = false;  // numeric weather imputed downstream
  std::array<double, kNumCensus> census{};
  bool census_missing = false;
  std::array<double, kNumTemporal> temporal{};
  std::array<double, kNumLocation> location{};
  bool enriched = false;
};

namespace detail {

struct HourAccumulator {
  std::array<double, kNumCounts> counts{};
  double session_seconds = 0.0;
  std::map<std::string, double> zip_seconds;
  std::map<std::string, double> zip_events;
  int cell_sessions = 0, wifi_sessions = 0;
  int cell_events = 0, wifi_events = 0;
  std::int64_t first_ts = 0, last_ts = 0;
  bool has_event = false;
  std::optional<std::array<double, kNumLocation>> loc_max;
};

}  // namespace detail

/// One SessionHour per (user, hour) with at least one event. Session seconds
/// come from raw_session/session_time pairs split across hour boundaries;
/// hours without a closed session fall back to the span of their events.
inline std::vector<SessionHour> sessionize_hourly(const synthgen::EventLog& log) {
  using synthgen::Connectivity;
  std::vector<SessionHour> out;
  const auto& recs = log.records;

  // Sortedness: users contiguous in user_id order, timestamps non-decreasing.
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const auto& a = recs[i - 1];
    const auto& b = recs[i];
    if (a.user == b.user) {
      if (b.unix_ts < a.unix_ts)
        throw InvalidArgument("sessionize_hourly: unsorted input at record " + std::to_string(i));
    } else if (!(log.user_ids[a.user] < log.user_ids[b.user])) {
      throw InvalidArgument("sessionize_hourly: unsorted input at record " + std::to_string(i));
    }
  }

  std::size_t begin = 0;
  while (begin < recs.size()) {
    std::size_t end = begin;
    while (end < recs.size() && recs[end].user == recs[begin].user) ++end;

    std::map<long long, detail::HourAccumulator> hours;
    auto hour_of = [](std::int64_t ts) { return static_cast<long long>(ts >= 0 ? ts / 3600 : (ts - 3599) / 3600); };
    std::optional<std::size_t> open;  // index of the open raw_session event

    auto close_session = [&](std::int64_t start, std::int64_t stop, const std::string& zip) {
      // Distribute [start, stop) across the hours it overlaps.
      std::int64_t t = start;
      while (t < stop) {
        const long long h = hour_of(t);
        const std::int64_t boundary = (h + 1) * 3600;
        const std::int64_t piece_end = std::min(stop, boundary);
        auto& acc = hours[h];
        const double secs = static_cast<double>(piece_end - t);
        acc.session_seconds += secs;
        acc.zip_seconds[zip] += secs;
        t = piece_end;
      }
    };

    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = recs[i];
      const long long h = hour_of(r.unix_ts);
      auto& acc = hours[h];
      if (!acc.has_event) acc.first_ts = r.unix_ts;
      acc.has_event = true;
      acc.last_ts = r.unix_ts;
      const std::string& zip = log.zips[r.zip];
      acc.zip_events[zip] += 1.0;
      (r.conn == Connectivity::cell ? acc.cell_events : acc.wifi_events)++;
      if (r.loc >= 0) {
        const auto& p = log.loc_probs[static_cast<std::size_t>(r.loc)];
        if (!acc.loc_max) acc.loc_max.emplace();
        for (std::size_t c = 0; c < kNumLocation; ++c)
          (*acc.loc_max)[c] = std::max((*acc.loc_max)[c], static_cast<double>(p[c]));
      }
      const std::size_t type = event_index(r.type);
      if (type < kNumCounts) acc.counts[type] += 1.0;
      if (type == count::raw_session) {
        (r.conn == Connectivity::cell ? acc.cell_sessions : acc.wifi_sessions)++;
        open = i;
      } else if (r.type == kSessionEnd && open) {
        const auto& s = recs[*open];
        close_session(s.unix_ts, r.unix_ts, log.zips[s.zip]);
        open.reset();
      }
    }

    for (auto& [h, acc] : hours) {
      SessionHour sh;
      sh.user_id = log.user_ids[recs[begin].user];
      sh.hour_index = h;
      sh.counts = acc.counts;
      if (acc.session_seconds > 0.0) {
        sh.session_time = std::min(3600.0, acc.session_seconds);
        sh.zip_seconds.assign(acc.zip_seconds.begin(), acc.zip_seconds.end());
      } else {
        // Fallback when no closed session overlaps the hour.
        if (!acc.has_event) continue;
        sh.session_time = std::clamp(static_cast<double>(acc.last_ts - acc.first_ts + 1), 1.0, 3600.0);
        sh.zip_seconds.assign(acc.zip_events.begin(), acc.zip_events.end());
      }
      const int cell = acc.cell_sessions + acc.wifi_sessions > 0 ? acc.cell_sessions : acc.cell_events;
      const int wifi = acc.cell_sessions + acc.wifi_sessions > 0 ? acc.wifi_sessions : acc.wifi_events;
      sh.connectivity_fraction = cell + wifi > 0 ? static_cast<double>(cell) / (cell + wifi) : 0.0;
      sh.loc_max = acc.loc_max;
      out.push_back(std::move(sh));
    }
    begin = end;
  }
  return out;
}

struct EnrichOptions {
  bool impute_missing = true;
};

struct CalendarFields {
  int hour_of_day;
  int weekday_num;  // Monday = 1
  int day_of_month;
  int day_of_year;
};

inline CalendarFields calendar_fields(long long hour_index) {
  using namespace std::chrono;
  const long long day = hour_index >= 0 ? hour_index / 24 : (hour_index - 23) / 24;
  const sys_days d{days{day}};
  const year_month_day ymd{d};
  return {static_cast<int>(hour_index - day * 24), static_cast<int>(weekday{d}.iso_encoding()),
          static_cast<int>(static_cast<unsigned>(ymd.day())),
          static_cast<int>((d - sys_days{ymd.year() / 1 / 1}).count()) + 1};
}

/// Adds weather, census, temporal and location context. ZIP-level fields are
/// means weighted by active seconds per zip; the weather label is the one of
/// the zip with the largest weight. Input must be ordered by (user, hour).
inline std::vector<SessionHour> enrich_context(std::vector<SessionHour> hours,
                                               const synthgen::ContextTables& tables,
                                               const EnrichOptions& opt = {}) {
  std::map<std::string, std::size_t> zip_idx;
  for (std::size_t i = 0; i < tables.zip_universe.size(); ++i) zip_idx.emplace(tables.zip_universe[i], i);

  const std::string* prev_user = nullptr;
  long long prev_hour = 0;
  for (auto& sh : hours) {
    auto fail = [&](const std::string& zip) {
      throw InvariantError("enrich_context: no context for (zip " + zip + ", hour " +
                           std::to_string(sh.hour_index) + ")");
    };

    std::array<double, kNumWeatherNumeric> wsum{};
    std::array<double, kNumCensus> csum{};
    double wweight = 0.0, cweight = 0.0, best_weight = -1.0;
    std::optional<std::size_t> label;
    for (const auto& [zip, secs] : sh.zip_seconds) {
      auto it = zip_idx.find(zip);
      if (it == zip_idx.end()) {
        if (!opt.impute_missing) fail(zip);
        continue;
      }
      const std::size_t z = it->second;
      for (std::size_t i = 0; i < kNumCensus; ++i) csum[i] += secs * tables.census[z][i];
      cweight += secs;
      if (!tables.covers(z, sh.hour_index) || !tables.weather_at(z, sh.hour_index)) {
        if (!opt.impute_missing) fail(zip);
        continue;
      }
      const auto& w = *tables.weather_at(z, sh.hour_index);
      for (std::size_t i = 0; i < kNumWeatherNumeric; ++i) wsum[i] += secs * w.values[i];
      wweight += secs;
      if (secs > best_weight) {
        best_weight = secs;
        label = w.label;
      }
    }
    if (wweight > 0.0) {
      for (std::size_t i = 0; i < kNumWeatherNumeric; ++i) sh.weather[i] = wsum[i] / wweight;
      sh.weather_missing = false;
    } else {
      sh.weather.fill(std::numeric_limits<double>::quiet_NaN());
      sh.weather_missing = true;
    }
    sh.weather_label = label;
    if (cweight > 0.0) {
      for (std::size_t i = 0; i < kNumCensus; ++i) sh.census[i] = csum[i] / cweight;
      sh.census_missing = false;
    } else {
      sh.census.fill(std::numeric_limits<double>::quiet_NaN());
      sh.census_missing = true;
    }

    const bool same_user = prev_user && *prev_user == sh.user_id;
    const double delta = same_user ? static_cast<double>(sh.hour_index - prev_hour) : kTimeDeltaCapHours;
    const auto cal = calendar_fields(sh.hour_index);
    sh.temporal = {std::min(delta, kTimeDeltaCapHours), static_cast<double>(cal.hour_of_day),
                   static_cast<double>(cal.weekday_num), static_cast<double>(cal.day_of_month),
                   static_cast<double>(cal.day_of_year)};
    prev_user = &sh.user_id;
    prev_hour = sh.hour_index;

    if (sh.loc_max) {
      sh.location = *sh.loc_max;
    } else {
      sh.location.fill(0.0);
      sh.location[loc::missing] = 1.0;
    }
    sh.enriched = true;
  }
  return hours;
}

}  // namespace ctxeng::pipeline
