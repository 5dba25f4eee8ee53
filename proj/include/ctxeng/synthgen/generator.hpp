#pragma once

// Synthetic cohorts, context tables and event logs with planted
// habit-driven, context-contingent structure.
//
// Per user-hour the log propensity towards active use is
//   a = trait + habit_t + mood_t + sum_j coefficient_j * cue_j
// where habit (slow) and mood (fast) follow AR(1) processes across clock
// hours and the cues are the
// hour's cell-session fraction, max location-category scores, rain, temperature
// and an evening bump. Each count feature k is Poisson with rate
//   base_rate_k * diurnal_intensity * exp(sign_k * a / 2)
// with sign +1 for active, -1 for passive and 0 for neutral event types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/synthgen/types.hpp"

namespace ctxeng::synthgen {

struct SynthConfig {
  int n_users = 2000;
  int span_days = 30;
  int n_zips = 200;
  std::uint64_t seed = 42;
  long long start_unix = kDefaultStartUnix;

  double mobile_coef_mean = 1.2;
  double mobile_coef_sd = 0.2;
  std::array<double, kNumLocCategories> location_coef_mean = {
      0.8,   // event
      0.3,   // travel
      0.2,   // education
      1.0,   // nightlife
      -0.6,  // residence
      0.6,   // food_beverage
      0.0,   // shops_services
      0.6,   // arts_entertainment
      0.4,   // outdoors_recreation
      0.0,   // other
  };
  double location_coef_sd = 0.1;
  double rain_coef = -0.6;
  double temperature_coef = 0.4;
  double evening_coef = 1.0;

  double trait_sd = 0.1;
  double mood_ar = 0.8;
  double mood_sd = 0.4;  // stationary standard deviation
  double habit_ar = 0.97;
  double habit_sd = 0.6;
  double base_rate_sd = 0.1;  // per-type lognormal spread of base rates
  double rate_scale = 1.0;
  double location_share_prob = 0.75;
  double location_missing_prob = 0.15;

  double missingness_rate = 0.0;     // fraction of deleted weather cells
  double heavy_tail_fraction = 0.0;  // fraction of session hours with Pareto-inflated counts
  double pareto_alpha = 1.5;

  std::uint64_t rng_stream_offset = 0;
};

namespace detail {

inline constexpr std::uint64_t kStreamCohort = 1;
inline constexpr std::uint64_t kStreamTables = 2;
inline constexpr std::uint64_t kStreamSimulate = 3;

// Mean expected hourly counts at unit intensity.
inline constexpr std::array<double, kNumCounts> kBaseRateMeans = {
    1.5, 1.8, 0.6, 3.0, 2.5, 1.2, 1.2, 1.2, 1.6, 1.6, 0.4, 0.6, 0.3, 0.3,
    0.4, 2.0, 2.5, 0.8, 0.8, 0.8, 0.4, 0.4, 2.0, 2.5, 0.5, 0.3, 0.8, 0.4,
};

// Direction of the propensity effect per count feature.
inline constexpr std::array<double, kNumCounts> kActiveSign = {
    0, 0, 0, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1, 1,
    1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0.5, 0.5, 0.5, 0.5,
};

inline double normal(Rng& rng, double mean, double sd) {
  // Box-Muller on the fixed uniform mapping keeps streams library independent.
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline int poisson(Rng& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda < 30.0) {
    const double limit = std::exp(-lambda);
    double p = uniform01(rng);
    int k = 0;
    while (p > limit) {
      p *= uniform01(rng);
      ++k;
    }
    return k;
  }
  const double x = normal(rng, lambda, std::sqrt(lambda));
  return std::max(0, static_cast<int>(std::lround(x)));
}

inline std::size_t pick(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

inline double evening_cue(int hour_of_day) {
  return 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * (hour_of_day - 21) / 24.0));
}

inline std::string zip_code(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", 10001 + 37 * i);
  return buf;
}

inline std::string user_code(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "u%06d", i);
  return buf;
}

inline int hour_of_day(long long hour_index) { return static_cast<int>(((hour_index % 24) + 24) % 24); }

// 1 = Monday ... 7 = Sunday; the unix epoch fell on a Thursday.
inline int weekday_num(long long hour_index) {
  const long long day = hour_index >= 0 ? hour_index / 24 : (hour_index - 23) / 24;
  return static_cast<int>(((day + 3) % 7 + 7) % 7) + 1;
}

}  // namespace detail

inline UserProfile make_profile(int index, const SynthConfig& cfg, Rng& rng) {
  using namespace detail;
  UserProfile p;
  p.user_id = user_code(index);
  for (std::size_t k = 0; k < kNumCounts; ++k)
    p.base_rates[k] = cfg.rate_scale * kBaseRateMeans[k] * std::exp(normal(rng, 0.0, cfg.base_rate_sd));

  auto& c = p.context_coefficients;
  c.mobile = normal(rng, cfg.mobile_coef_mean, cfg.mobile_coef_sd);
  for (std::size_t j = 0; j < kNumLocCategories; ++j)
    c.location[j] = normal(rng, cfg.location_coef_mean[j], cfg.location_coef_sd);
  c.rain = cfg.rain_coef;
  c.temperature = cfg.temperature_coef;
  c.evening = cfg.evening_coef;

  // Two activity bumps (midday and evening) over a floor.
  const double midday = 12.0 + normal(rng, 0.0, 1.5);
  const double evening = 20.0 + normal(rng, 0.0, 1.5);
  const double evening_weight = 0.5 + 0.4 * uniform01(rng);
  double total = 0.0;
  for (int h = 0; h < 24; ++h) {
    auto bump = [h](double centre, double width) {
      double d = std::fabs(h - centre);
      d = std::min(d, 24.0 - d);
      return std::exp(-0.5 * d * d / (width * width));
    };
    const double night = (h >= 2 && h <= 6) ? 0.05 : 1.0;
    const double w = night * (0.05 + (1.0 - evening_weight) * bump(midday, 3.0) +
                              evening_weight * bump(evening, 2.5));
    p.diurnal_phase[static_cast<std::size_t>(h)] = w;
    total += w;
  }
  for (auto& w : p.diurnal_phase) w /= total;

  const int n_zips = std::max(1, cfg.n_zips);
  p.home_zip = zip_code(static_cast<int>(pick(rng, static_cast<std::size_t>(n_zips))));
  p.work_zip = zip_code(static_cast<int>(pick(rng, static_cast<std::size_t>(n_zips))));
  p.trait = normal(rng, 0.0, cfg.trait_sd);
  p.session_hours_per_day = 4.0 + 4.0 * uniform01(rng);
  p.shares_location = uniform01(rng) < cfg.location_share_prob;
  p.p_cell_home = 0.05 + 0.1 * uniform01(rng);
  p.p_cell_work = 0.2 + 0.2 * uniform01(rng);
  p.p_cell_out = 0.75 + 0.2 * uniform01(rng);
  static constexpr std::array<std::size_t, 3> work_places = {loc::education, loc::shops_services,
                                                             loc::other};
  p.work_category = work_places[pick(rng, work_places.size())];
  return p;
}

/// Reproducible cohort; user i depends only on (seed, i).
inline std::vector<UserProfile> generate_cohort(int n_users, std::uint64_t seed,
                                                const SynthConfig& cfg = {}) {
  if (n_users < 1) throw InvalidArgument("generate_cohort: n_users must be >= 1");
  std::vector<UserProfile> cohort;
  cohort.reserve(static_cast<std::size_t>(n_users));
  for (int i = 0; i < n_users; ++i) {
    Rng rng = make_rng(seed, detail::kStreamCohort + cfg.rng_stream_offset,
                       static_cast<std::uint64_t>(i));
    cohort.push_back(make_profile(i, cfg, rng));
  }
  return cohort;
}

inline ContextTables generate_context_tables(int n_zips, int n_hours, std::uint64_t seed,
                                             const SynthConfig& cfg = {}) {
  using namespace detail;
  if (n_zips < 1 || n_hours < 1)
    throw InvalidArgument("generate_context_tables: n_zips and n_hours must be >= 1");
  ContextTables t;
  t.start_hour = cfg.start_unix / 3600;
  t.n_hours = static_cast<std::size_t>(n_hours);
  t.zip_universe.reserve(static_cast<std::size_t>(n_zips));
  for (int z = 0; z < n_zips; ++z) t.zip_universe.push_back(zip_code(z));

  // Label chain: mostly clear/clouds, every label reachable.
  static constexpr std::array<double, kNumWeatherLabels> label_prior = {
      0.36, 0.05, 0.12, 0.05, 0.03, 0.02, 0.25, 0.04, 0.05, 0.03};

  for (int z = 0; z < n_zips; ++z) {
    Rng rng = make_rng(seed, kStreamTables + cfg.rng_stream_offset, static_cast<std::uint64_t>(z));
    CensusRow census{};
    census[0] = 1.5 + 2.5 * uniform01(rng);  // people_per_unit
    census[1] = 45.0 + 10.0 * uniform01(rng);
    // Race shares: positive weights normalized to at most 100 %.
    std::array<double, 6> race{};
    double rs = 0.0;
    for (auto& r : race) {
      r = -std::log(std::max(1e-12, uniform01(rng)));
      rs += r;
    }
    for (std::size_t i = 0; i < race.size(); ++i) census[2 + i] = 100.0 * race[i] / rs;
    double age_left = 75.0;
    for (std::size_t i = 8; i <= 14; ++i) {
      const double share = age_left * (0.1 + 0.15 * uniform01(rng));
      census[i] = share;
      age_left -= share;
    }
    census[15] = 1.8 + 2.0 * uniform01(rng);
    census[16] = 25000.0 + 125000.0 * uniform01(rng);
    census[17] = 30.0 + 35.0 * uniform01(rng);
    census[18] = std::min(100.0 - census[17], 20.0 + 30.0 * uniform01(rng));
    t.census.push_back(census);

    const double climate = normal(rng, 0.0, 5.0);
    const double base_pressure = 1013.0 + normal(rng, 0.0, 4.0);
    std::vector<std::optional<WeatherRow>> column(t.n_hours);
    std::size_t label = pick(rng, kNumWeatherLabels);
    double anomaly = 0.0;
    for (int h = 0; h < n_hours; ++h) {
      if (uniform01(rng) < 0.15) {
        // Resample from the prior.
        double u = uniform01(rng), acc = 0.0;
        for (std::size_t l = 0; l < kNumWeatherLabels; ++l) {
          acc += label_prior[l];
          if (u < acc || l + 1 == kNumWeatherLabels) {
            label = l;
            break;
          }
        }
      }
      anomaly = 0.95 * anomaly + normal(rng, 0.0, 0.6);
      const int hod = hour_of_day(t.start_hour + h);
      WeatherRow row;
      auto& v = row.values;
      v[weather::temp] = 293.0 + climate + anomaly +
                         6.0 * std::sin(2.0 * std::numbers::pi * (hod - 9) / 24.0) -
                         (label == 5 ? 15.0 : 0.0);
      v[weather::feels_like] = v[weather::temp] + normal(rng, 0.0, 1.5);
      v[weather::pressure] = base_pressure + normal(rng, 0.0, 2.0);
      const bool wet = label == 2 || label == 3 || label == 7 || label == 8;
      v[weather::humidity] = std::clamp(55.0 + (wet ? 30.0 : 0.0) + normal(rng, 0.0, 12.0), 0.0, 100.0);
      v[weather::temp_min] = v[weather::temp] - 3.0 * uniform01(rng);
      v[weather::temp_max] = v[weather::temp] + 3.0 * uniform01(rng);
      v[weather::wind_speed] = -3.0 * std::log(std::max(1e-12, uniform01(rng)));
      v[weather::wind_deg] = 360.0 * uniform01(rng);
      v[weather::clouds] = std::clamp((label == 0 ? 10.0 : 70.0) + normal(rng, 0.0, 15.0), 0.0, 100.0);
      row.label = label;
      if (cfg.missingness_rate > 0.0 && uniform01(rng) < cfg.missingness_rate) continue;
      column[static_cast<std::size_t>(h)] = row;
    }
    t.weather.push_back(std::move(column));
  }
  return t;
}

namespace detail {

enum class Place { home, work, out };

struct SessionDraft {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::uint32_t zip = 0;
  Connectivity conn = Connectivity::wifi;
  std::int32_t loc = -1;
};

// All records of one user, generated from the user's own substream.
inline void simulate_user(std::uint32_t user_index, const UserProfile& user,
                          const ContextTables& tables, int span_days, const SynthConfig& cfg,
                          Rng& rng, EventLog& out) {
  double total_rate = 0.0;
  for (double r : user.base_rates) total_rate += r;
  if (total_rate <= 0.0) return;  // never opens the app

  const auto home = tables.zip_index(user.home_zip);
  const auto work = tables.zip_index(user.work_zip);
  if (!home || !work)
    throw InvalidArgument("simulate: user " + user.user_id + " references a zip outside the tables");

  std::array<std::uint32_t, 3> haunts{};
  for (auto& h : haunts) h = static_cast<std::uint32_t>(pick(rng, tables.zip_universe.size()));
  static constexpr std::array<std::size_t, 8> out_categories = {
      loc::event, loc::travel, loc::nightlife, loc::food_beverage,
      loc::shops_services, loc::arts_entertainment, loc::outdoors_recreation, loc::other};

  const double innovation_sd = cfg.mood_sd * std::sqrt(std::max(0.0, 1.0 - cfg.mood_ar * cfg.mood_ar));
  double mood = normal(rng, 0.0, cfg.mood_sd);
  const double habit_innovation_sd =
      cfg.habit_sd * std::sqrt(std::max(0.0, 1.0 - cfg.habit_ar * cfg.habit_ar));
  double habit = normal(rng, 0.0, cfg.habit_sd);
  Place place = Place::home;
  std::size_t out_category = loc::food_beverage;
  std::uint32_t out_zip = haunts[0];
  const auto& coef = user.context_coefficients;

  const long long start_hour = cfg.start_unix / 3600;
  const long long n_hours = static_cast<long long>(span_days) * 24;
  std::vector<SessionDraft> sessions;
  for (long long hi = 0; hi < n_hours; ++hi) {
    const long long hour = start_hour + hi;
    const int hod = hour_of_day(hour);
    const bool weekend = weekday_num(hour) >= 6;
    mood = cfg.mood_ar * mood + normal(rng, 0.0, innovation_sd);
    habit = cfg.habit_ar * habit + normal(rng, 0.0, habit_innovation_sd);

    // Where the user is this hour; states persist with probability 0.6.
    double p_out = 0.0, p_work = 0.0;
    if (hod >= 8 && hod <= 17) {
      p_work = weekend ? 0.0 : 0.75;
      p_out = weekend ? 0.5 : 0.15;
    } else if (hod >= 18 && hod <= 23) {
      p_out = weekend ? 0.55 : 0.4;
    } else if (hod <= 1) {
      p_out = weekend ? 0.35 : 0.1;
    }
    const bool keep = uniform01(rng) < 0.6 &&
                      !(place == Place::work && p_work == 0.0) && !(place == Place::out && p_out == 0.0);
    if (!keep) {
      const double u = uniform01(rng);
      const Place next = u < p_work ? Place::work : (u < p_work + p_out ? Place::out : Place::home);
      if (next == Place::out && place != Place::out) {
        out_category = out_categories[pick(rng, out_categories.size())];
        out_zip = haunts[pick(rng, haunts.size())];
      }
      place = next;
    }

    const double p_session =
        std::min(0.95, user.session_hours_per_day * user.diurnal_phase[static_cast<std::size_t>(hod)]);
    if (uniform01(rng) >= p_session) continue;

    const double intensity = std::clamp(24.0 * user.diurnal_phase[static_cast<std::size_t>(hod)], 0.5, 2.0);
    const int n_sessions = 1 + poisson(rng, user.base_rates[count::raw_session] * intensity);

    std::uint32_t zip = place == Place::home ? static_cast<std::uint32_t>(*home)
                        : place == Place::work ? static_cast<std::uint32_t>(*work)
                                               : out_zip;
    std::size_t category = place == Place::home ? loc::residence
                           : place == Place::work ? user.work_category
                                                  : out_category;
    const double p_cell = place == Place::home ? user.p_cell_home
                          : place == Place::work ? user.p_cell_work
                                                 : user.p_cell_out;
    // Occasionally part of the hour is spent in a second zip.
    const bool moves = uniform01(rng) < 0.1;
    const std::uint32_t second_zip = static_cast<std::uint32_t>(pick(rng, tables.zip_universe.size()));

    sessions.clear();
    const std::int64_t hour_start = hour * 3600;
    const std::int64_t slot = 3600 / n_sessions;
    int n_cell = 0;
    std::array<double, kNumLocation> loc_max{};
    bool any_loc = false;
    for (int s = 0; s < n_sessions; ++s) {
      SessionDraft d;
      const std::int64_t slot_start = hour_start + s * slot;
      const std::int64_t len = std::max<std::int64_t>(
          10, std::min<std::int64_t>(slot - 1, 30 + static_cast<std::int64_t>(uniform01(rng) * 600.0)));
      const std::int64_t room = std::max<std::int64_t>(0, slot - 1 - len);
      d.start = slot_start + static_cast<std::int64_t>(uniform01(rng) * static_cast<double>(room));
      d.end = d.start + len;
      d.zip = (moves && s * 2 >= n_sessions) ? second_zip : zip;
      d.conn = uniform01(rng) < p_cell ? Connectivity::cell : Connectivity::wifi;
      if (d.conn == Connectivity::cell) ++n_cell;
      if (user.shares_location && uniform01(rng) >= cfg.location_missing_prob) {
        std::array<float, kNumLocation> probs{};
        const double main = 0.5 + 0.45 * uniform01(rng);
        double left = 1.0 - main;
        for (std::size_t c = 0; c < kNumLocCategories; ++c) {
          if (c == category) continue;
          const double share = left * 0.3 * uniform01(rng);
          probs[c] = static_cast<float>(share);
          left -= share;
        }
        probs[category] = static_cast<float>(main);
        probs[loc::missing] = static_cast<float>(0.05 * uniform01(rng));
        for (std::size_t c = 0; c < kNumLocation; ++c)
          loc_max[c] = std::max(loc_max[c], static_cast<double>(probs[c]));
        any_loc = true;
        d.loc = static_cast<std::int32_t>(out.loc_probs.size());
        out.loc_probs.push_back(probs);
      }
      sessions.push_back(d);
    }

    // Hour-level cues exactly as the pipeline will see them.
    const double conn_frac = static_cast<double>(n_cell) / n_sessions;
    double a = user.trait + habit + mood + coef.mobile * conn_frac + coef.evening * evening_cue(hod);
    if (any_loc)
      for (std::size_t c = 0; c < kNumLocCategories; ++c) a += coef.location[c] * loc_max[c];
    const auto& w = tables.weather_at(zip, hour);
    if (w) {
      if (w->label == 2 || w->label == 8) a += coef.rain;
      a += coef.temperature * (w->values[weather::temp] - 293.0) / 10.0;
    }

    double inflate = 1.0;
    if (cfg.heavy_tail_fraction > 0.0 && uniform01(rng) < cfg.heavy_tail_fraction)
      inflate = std::pow(std::max(1e-12, 1.0 - uniform01(rng)), -1.0 / cfg.pareto_alpha);

    for (const auto& d : sessions) {
      out.records.push_back({user_index, d.start, EventType{count::raw_session}, d.zip, d.conn, d.loc});
      out.records.push_back({user_index, d.end, kSessionEnd, d.zip, d.conn, -1});
    }
    for (std::size_t k = 1; k < kNumCounts; ++k) {
      const double lambda =
          inflate * user.base_rates[k] * intensity * std::exp(kActiveSign[k] * a / 2.0);
      const int n = poisson(rng, lambda);
      for (int e = 0; e < n; ++e) {
        const auto& d = sessions[pick(rng, sessions.size())];
        const std::int64_t span = std::max<std::int64_t>(1, d.end - d.start);
        const std::int64_t ts = d.start + static_cast<std::int64_t>(uniform01(rng) * static_cast<double>(span));
        out.records.push_back({user_index, ts, EventType{static_cast<unsigned char>(k)}, d.zip, d.conn, -1});
      }
    }
  }
}

}  // namespace detail

/// Simulates the event log. Each user draws from its own substream, so the
/// output is the same however users are scheduled.
inline EventLog simulate(const std::vector<UserProfile>& cohort, const ContextTables& tables,
                         int span_days, std::uint64_t seed, const SynthConfig& cfg_in = {}) {
  if (span_days < 1) throw InvalidArgument("simulate: span_days must be >= 1");
  SynthConfig cfg = cfg_in;
  cfg.start_unix = tables.start_hour * 3600;
  const long long need = static_cast<long long>(span_days) * 24;
  if (static_cast<long long>(tables.n_hours) < need) {
    const std::string zip = tables.zip_universe.empty() ? std::string("<none>") : tables.zip_universe.front();
    throw InvariantError("simulate: context tables do not cover (zip " + zip + ", hour " +
                         std::to_string(tables.start_hour + static_cast<long long>(tables.n_hours)) + ")");
  }
  for (std::size_t z = 0; z < tables.zip_universe.size(); ++z)
    if (z >= tables.weather.size() || tables.weather[z].size() < static_cast<std::size_t>(need))
      throw InvariantError("simulate: context tables do not cover (zip " + tables.zip_universe[z] +
                           ", hour " + std::to_string(tables.start_hour) + ")");

  EventLog log;
  log.span_days = span_days;
  log.start_unix = cfg.start_unix;
  log.zips = tables.zip_universe;
  for (const auto& u : cohort) log.user_ids.push_back(u.user_id);

  // Users are emitted in user_id order so records are sorted by (user, time).
  std::vector<std::size_t> order(cohort.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return cohort[a].user_id < cohort[b].user_id; });

  for (std::size_t i : order) {
    Rng rng = make_rng(seed, detail::kStreamSimulate + cfg.rng_stream_offset, static_cast<std::uint64_t>(i));
    const std::size_t first = log.records.size();
    detail::simulate_user(static_cast<std::uint32_t>(i), cohort[i], tables, span_days, cfg, rng, log);
    std::stable_sort(log.records.begin() + static_cast<std::ptrdiff_t>(first), log.records.end(),
                     [](const EventRecord& a, const EventRecord& b) { return a.unix_ts < b.unix_ts; });
  }
  return log;
}

}  // namespace ctxeng::synthgen
