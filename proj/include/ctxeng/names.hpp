#pragma once

// Feature and event vocabularies shared by the generator and the pipeline.

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace ctxeng {

inline constexpr std::size_t kNumCounts = 28;
inline constexpr std::size_t kNumEventTypes = 29;
inline constexpr std::size_t kNumWeatherNumeric = 9;
inline constexpr std::size_t kNumWeatherLabels = 10;
inline constexpr std::size_t kNumCensus = 19;
inline constexpr std::size_t kNumTemporal = 5;
inline constexpr std::size_t kNumLocation = 11;  // 10 categories + missing
inline constexpr std::size_t kNumLocCategories = 10;

// Hourly count features. Index order is the behavioral column order.
inline constexpr std::array<std::string_view, kNumCounts> kCountNames = {
    "raw_session_cnt",
    "app_open_cnt",
    "app_open_from_notify_cnt",
    "chat_view_cnt",
    "chat_send_cnt",
    "chat_create_cnt",
    "chat_snap_view_cnt",
    "direct_snap_create_cnt",
    "direct_snap_send_cnt",
    "direct_snap_view_cnt",
    "direct_snap_send_feed_cnt",
    "direct_snap_send_camera_cnt",
    "direct_snap_send_reply_cnt",
    "direct_snap_send_chat_cnt",
    "story_snap_post_cnt",
    "story_snap_view_cnt",
    "story_story_view_cnt",
    "story_snap_feed_view_cnt",
    "discover_snap_feed_view_cnt",
    "discover_snap_for_you_view_cnt",
    "discover_snap_subscription_view_cnt",
    "discover_snap_friends_view_cnt",
    "discover_snap_view_cnt",
    "spotlight_view_cnt",
    "creative_tools_open_cnt",
    "creative_tools_pick_cnt",
    "filter_lens_swipe_cnt",
    "filter_filter_swipe_cnt",
};

namespace count {
inline constexpr std::size_t raw_session = 0;
inline constexpr std::size_t app_open = 1;
inline constexpr std::size_t chat_view = 3;
inline constexpr std::size_t chat_send = 4;
inline constexpr std::size_t direct_snap_create = 7;
inline constexpr std::size_t direct_snap_send = 8;
inline constexpr std::size_t direct_snap_view = 9;
inline constexpr std::size_t story_snap_post = 14;
inline constexpr std::size_t story_story_view = 16;
inline constexpr std::size_t discover_snap_view = 22;
inline constexpr std::size_t spotlight_view = 23;
inline constexpr std::size_t creative_tools_open = 24;
inline constexpr std::size_t creative_tools_pick = 25;
inline constexpr std::size_t filter_lens_swipe = 26;
inline constexpr std::size_t filter_filter_swipe = 27;
}  // namespace count

// Event types in the raw log: one per count feature plus the session-close
// marker. A "raw_session" event opens a session, "session_time" closes it.
enum class EventType : unsigned char {};

inline constexpr EventType kSessionEnd{static_cast<unsigned char>(kNumCounts)};

inline constexpr std::string_view event_type_name(EventType t) {
  const auto i = static_cast<std::size_t>(t);
  if (i < kNumCounts) {
    std::string_view n = kCountNames[i];
    return n.substr(0, n.size() - 4);  // strip "_cnt"
  }
  return "session_time";
}

inline std::optional<EventType> parse_event_type(std::string_view name) {
  for (std::size_t i = 0; i < kNumEventTypes; ++i) {
    const EventType t{static_cast<unsigned char>(i)};
    if (event_type_name(t) == name) return t;
  }
  return std::nullopt;
}

inline constexpr std::size_t event_index(EventType t) { return static_cast<std::size_t>(t); }

inline constexpr std::array<std::string_view, kNumWeatherNumeric> kWeatherNumericNames = {
    "temp", "feels_like", "pressure", "humidity", "temp_min",
    "temp_max", "wind_speed", "wind_deg", "clouds",
};

inline constexpr std::array<std::string_view, kNumWeatherLabels> kWeatherLabels = {
    "clear", "haze", "rain", "mist", "smoke", "snow", "clouds", "fog", "drizzle", "dust",
};

namespace weather {
inline constexpr std::size_t temp = 0;
inline constexpr std::size_t feels_like = 1;
inline constexpr std::size_t pressure = 2;
inline constexpr std::size_t humidity = 3;
inline constexpr std::size_t temp_min = 4;
inline constexpr std::size_t temp_max = 5;
inline constexpr std::size_t wind_speed = 6;
inline constexpr std::size_t wind_deg = 7;
inline constexpr std::size_t clouds = 8;
}  // namespace weather

inline std::optional<std::size_t> weather_label_index(std::string_view label) {
  for (std::size_t i = 0; i < kNumWeatherLabels; ++i)
    if (kWeatherLabels[i] == label) return i;
  return std::nullopt;
}

inline constexpr std::array<std::string_view, kNumCensus> kCensusNames = {
    "people_per_unit",     "male_perc",          "race_white_perc",    "race_black_perc",
    "race_native_perc",    "race_asian_perc",    "race_hispanic_perc", "race_more_perc",
    "age_5_to_9_perc",     "age_10_to_14_perc",  "age_15_to_19_perc",  "age_20_to_24_perc",
    "age_25_to_34_perc",   "age_35_to_44_perc",  "age_45_to_54_perc",  "avg_household_size",
    "med_inc",             "marriage_married",   "marriage_never_married",
};

// Census columns that are not percentages.
inline constexpr bool census_is_percentage(std::size_t i) { return i != 0 && i != 15 && i != 16; }

inline constexpr std::array<std::string_view, kNumTemporal> kTemporalNames = {
    "time_delta", "session_hourofday", "session_weekday_num", "session_dayofmonth",
    "session_dayofyear",
};

inline constexpr std::array<std::string_view, kNumLocation> kLocationNames = {
    "loc_event_prob",           "loc_travel_prob",
    "loc_education_prob",       "loc_nightlife_prob",
    "loc_residence_prob",       "loc_food_beverage_prob",
    "loc_shops_services_prob",  "loc_arts_entertainment_prob",
    "loc_outdoors_recreation_prob", "loc_other_prob",
    "missing",
};

namespace loc {
inline constexpr std::size_t event = 0;
inline constexpr std::size_t travel = 1;
inline constexpr std::size_t education = 2;
inline constexpr std::size_t nightlife = 3;
inline constexpr std::size_t residence = 4;
inline constexpr std::size_t food_beverage = 5;
inline constexpr std::size_t shops_services = 6;
inline constexpr std::size_t arts_entertainment = 7;
inline constexpr std::size_t outdoors_recreation = 8;
inline constexpr std::size_t other = 9;
inline constexpr std::size_t missing = 10;
}  // namespace loc

// 2021-07-06T00:00:00Z, start of the observation window.
inline constexpr long long kDefaultStartUnix = 1625529600LL;

}  // namespace ctxeng
