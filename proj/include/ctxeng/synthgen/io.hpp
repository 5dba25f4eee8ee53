#pragma once

// File formats for event logs and context tables.
//
// Event log: one record per line, tab separated:
//   user_id <TAB> unix_ts_seconds <TAB> event_type <TAB> zip <TAB> wifi|cell <TAB> loc_probs
// where loc_probs is 11 comma-separated reals or empty.
// Weather/census tables: CSV whose headers are the feature names.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/synthgen/types.hpp"

namespace ctxeng::synthgen {

namespace io_detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

inline void append_float(std::string& out, float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      break;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

template <class T>
T parse_number(std::string_view s, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw IoError(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  const std::size_t n = std::fwrite(content.data(), 1, content.size(), f);
  const bool ok = n == content.size() && std::fclose(f) == 0;
  if (!ok) throw IoError("short write to " + path);
}

template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!line.empty()) fn(line, line_no);
    start = end + 1;
  }
}

}  // namespace io_detail

inline std::string format_event_log(const EventLog& log) {
  std::string out;
  out.reserve(log.records.size() * 48);
  for (const auto& r : log.records) {
    out += log.user_ids[r.user];
    out += '\t';
    out += std::to_string(r.unix_ts);
    out += '\t';
    out += event_type_name(r.type);
    out += '\t';
    out += log.zips[r.zip];
    out += '\t';
    out += r.conn == Connectivity::cell ? "cell" : "wifi";
    out += '\t';
    if (r.loc >= 0) {
      const auto& p = log.loc_probs[static_cast<std::size_t>(r.loc)];
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) out += ',';
        io_detail::append_float(out, p[i]);
      }
    }
    out += '\n';
  }
  return out;
}

inline void write_event_log(const EventLog& log, const std::string& path) {
  io_detail::write_file(path, format_event_log(log));
}

/// Parses the line format. Record order is preserved; the sessionizer
/// enforces ordering. span_days is inferred from the timestamp range.
inline EventLog parse_event_log(std::string_view text, const std::string& source = "event log") {
  EventLog log;
  std::unordered_map<std::string, std::uint32_t> users, zips;
  auto intern = [](std::unordered_map<std::string, std::uint32_t>& table, std::vector<std::string>& names,
                   std::string_view key) {
    auto [it, inserted] = table.try_emplace(std::string(key), static_cast<std::uint32_t>(names.size()));
    if (inserted) names.emplace_back(key);
    return it->second;
  };
  long long min_ts = 0, max_ts = 0;
  io_detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const std::string where = source + ":" + std::to_string(line_no);
    const auto f = io_detail::split(line, '\t');
    if (f.size() != 6) throw IoError(where + ": expected 6 tab-separated fields");
    EventRecord r;
    r.user = intern(users, log.user_ids, f[0]);
    r.unix_ts = io_detail::parse_number<std::int64_t>(f[1], where);
    const auto type = parse_event_type(f[2]);
    if (!type) throw IoError(where + ": unknown event type '" + std::string(f[2]) + "'");
    r.type = *type;
    r.zip = intern(zips, log.zips, f[3]);
    if (f[4] == "cell") r.conn = Connectivity::cell;
    else if (f[4] == "wifi") r.conn = Connectivity::wifi;
    else throw IoError(where + ": connectivity must be wifi or cell");
    if (!f[5].empty()) {
      const auto parts = io_detail::split(f[5], ',');
      if (parts.size() != kNumLocation) throw IoError(where + ": loc_probs must have 11 values");
      std::array<float, kNumLocation> p{};
      for (std::size_t i = 0; i < kNumLocation; ++i) p[i] = io_detail::parse_number<float>(parts[i], where);
      r.loc = static_cast<std::int32_t>(log.loc_probs.size());
      log.loc_probs.push_back(p);
    }
    if (log.records.empty()) min_ts = max_ts = r.unix_ts;
    min_ts = std::min<long long>(min_ts, r.unix_ts);
    max_ts = std::max<long long>(max_ts, r.unix_ts);
    log.records.push_back(r);
  });
  if (!log.records.empty()) {
    log.start_unix = (min_ts / 86400) * 86400;
    log.span_days = static_cast<int>((max_ts - log.start_unix) / 86400 + 1);
  }
  return log;
}

inline EventLog read_event_log(const std::string& path) {
  return parse_event_log(io_detail::read_file(path), path);
}

inline std::string weather_csv_header() {
  std::string h = "zip,hour_index";
  for (auto n : kWeatherNumericNames) {
    h += ',';
    h += n;
  }
  h += ",weather_label";
  return h;
}

inline std::string census_csv_header() {
  std::string h = "zip";
  for (auto n : kCensusNames) {
    h += ',';
    h += n;
  }
  return h;
}

inline std::string format_weather_csv(const ContextTables& t) {
  std::string out = weather_csv_header() + "\n";
  for (std::size_t z = 0; z < t.zip_universe.size(); ++z) {
    for (std::size_t h = 0; h < t.n_hours; ++h) {
      const auto& cell = t.weather[z][h];
      if (!cell) continue;
      out += t.zip_universe[z];
      out += ',';
      out += std::to_string(t.start_hour + static_cast<long long>(h));
      for (double v : cell->values) {
        out += ',';
        io_detail::append_double(out, v);
      }
      out += ',';
      out += kWeatherLabels[cell->label];
      out += '\n';
    }
  }
  return out;
}

inline std::string format_census_csv(const ContextTables& t) {
  std::string out = census_csv_header() + "\n";
  for (std::size_t z = 0; z < t.zip_universe.size(); ++z) {
    out += t.zip_universe[z];
    for (double v : t.census[z]) {
      out += ',';
      io_detail::append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

inline void write_context_tables(const ContextTables& t, const std::string& weather_path,
                                 const std::string& census_path) {
  io_detail::write_file(weather_path, format_weather_csv(t));
  io_detail::write_file(census_path, format_census_csv(t));
}

/// Rebuilds tables from the two CSVs. The zip universe is the census zip list;
/// hours absent from the weather CSV become deleted cells.
inline ContextTables parse_context_tables(std::string_view weather_csv, std::string_view census_csv,
                                          const std::string& weather_name = "weather.csv",
                                          const std::string& census_name = "census.csv") {
  ContextTables t;
  std::map<std::string, std::size_t> zip_idx;
  bool header = true;
  io_detail::for_each_line(census_csv, [&](std::string_view line, std::size_t line_no) {
    const std::string where = census_name + ":" + std::to_string(line_no);
    if (header) {
      if (line != census_csv_header()) throw IoError(where + ": unexpected census header");
      header = false;
      return;
    }
    const auto f = io_detail::split(line, ',');
    if (f.size() != 1 + kNumCensus) throw IoError(where + ": expected " + std::to_string(1 + kNumCensus) + " fields");
    CensusRow row{};
    for (std::size_t i = 0; i < kNumCensus; ++i) row[i] = io_detail::parse_number<double>(f[1 + i], where);
    zip_idx.emplace(std::string(f[0]), t.zip_universe.size());
    t.zip_universe.emplace_back(f[0]);
    t.census.push_back(row);
  });
  if (header) throw IoError(census_name + ": empty census table");

  struct Cell {
    std::size_t zip;
    long long hour;
    WeatherRow row;
  };
  std::vector<Cell> cells;
  long long lo = 0, hi = -1;
  header = true;
  io_detail::for_each_line(weather_csv, [&](std::string_view line, std::size_t line_no) {
    const std::string where = weather_name + ":" + std::to_string(line_no);
    if (header) {
      if (line != weather_csv_header()) throw IoError(where + ": unexpected weather header");
      header = false;
      return;
    }
    const auto f = io_detail::split(line, ',');
    if (f.size() != 3 + kNumWeatherNumeric) throw IoError(where + ": wrong field count");
    auto it = zip_idx.find(std::string(f[0]));
    if (it == zip_idx.end()) throw IoError(where + ": zip " + std::string(f[0]) + " has no census row");
    Cell c{it->second, io_detail::parse_number<long long>(f[1], where), {}};
    for (std::size_t i = 0; i < kNumWeatherNumeric; ++i)
      c.row.values[i] = io_detail::parse_number<double>(f[2 + i], where);
    const auto label = weather_label_index(f.back());
    if (!label) throw IoError(where + ": unknown weather label '" + std::string(f.back()) + "'");
    c.row.label = *label;
    if (cells.empty() || c.hour < lo) lo = c.hour;
    if (cells.empty() || c.hour > hi) hi = c.hour;
    cells.push_back(c);
  });
  if (header) throw IoError(weather_name + ": empty weather table");
  t.start_hour = cells.empty() ? t.start_hour : lo;
  t.n_hours = cells.empty() ? 0 : static_cast<std::size_t>(hi - lo + 1);
  t.weather.assign(t.zip_universe.size(), std::vector<std::optional<WeatherRow>>(t.n_hours));
  for (const auto& c : cells) t.weather[c.zip][static_cast<std::size_t>(c.hour - lo)] = c.row;
  return t;
}

inline ContextTables read_context_tables(const std::string& weather_path, const std::string& census_path) {
  return parse_context_tables(io_detail::read_file(weather_path), io_detail::read_file(census_path),
                              weather_path, census_path);
}

}  // namespace ctxeng::synthgen
