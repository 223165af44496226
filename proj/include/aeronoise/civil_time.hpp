#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace aeronoise {

// Naive local civil time: seconds since 1970-01-01T00:00:00 with no zone.
// Arithmetic is plain seconds; the source country observes no DST.
struct CivilTime {
  std::int64_t seconds = 0;

  static constexpr std::int64_t kHour = 3600;
  static constexpr std::int64_t kDay = 86400;

  friend constexpr auto operator<=>(CivilTime, CivilTime) = default;

  constexpr CivilTime hour_floor() const { return {floor_div(seconds, kHour) * kHour}; }
  constexpr bool on_hour() const { return floor_div(seconds, kHour) * kHour == seconds; }
  constexpr CivilTime plus_hours(std::int64_t h) const { return {seconds + h * kHour}; }
  constexpr std::int64_t hour_index() const { return floor_div(seconds, kHour); }
  constexpr int hour_of_day() const {
    return static_cast<int>(floor_div(seconds - floor_div(seconds, kDay) * kDay, kHour));
  }
  // 0 = Monday ... 6 = Sunday. 1970-01-01 was a Thursday.
  constexpr int day_of_week() const {
    const std::int64_t days = floor_div(seconds, kDay);
    return static_cast<int>(((days + 3) % 7 + 7) % 7);
  }

  static constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    const std::int64_t q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
  }
};

namespace detail {

// Howard Hinnant's days_from_civil / civil_from_days.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Ymd {
  std::int64_t y;
  unsigned m, d;
};

constexpr Ymd civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

constexpr bool leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned days_in_month(std::int64_t y, unsigned m) {
  constexpr unsigned table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : table[m - 1];
}

inline bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, unsigned& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return ec == std::errc{} && p == s.data() + pos + len;
}

inline void put2(char* p, unsigned v) {
  p[0] = static_cast<char>('0' + v / 10);
  p[1] = static_cast<char>('0' + v % 10);
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM:SS` (seconds optional). Returns nullopt on any
/// deviation from the canonical layout or an impossible calendar date.
inline std::optional<CivilTime> parse_civil_time(std::string_view s) {
  unsigned y, mo, d, h, mi, se = 0;
  if (s.size() != 16 && s.size() != 19) return std::nullopt;
  if (!detail::parse_fixed(s, 0, 4, y) || s[4] != '-' || !detail::parse_fixed(s, 5, 2, mo) ||
      s[7] != '-' || !detail::parse_fixed(s, 8, 2, d) || s[10] != 'T' ||
      !detail::parse_fixed(s, 11, 2, h) || s[13] != ':' || !detail::parse_fixed(s, 14, 2, mi))
    return std::nullopt;
  if (s.size() == 19 && (s[16] != ':' || !detail::parse_fixed(s, 17, 2, se))) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > detail::days_in_month(y, mo) || h > 23 || mi > 59 ||
      se > 59)
    return std::nullopt;
  const std::int64_t days = detail::days_from_civil(y, mo, d);
  return CivilTime{days * CivilTime::kDay + h * 3600 + mi * 60 + se};
}

/// Writes the canonical 19-character form into `buf`.
inline void format_civil_time(CivilTime t, char* buf) {
  const std::int64_t days = CivilTime::floor_div(t.seconds, CivilTime::kDay);
  const std::int64_t sod = t.seconds - days * CivilTime::kDay;
  const auto ymd = detail::civil_from_days(days);
  const auto y = static_cast<unsigned>(ymd.y);
  buf[0] = static_cast<char>('0' + (y / 1000) % 10);
  buf[1] = static_cast<char>('0' + (y / 100) % 10);
  detail::put2(buf + 2, y % 100);
  buf[4] = '-';
  detail::put2(buf + 5, ymd.m);
  buf[7] = '-';
  detail::put2(buf + 8, ymd.d);
  buf[10] = 'T';
  detail::put2(buf + 11, static_cast<unsigned>(sod / 3600));
  buf[13] = ':';
  detail::put2(buf + 14, static_cast<unsigned>(sod / 60 % 60));
  buf[16] = ':';
  detail::put2(buf + 17, static_cast<unsigned>(sod % 60));
}

inline std::string to_string(CivilTime t) {
  std::string s(19, '\0');
  format_civil_time(t, s.data());
  return s;
}

/// Closed-open study window [start, end).
struct Window {
  CivilTime start;
  CivilTime end;

  bool contains(CivilTime t) const { return start <= t && t < end; }
  std::int64_t hours() const { return (end.seconds - start.seconds) / CivilTime::kHour; }
};

}  // namespace aeronoise
