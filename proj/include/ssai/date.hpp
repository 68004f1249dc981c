#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace ssai {

/// Calendar date with ISO-8601 (`YYYY-MM-DD`) text form.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::year_month_day ymd) : days_(std::chrono::sys_days{ymd}) {}
  explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  /// Throws ParseError on anything other than a valid `YYYY-MM-DD`.
  static Date parse(std::string_view text);

  std::string iso() const;
  std::chrono::sys_days sys_days() const { return days_; }
  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  int year() const { return static_cast<int>(ymd().year()); }
  bool is_weekend() const;

  Date plus_days(int n) const { return Date{days_ + std::chrono::days{n}}; }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

/// Closed interval of dates, `first <= last`.
struct DateRange {
  Date first;
  Date last;

  bool contains(const Date& d) const { return first <= d && d <= last; }
  bool overlaps(const DateRange& other) const {
    return !(other.last < first || last < other.first);
  }
  std::string str() const { return first.iso() + ".." + last.iso(); }
  bool operator==(const DateRange&) const = default;
};

/// Weekday calendar of `count` trading days starting at or after `start`.
std::vector<Date> business_days(Date start, std::size_t count);

}  // namespace ssai
