#include "ssai/date.hpp"

#include <charconv>

#include <fmt/format.h>

#include "ssai/errors.hpp"

namespace ssai {

namespace chr = std::chrono;

Date::Date(int y, unsigned m, unsigned d) {
  chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) throw ValidationError(fmt::format("invalid date {}-{}-{}", y, m, d));
  days_ = chr::sys_days{ymd};
}

Date Date::parse(std::string_view text) {
  auto bad = [&] { return ParseError("invalid ISO date '" + std::string(text) + "'", 0); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    auto first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc{} || ptr != first + len) throw bad();
    return v;
  };
  chr::year_month_day ymd{chr::year{field(0, 4)}, chr::month{static_cast<unsigned>(field(5, 2))},
                          chr::day{static_cast<unsigned>(field(8, 2))}};
  if (!ymd.ok()) throw bad();
  return Date{ymd};
}

std::string Date::iso() const {
  auto v = ymd();
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(v.year()),
                     static_cast<unsigned>(v.month()), static_cast<unsigned>(v.day()));
}

bool Date::is_weekend() const {
  chr::weekday wd{days_};
  return wd == chr::Saturday || wd == chr::Sunday;
}

std::vector<Date> business_days(Date start, std::size_t count) {
  std::vector<Date> out;
  out.reserve(count);
  for (Date d = start; out.size() < count; d = d.plus_days(1)) {
    if (!d.is_weekend()) out.push_back(d);
  }
  return out;
}

}  // namespace ssai
