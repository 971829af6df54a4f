#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace stocksel {

using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD. Throws InputError on anything else.
Date parse_date(std::string_view text);

/// Formats as YYYY-MM-DD.
std::string format_date(const Date& d);

inline int year_of(const Date& d) { return static_cast<int>(d.year()); }
inline unsigned month_of(const Date& d) { return static_cast<unsigned>(d.month()); }

/// Next weekday strictly after d.
Date next_weekday(const Date& d);

}  // namespace stocksel
