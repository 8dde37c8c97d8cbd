#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "errors.hpp"

namespace cohort {

/// Calendar date with day resolution, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

    static Date from_ymd(int y, unsigned m, unsigned d) {
        std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
        if (!ymd.ok())
            throw ParseError("invalid calendar date");
        return Date(static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
    }

    /// Strict `YYYY-MM-DD`.
    static Date parse(std::string_view s) {
        auto digits = [&](std::size_t from, std::size_t n) {
            int v = 0;
            for (std::size_t i = from; i < from + n; ++i) {
                if (s[i] < '0' || s[i] > '9')
                    throw ParseError("invalid date '" + std::string(s) + "', expected YYYY-MM-DD");
                v = v * 10 + (s[i] - '0');
            }
            return v;
        };
        if (s.size() != 10 || s[4] != '-' || s[7] != '-')
            throw ParseError("invalid date '" + std::string(s) + "', expected YYYY-MM-DD");
        int y = digits(0, 4);
        int m = digits(5, 2);
        int d = digits(8, 2);
        std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
        if (!ymd.ok())
            throw ParseError("invalid date '" + std::string(s) + "'");
        return Date(static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
    }

    std::chrono::year_month_day ymd() const {
        return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days_}}};
    }

    int year() const { return static_cast<int>(ymd().year()); }
    unsigned month() const { return static_cast<unsigned>(ymd().month()); }
    unsigned day() const { return static_cast<unsigned>(ymd().day()); }

    std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
        return buf;
    }

    constexpr std::int32_t days_since_epoch() const { return days_; }
    constexpr Date plus_days(std::int32_t n) const { return Date(days_ + n); }

    constexpr auto operator<=>(const Date&) const = default;

private:
    std::int32_t days_ = 0;
};

/// Whole years elapsed from `birth` to `at`, counted by anniversaries. A
/// 29 February birthday is reached on 1 March in non-leap years.
inline int age_in_years(Date birth, Date at) {
    int years = at.year() - birth.year();
    if (at.month() < birth.month() || (at.month() == birth.month() && at.day() < birth.day()))
        --years;
    return years;
}

/// Inclusive bounds in whole years.
struct AgeRange {
    int min_years = 0;
    int max_years = 0;

    bool contains(int age) const { return age >= min_years && age <= max_years; }
    bool operator==(const AgeRange&) const = default;
};

inline Date today_utc() {
    auto now = std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now());
    return Date(static_cast<std::int32_t>(now.time_since_epoch().count()));
}

} // namespace cohort
