#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace amplify {

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& oss, T&& head, Rest&&... rest) {
  oss << std::forward<T>(head);
  format_into(oss, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Args>
std::string strcat_all(Args&&... args) {
  std::ostringstream oss;
  detail::format_into(oss, std::forward<Args>(args)...);
  return oss.str();
}

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  throw std::runtime_error(strcat_all(std::forward<Args>(args)...));
}

// Runtime contract check; throws instead of aborting so the CLI can report.
#define AMPLIFY_CHECK(cond, ...)                                      \
  do {                                                                \
    if (!(cond)) {                                                    \
      ::amplify::fail("check failed: ", #cond, ": ", ##__VA_ARGS__);  \
    }                                                                 \
  } while (0)

using i64 = std::int64_t;
using u64 = std::uint64_t;
using u8 = std::uint8_t;

}  // namespace amplify
