#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace crpl {

// Raised for bad invocations / bad input files; the CLI maps it to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <class T, class... Ts>
void cat_into(std::ostringstream& os, T&& v, Ts&&... rest) {
  os << v;
  cat_into(os, std::forward<Ts>(rest)...);
}
}  // namespace detail

template <class... Ts>
std::string cat(Ts&&... parts) {
  std::ostringstream os;
  detail::cat_into(os, std::forward<Ts>(parts)...);
  return os.str();
}

template <class... Ts>
void check_arg(bool ok, Ts&&... msg) {
  if (!ok) throw std::invalid_argument(cat(std::forward<Ts>(msg)...));
}

template <class... Ts>
void check_runtime(bool ok, Ts&&... msg) {
  if (!ok) throw std::runtime_error(cat(std::forward<Ts>(msg)...));
}

template <class... Ts>
void check_usage(bool ok, Ts&&... msg) {
  if (!ok) throw UsageError(cat(std::forward<Ts>(msg)...));
}

}  // namespace crpl
