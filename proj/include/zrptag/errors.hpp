#pragma once

#include <stdexcept>
#include <string>

namespace zrptag {

/// Raised when a computation cannot meet its numerical contract (truncation
/// not certified, rank defect, instability). Precondition violations use
/// std::invalid_argument instead.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace zrptag
