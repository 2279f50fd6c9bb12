#pragma once

#include <stdexcept>
#include <string>

namespace snapper {

// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace snapper
