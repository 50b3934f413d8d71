// SPDX-License-Identifier: Apache-2.0
#include "davam/common.hpp"

#include <cstdio>

namespace davam {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace davam
