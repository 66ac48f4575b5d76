#include "daa/common.hpp"

#include <cstdio>

namespace daa {

std::string to_hex(uint64_t v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*llx", digits, static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace daa
