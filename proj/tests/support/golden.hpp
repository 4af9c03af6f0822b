// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"

namespace thls::testing {

inline std::string golden_file_path(const std::string& name) {
  return std::string(THLS_SOURCE_DIR) + "/tests/golden/" + name;
}

// Compares against a frozen file; regenerate with THLS_REGEN_GOLDEN=1.
inline void check_golden(const std::string& name, const std::string& got) {
  std::string path = golden_file_path(name);
  if (std::getenv("THLS_REGEN_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << got;
    return;
  }
  std::ifstream f(path, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), "golden file missing: ", path,
                  " (set THLS_REGEN_GOLDEN=1 to create)");
  std::string want(std::istreambuf_iterator<char>(f),
                   std::istreambuf_iterator<char>{});
  CHECK_MESSAGE(got == want, "output differs from ", path);
}

}  // namespace thls::testing
