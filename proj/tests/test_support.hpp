#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>

#include "heartfl/dataset.hpp"

namespace test_support {

// HEARTFL_DATA_DIR wins over the directory configured at build time.
inline std::optional<std::filesystem::path> find_data_dir() {
  std::vector<std::filesystem::path> candidates;
  if (const char* env = std::getenv("HEARTFL_DATA_DIR")) candidates.emplace_back(env);
#ifdef HEARTFL_TEST_DATA_DIR
  candidates.emplace_back(HEARTFL_TEST_DATA_DIR);
#endif
  for (const auto& dir : candidates) {
    bool all = true;
    for (auto c : heartfl::kAllCenters) all = all && std::filesystem::exists(dir / heartfl::center_file_name(c));
    if (all) return dir;
  }
  return std::nullopt;
}

}  // namespace test_support
