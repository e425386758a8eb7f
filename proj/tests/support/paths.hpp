#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace seqpix::test_support {

// Dataset root: $SEQPIX_DATA_DIR when set, else the directory configured at build time.
inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("SEQPIX_DATA_DIR"); env && *env) return env;
  return SEQPIX_DEFAULT_DATA_DIR;
}

inline std::filesystem::path source_data(const std::string& name) {
  return std::filesystem::path(SEQPIX_TEST_SOURCE_DIR) / "data" / name;
}

inline std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "seqpix-tests";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace seqpix::test_support
