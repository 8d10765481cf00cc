#pragma once

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "lumos/error.hpp"

// Asserts that `expr` throws lumos::Error carrying `errc_`.
#define CHECK_ERRC(expr, errc_)                                  \
  do {                                                          \
    bool caught_ = false;                                       \
    try {                                                       \
      (void)(expr);                                             \
    } catch (const lumos::Error& e_) {                          \
      caught_ = true;                                           \
      CHECK_MESSAGE(e_.code() == (errc_), e_.what());            \
    }                                                           \
    CHECK_MESSAGE(caught_, "expected lumos::Error: " #errc_);    \
  } while (0)

// Fresh scratch directory under the system temp dir, removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("lumos_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};
