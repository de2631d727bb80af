#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include "pmdio/comm.hpp"

namespace testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pmdio-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Error code thrown by f, unwrapping group faults to their cause; ok when
// nothing is thrown.
inline pmdio::Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const pmdio::GroupFault& e) {
    return e.cause();
  } catch (const pmdio::Error& e) {
    return e.code();
  }
  return pmdio::Errc::ok;
}

}  // namespace testing
