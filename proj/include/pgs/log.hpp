#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace pgs {

inline std::atomic<bool>& log_enabled() {
  static std::atomic<bool> on{false};
  return on;
}

// Progress lines go to stderr so result files stay reproducible.
inline void log_info(const std::string& msg) {
  if (!log_enabled()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::clog << "[pgs] " << msg << '\n';
}

}  // namespace pgs
