#include "phydeformer/log.hpp"

#include <iostream>
#include <mutex>
#include <set>

namespace phydeformer {

namespace {
std::mutex g_mutex;
std::size_t g_count = 0;
std::string g_last;
std::set<std::string> g_seen_keys;
}  // namespace

void log_warning(const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  ++g_count;
  g_last = message;
  std::cerr << "[phydeformer] warning: " << message << "\n";
}

void log_warning_once(const std::string& key, const std::string& message) {
  {
    std::lock_guard<std::mutex> lock(g_mutex);
    if (!g_seen_keys.insert(key).second) return;
  }
  log_warning(message);
}

std::size_t warning_count() {
  std::lock_guard<std::mutex> lock(g_mutex);
  return g_count;
}

std::string last_warning() {
  std::lock_guard<std::mutex> lock(g_mutex);
  return g_last;
}

}  // namespace phydeformer
