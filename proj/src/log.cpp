#include "pidaudit/log.hpp"

#include <iostream>
#include <mutex>

namespace pidaudit::log {
namespace {
bool g_quiet = false;
std::mutex g_mu;
}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }

void info(std::string_view phase, std::string_view message) {
  if (g_quiet) return;
  std::lock_guard lock(g_mu);
  std::clog << '[' << phase << "] " << message << '\n';
}

}  // namespace pidaudit::log
