#pragma once

#include <string_view>

namespace pidaudit::log {

// Line-oriented stderr logging: "[phase] message".
void set_quiet(bool quiet);
void info(std::string_view phase, std::string_view message);

}  // namespace pidaudit::log
