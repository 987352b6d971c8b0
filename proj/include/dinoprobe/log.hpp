#pragma once

#include <string_view>

namespace dinoprobe::log {

enum class Level { quiet = 0, warning = 1, info = 2 };

void set_level(Level level);
Level level();

void warning(std::string_view message);
void info(std::string_view message);

} // namespace dinoprobe::log
