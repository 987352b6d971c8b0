#include "dinoprobe/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace dinoprobe::log {

namespace {
std::atomic<Level> current{Level::warning};
std::mutex sink;
} // namespace

void set_level(Level l) { current = l; }
Level level() { return current; }

void warning(std::string_view message)
{
    if (current.load() < Level::warning)
        return;
    std::lock_guard lock(sink);
    std::clog << "warning: " << message << '\n';
}

void info(std::string_view message)
{
    if (current.load() < Level::info)
        return;
    std::lock_guard lock(sink);
    std::clog << message << '\n';
}

} // namespace dinoprobe::log
