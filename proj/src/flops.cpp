#include "lgi/flops.hpp"

namespace lgi::flops {

namespace {
thread_local std::int64_t g_total = 0;
thread_local bool g_enabled = false;
} // namespace

void record(std::int64_t count)
{
    if (g_enabled) {
        g_total += count;
    }
}

std::int64_t total() { return g_total; }

Scope::Scope() : start_(g_total), was_enabled_(g_enabled) { g_enabled = true; }

Scope::~Scope() { g_enabled = was_enabled_; }

std::int64_t Scope::count() const { return g_total - start_; }

} // namespace lgi::flops
