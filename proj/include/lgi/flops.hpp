#pragma once

#include <cstdint>

// Op-level FLOP instrumentation. Ops report the arithmetic they actually execute
// through record(); a Scope captures the running total on the current thread.
// Used to cross-check the closed-form accounting in bench.
namespace lgi::flops {

void record(std::int64_t count);
std::int64_t total();

class Scope {
public:
    Scope();
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

    std::int64_t count() const;

private:
    std::int64_t start_;
    bool was_enabled_;
};

} // namespace lgi::flops
