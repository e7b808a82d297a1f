#pragma once
#include <iosfwd>

namespace wavaug {

struct SelftestResult {
    int passed = 0;
    int failed = 0;

    bool ok() const { return failed == 0; }
};

// Runs the library's invariant suite (transform round trips, gradient
// checks, attack contracts, norm bounds) with fixed seeds, printing one
// pass/fail line per check.
SelftestResult run_selftest(std::ostream& out);

}  // namespace wavaug
