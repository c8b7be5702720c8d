// Minimal tour: build an instance, run the wrapper mechanism once, inspect
// the outcome, and dump the instance to JSON.

#include <iostream>

#include "procure/harness.hpp"

int main() {
    using namespace procure;

    auto inst = uniform_additive_market(/*n=*/1 << 15, /*k=*/1 << 13, /*budget=*/1.0);
    const double opt = opt_closed_form(inst).value;

    auto profile = ConstantsProfile::desk();
    Rng rng(2024);
    auto out = posted_prices(inst, profile, rng);

    std::cout << "branch: " << to_string(out.branch) << "\n"
              << "value:  " << out.value << "  (OPT = " << opt << ")\n"
              << "spend:  " << out.payments << " of budget " << inst.budget() << "\n";

    std::cout << "instance json (first 120 chars): "
              << inst.to_json().dump().substr(0, 120) << "...\n";
    return 0;
}
