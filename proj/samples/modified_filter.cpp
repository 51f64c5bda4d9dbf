// Compares the original and modified controllers on the ellipsoidal
// safe-set scenario: the original QP stalls at interior equilibria for
// p = 1, the modified one drives every start to the origin.

#include <cstdio>

#include "cbfqp/cbfqp.hpp"

int main() {
  using namespace cbfqp;
  const Scenario plant = load_scenario("example6");
  IntegratorConfig cfg;
  for (ControllerMode mode : {ControllerMode::kOriginal, ControllerMode::kModified}) {
    const auto runs = batch(plant, mode, 1.0, ring_starts(8, 5.0), cfg);
    std::printf("%s controller\n", std::string(to_string(mode)).c_str());
    for (const Trajectory& tr : runs) {
      std::printf("  (%s) -> (%s)  %s  min h=%s\n", fmt(tr.states.front()).c_str(),
                  fmt(tr.final_state()).c_str(), std::string(to_string(tr.terminal)).c_str(),
                  fmt(tr.min_h(), 4).c_str());
    }
  }
}
