// Solves the CLF-CBF program at a few states of the disk-obstacle scenario
// and checks each answer against the active-set oracle.

#include <cstdio>

#include "cbfqp/cbfqp.hpp"

int main() {
  using namespace cbfqp;
  const Scenario s = load_scenario("example1");
  const QPWeight p(1.0);
  for (const State& x : {State{{1.0, 0.0}}, State{{0.0, 6.0}}, State{{0.5, 7.0}}}) {
    const LieData lie = lie_data(s.model, s.certs, x);
    const QPSolution cf = solve(lie, p);
    const QPSolution ref = solve_oracle(lie, p);
    std::printf("x=(%s)  u*=(%s)  delta=%s  region=%s  |u-u_oracle|=%s  kkt=%s\n",
                fmt(x).c_str(), fmt(cf.u_star).c_str(), fmt(cf.delta).c_str(),
                std::string(to_string(cf.region)).c_str(),
                fmt((cf.u_star - ref.u_star).norm(), 3).c_str(), fmt(kkt_residual(cf, p), 3).c_str());
  }
}
