"""Check that droop control solves an economic dispatch problem.

Once the transient dies out, every generator and heat source sits where
its marginal cost equals a common multiplier. Here that claim is checked
without trusting the simulator: a small KKT solver computes the optimal
sharing directly from costs and demand, and the settled trajectory tail is
compared to it quantity by quantity.

Run with ``python demos/02_dispatch_certificate.py``. Takes about 20 s.
"""

from chpfreq import dispatch_problem, load_scenario, simulate, solve_dispatch, verify_power_sharing

scenario = load_scenario("paper_mode1")

for mode in (1, 2):
    traj = simulate(scenario, mode=mode)
    oracle = solve_dispatch(dispatch_problem(scenario, mode))
    report = verify_power_sharing(traj, oracle)
    print(f"mode {mode}: {'PASS' if report.passed else 'FAIL'}, largest gap {report.max_abs_diff:.2e}")
    for row in report.rows:
        print(f"   {row['quantity']:7s} simulated {row['simulated']:+.8f}   oracle {row['oracle']:+.8f}")

    # the certificate must be able to fail: hold each run against the other
    # mode's optimiser, which moves load onto the heat pump differently
    other = solve_dispatch(dispatch_problem(scenario, 3 - mode))
    wrong = verify_power_sharing(traj, other)
    print(f"   against the mode {3 - mode} optimum instead: {'PASS' if wrong.passed else 'FAIL'}"
          f" (gap {wrong.max_abs_diff:.2e})\n")

# Costs (2, 1) on the generators mean the cheaper one at bus 2 carries twice
# the share; source costs (0.5, 1) do the same on the heat side.
