"""First-order convergence of lowest-order edge elements.

The exact solution is a plane wave travelling at 30 degrees. Its impedance
data is imposed on the whole boundary, so the discrete solution should
converge to it with O(h) in L2.
"""
import math

from maxwell_ddm.cli import parse_config, run_convergence

cfg = parse_config(overrides={"nx": 8, "omega": 5.0, "out_dir": "convergence_out"})
for row in run_convergence(cfg, refinements=4, theta=math.pi / 6):
    rate = "" if row["rate"] is None else f"  rate {row['rate']:.3f}"
    print(f"h = {row['h']:.5f}  L2 error = {row['l2_error']:.3e}{rate}")
