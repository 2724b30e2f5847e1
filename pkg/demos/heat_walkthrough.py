"""Heat kernel on the flat cylinder and the smoothing of the conformal factor.

Run: python demos/heat_walkthrough.py [out_dir]
"""

import math
import sys
from pathlib import Path

import numpy as np

from katobranch import geometry as geo
from katobranch import heat
from katobranch.svgplot import line_plot

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
out.mkdir(parents=True, exist_ok=True)

flat = geo.flat_cylinder()
ker = heat.heat_kernel(flat, (0.0, 0.0), [0.01, 0.05])
H = ker.grid_values(1)
th = ker.theta_grid()
exact = heat.flat_cylinder_kernel(0.05, ker.r[:, None], th[None, :])
print(f"flat kernel at t=0.05: relative error {np.max(np.abs(H - exact)) / exact.max():.2e}, mass {ker.mass(1):.6f}")

moment = heat.first_moment(flat, (0.0, 0.0), 0.01)
print(f"first moment at T=0.01: {moment.moment:.5f} (sqrt(pi T) = {math.sqrt(math.pi * 0.01):.5f})")

base = geo.paper_base_metric()
sm = heat.smooth_conformal_factor(base, geo.paper_factor_field(), (0.1, 0.025), L=math.log(2), lam=1.0, kappa=1.0, K=0.0)
for m in sm.members:
    print(f"eps={m.eps:g}: sup|f_eps - f| = {m.sup_deviation:.4f}, ratio to sqrt(eps) = {m.deviation_ratio:.3f}")
print("smoothing checks:", sm.checks)

r = np.linspace(-4, 4, 401)
series = [("f", r, geo.paper_conformal_factor(r))] + [(f"eps={m.eps:g}", r, m.smoothed(r)) for m in sm.members]
line_plot(series, out / "smoothing.svg", title="conformal factor and its smoothings", xlabel="r", ylabel="f")
print("wrote", out / "smoothing.svg")
