"""Two minimizing paths that share an initial arc and then separate.

Run: python demos/branching_walkthrough.py [out_dir]
"""

import math
import sys
from pathlib import Path

from katobranch import geodesics as gd
from katobranch import geometry as geo
from katobranch.paths import render_paths_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
out.mkdir(parents=True, exist_ok=True)
hat = geo.paper_hat_metric()

# The seam circle t = 0 carries curvature -2 per unit angle.
print("seam weight per unit angle:", geo.curvature_measure(hat).singular_parts)

# Walk along the seam, then leave it on the tangent half-line into the upper sheet.
trunk = gd.seam_trunk()
branch = gd.tangent_branch(split=math.pi / 2)
cert = gd.certify_branching(hat, trunk, branch, math.pi / 2)
print("tangent branch certified:", cert.certified)
print(f"  agreement {cert.agreement_defect:.2e}, endpoint gap {cert.divergence:.4f}")

# Turning off the tangent by a small angle breaks minimality.
kinked = gd.kinked_branch(math.pi / 2, 0.3)
bad = gd.certify_branching(hat, trunk, kinked, math.pi / 2)
print("kinked branch failures:", bad.failures)

render_paths_svg(hat, [(trunk, "#1f77b4"), (branch, "#d62728"), (kinked, "#2ca02c")], out / "branching.svg")
print("wrote", out / "branching.svg")
