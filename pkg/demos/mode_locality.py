"""Spurious localized modes near re-entrant corners, and how coarse levels filter them.

Run ``python demos/mode_locality.py``. A tall compressed plate carries two
thin passive-void slots next to its edges. The fine-grid analysis (ell = 1)
finds many modes whose strain energy concentrates in the slender strips; the
three-level approximation keeps the global modes and drops the local ones.
"""
import numpy as np

from mlbuckle.diagnostics import locality_scores, mac
from mlbuckle.fem import FEModel, MaterialModel
from mlbuckle.pipeline import lba, make_hierarchy
from mlbuckle.problems import notched_plate

s = notched_plate()
model = FEModel(s.level, MaterialModel(), s.passive_solid)
x = np.where(s.passive_void, 0.0, 1.0)
hier = make_hierarchy(s, 3)

runs = {}
for ell in (1, 3):
    res = lba(model, x, s.f, hier, 12, ell=ell)
    loc = locality_scores(model, res.modes.modes, x)
    runs[ell] = (res, loc)
    print(f"ell = {ell}: lam = {np.round(res.modes.blf, 3)}")
    print(f"         locality / fundamental = {np.round(loc.normalized, 1)}")
    print(f"         flagged (> {loc.factor:g}x): {[int(j) + 1 for j in loc.flagged]}\n")

(r1, l1), (r3, _) = runs[1], runs[3]
m = mac(r3.modes.modes, r1.modes.modes, r1.ops.K)
for j, r, c, t in m.pairs:
    note = "  <- localized at ell = 1" if r in l1.flagged else ""
    print(f"ell=3 mode {j + 1:2d} ~ ell=1 mode {r + 1:2d}  MAC {c:.3f} ({t}){note}")
