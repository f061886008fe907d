"""Compliance minimization with buckling constraints (P1) on the two-bar frame.

Run ``python demos/two_bar_frame.py [iterations] [out_dir]``. Without the
buckling constraints the stiffest frame has slender bars that buckle at a
load factor below one; with them the optimizer trades some stiffness for
stability. The default 300 iterations take a few minutes on one core.
"""
import sys
import tempfile

import numpy as np

from mlbuckle.optimizer import Continuation, ProblemSpec, run
from mlbuckle.problems import two_bar_frame

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = sys.argv[2] if len(sys.argv) > 2 else tempfile.mkdtemp(prefix="mlbuckle_frame_")
structure = two_bar_frame(84, 36)
schedule = Continuation(p_start=3, p_step=0.5, p_every=20, p_max=6, beta_start=1, beta_every=25, beta_max=32)
spec = ProblemSpec("P1", vol_bound=0.16, blf_bound=1.0, n_constrained=6, q=12, ell=2, r_min=2.5,
                   max_iters=iters, continuation=schedule)


def progress(state, field, res):
    i = state.iteration - 1
    if i % 25 == 0:
        h = state.history
        print(f"it {i:4d}  J {h['J'][i]:.4e}  f {h['f'][i]:.4f}  lam {np.round(h['lam'][i][:3], 3)}  "
              f"m_nd {h['m_nd'][i]:.3f}  p {state.p:g}  beta {state.beta:g}", flush=True)


res = run(spec, structure, out_dir=out, callback=progress)
print(f"\nfinal lam_1..3 = {np.round(res.analysis.modes.blf[:3], 4)}; convergence history in {out}")
