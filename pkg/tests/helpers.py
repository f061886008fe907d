"""Shared fixtures for gradient checks and short optimization runs."""
import numpy as np

from mlbuckle.fem import FEModel, MaterialModel
from mlbuckle.pipeline import LinearSolver, lba, make_hierarchy
from mlbuckle.problems import rectangle
from mlbuckle.regularization import Regularizer
from mlbuckle.sensitivity import blf_gradients, compliance_gradient


class GradientProblem:
    """12 x 6 axially loaded cantilever; maps raw design variables to (J, lam) with ``ell`` levels."""

    def __init__(self, nelx=12, nely=6, ell=1, q=4, beta=2.0, r_min=1.5, seed=0):
        self.s = rectangle(nelx, nely, clamp="left", load="axial", F=1e-2)
        self.model = FEModel(self.s.level, MaterialModel(p=3.0), self.s.passive_solid)
        self.reg = Regularizer(nelx, nely, r_min)
        self.hier = make_hierarchy(self.s, max(ell, 1))
        self.ell, self.q, self.beta = ell, q, beta
        self.x0 = np.random.default_rng(seed).uniform(0.4, 1.0, self.s.num_elements)

    def analyze(self, x_hat):
        fld = self.reg(x_hat, beta=self.beta)
        res = lba(self.model, fld.x_phys, self.s.f, self.hier, self.q, ell=self.ell, la_method="direct")
        return fld, res

    def compliance(self, x_hat):
        return self.analyze(x_hat)[1].compliance

    def blf(self, x_hat, i=0):
        return float(self.analyze(x_hat)[1].modes.blf[i])

    def gradients(self, x_hat, k=1, consistent=False):
        fld, res = self.analyze(x_hat)
        dJ = compliance_gradient(self.model, fld, self.reg.filter, res.u)
        dlam, _ = blf_gradients(self.model, fld, self.reg.filter, res.u, res.modes.modes[:, :k],
                                res.modes.blf[:k], res.ops.G, res.solver, consistent, res.ops.K)
        return dJ, dlam, res
