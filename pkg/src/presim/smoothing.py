"""Penalized cubic regression spline with effective-degrees-of-freedom control.

Fits y(t) on an equispaced index grid by minimizing

    ||y - B c||^2 + lam * c' P c,

where B is a cubic B-spline design matrix on thinned knots and P the Gram
matrix of second derivatives. The penalty lam is chosen by bisection so
the trace of the smoother matrix equals a requested df (within 0.1).
Knots are placed at every k-th grid point with k small enough to leave at
least 4*df knots, so the basis never limits the requested flexibility.
"""

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError

DEGREE = 3


def _design_and_penalty(n: int, n_knots: int):
    x = np.arange(n, dtype=float)
    interior = np.linspace(0, n - 1, n_knots)
    t = np.concatenate(
        [np.full(DEGREE, interior[0]), interior, np.full(DEGREE, interior[-1])]
    )
    B = BSpline.design_matrix(x, t, DEGREE).toarray()
    nb = B.shape[1]

    # Gram matrix of second derivatives; exact via 3-point Gauss per span
    # (integrand is piecewise quadratic).
    P = np.zeros((nb, nb))
    gauss_x, gauss_w = np.polynomial.legendre.leggauss(3)
    spans = np.unique(t)
    d2 = []
    for i in range(nb):
        c = np.zeros(nb)
        c[i] = 1.0
        d2.append(BSpline(t, c, DEGREE).derivative(2))
    for a, b in zip(spans[:-1], spans[1:]):
        mid, half = (a + b) / 2.0, (b - a) / 2.0
        pts = mid + half * gauss_x
        V = np.array([f(pts) for f in d2])  # nb x 3
        P += (V * gauss_w) @ V.T * half
    return B, P


class DfSpline:
    """Equispaced penalized-spline smoother with a fixed effective df."""

    def __init__(self, n: int, df: float, df_tol: float = 0.1):
        if not (2.0 < df < n):
            raise ConfigurationError(f"df must lie in (2, n); got {df} with n={n}")
        self.n = n
        self.df = float(df)
        n_knots = min(n, max(int(np.ceil(4 * df)), 10))
        self.B, self.P = _design_and_penalty(n, n_knots)
        self.BtB = self.B.T @ self.B
        self._lam = self._solve_lambda(df_tol)
        self._cho = cho_factor(self.BtB + self._lam * self.P)

    def _trace(self, lam: float) -> float:
        cho = cho_factor(self.BtB + lam * self.P)
        return float(np.trace(cho_solve(cho, self.BtB)))

    def _solve_lambda(self, tol: float) -> float:
        lo, hi = 1e-12, 1e12
        # trace decreases in lam; widen until bracketed
        while self._trace(lo) < self.df and lo > 1e-300:
            lo /= 1e3
        while self._trace(hi) > self.df and hi < 1e300:
            hi *= 1e3
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            tr = self._trace(mid)
            if abs(tr - self.df) <= tol / 2:
                return mid
            if tr > self.df:
                lo = mid
            else:
                hi = mid
        raise ConfigurationError("penalty bisection failed to reach requested df")

    @property
    def effective_df(self) -> float:
        return self._trace(self._lam)

    def smooth(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise ConfigurationError(f"expected series of length {self.n}")
        c = cho_solve(self._cho, self.B.T @ y)
        return self.B @ c
