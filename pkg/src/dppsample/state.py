"""Growing conditioned sample with incrementally maintained statistics.

The state keeps the points drawn so far together with everything the
conditional-variance formulas need: pairwise midpoints, the pairwise
cross-distance factor matrix, and the inverse of the jittered Gram matrix
maintained by rank-1 block updates with periodic dense rebuilds.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NearSingularError
from .kernels import KernelFamily, kernel_eval_1d

REBUILD_EVERY = 64
DRIFT_TOL = 1e-6
SCHUR_FLOOR = 1e-12


class DppState:
    """Sample-so-far X with sufficient statistics for conditioning.

    jitter is added to the Gram diagonal once, at push time. kernel_fn
    optionally replaces the product-kernel evaluation with an arbitrary
    covariance function (signature kernel_fn(A, B) -> Gram block for row
    sets A, B); used to validate against induced finite-rank kernels. The
    midpoint/cross-matrix statistics and the sampler's closed-form CDF
    assembly require the product kernel, so they stay tied to spec.
    """

    def __init__(self, spec, jitter=1e-10, kernel_fn=None):
        if jitter < 0:
            raise ValueError("jitter must be nonnegative")
        self.spec = spec
        self.jitter = float(jitter)
        self.kernel_fn = kernel_fn
        D = spec.dim
        self._pts = np.empty((0, D))
        self.midpoints = (
            np.empty((0, 0, D))
            if spec.family is KernelFamily.SQUARE_EXPONENTIAL
            else None
        )
        self.cross_matrix = np.empty((0, 0))
        self.gram = np.empty((0, 0))
        self.inv_gram = np.empty((0, 0))
        self._push_count = 0

    # -- basic views --------------------------------------------------

    @property
    def points(self):
        return self._pts

    def __len__(self):
        return len(self._pts)

    # -- kernel plumbing ----------------------------------------------

    def _kvec(self, x):
        """Kernel values between x and every stored point."""
        if self.kernel_fn is not None:
            return np.asarray(
                self.kernel_fn(self._pts, x.reshape(1, -1))
            ).reshape(-1)
        out = np.ones(len(self._pts))
        for d in range(self.spec.dim):
            out *= kernel_eval_1d(self.spec, d, self._pts[:, d], x[d])
        return out

    def _kself(self, x):
        if self.kernel_fn is not None:
            return float(
                np.asarray(self.kernel_fn(x.reshape(1, -1),
                                           x.reshape(1, -1))).reshape(())
            )
        return 1.0

    def _check_point(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.spec.dim,):
            raise ValueError(
                f"point has shape {x.shape}, expected ({self.spec.dim},)"
            )
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError(f"point {x} outside the unit cube")
        return x

    # -- queries -------------------------------------------------------

    def variance_at(self, x, return_raw=False):
        """Conditional variance at x (or rows of x), clamped at zero.

        return_raw=True also returns the unclamped value for diagnostics.
        """
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.spec.dim:
            raise ValueError(f"expected {self.spec.dim} columns, got {X.shape[1]}")
        if self.kernel_fn is not None:
            kxx = np.array([self._kself(row) for row in X])
        else:
            kxx = np.ones(len(X))
        if len(self._pts) == 0:
            raw = kxx
        else:
            kv = np.empty((len(X), len(self._pts)))
            for i, row in enumerate(X):
                kv[i] = self._kvec(row)
            raw = kxx - np.einsum("ia,ab,ib->i", kv, self.inv_gram, kv)
        clamped = np.maximum(raw, 0.0)
        if single:
            clamped, raw = float(clamped[0]), float(raw[0])
        if return_raw:
            return clamped, raw
        return clamped

    # -- updates -------------------------------------------------------

    def push_point(self, x):
        """Append a point, updating all statistics incrementally.

        O(n D) for the midpoint/cross rows, O(n^2) for the inverse. Raises
        NearSingularError when the Schur complement of the new point falls
        below the floor (duplicate or near-duplicate point).
        """
        x = self._check_point(x)
        n = len(self._pts)
        kv = self._kvec(x)
        kxx = self._kself(x) + self.jitter

        if n == 0:
            if kxx < SCHUR_FLOOR:
                raise NearSingularError(
                    f"point {x} has non-positive self-covariance {kxx:.3e}"
                )
            self._pts = x.reshape(1, -1)
            self.gram = np.array([[kxx]])
            self.inv_gram = np.array([[1.0 / kxx]])
            self.cross_matrix = np.ones((1, 1))
            if self.midpoints is not None:
                self.midpoints = x.reshape(1, 1, -1).copy()
            self._push_count = 1
            return self

        w = self.inv_gram @ kv
        # one residual-correction step: drift in inv_gram otherwise
        # compounds through every later update
        w += self.inv_gram @ (kv - self.gram @ w)
        s = kxx - float(kv @ w)
        # an exact duplicate still leaves s ~ 2*jitter, so the floor must
        # sit above the jitter scale to catch it
        floor = max(SCHUR_FLOOR, 4.0 * self.jitter)
        if s < floor:
            raise NearSingularError(
                f"Schur complement {s:.3e} below {floor:.0e} when "
                f"pushing point {x}; duplicate or near-duplicate of an "
                f"existing point"
            )

        inv = np.empty((n + 1, n + 1))
        inv[:n, :n] = self.inv_gram + np.outer(w, w) / s
        inv[:n, n] = -w / s
        inv[n, :n] = -w / s
        inv[n, n] = 1.0 / s
        self.inv_gram = inv

        gram = np.empty((n + 1, n + 1))
        gram[:n, :n] = self.gram
        gram[:n, n] = kv
        gram[n, :n] = kv
        gram[n, n] = kxx
        self.gram = gram

        lam = self.spec.lengthscales
        diff = self._pts - x
        if self.spec.family is KernelFamily.SQUARE_EXPONENTIAL:
            row = np.exp(-np.sum(diff**2 / (4.0 * np.square(lam)), axis=1))
        else:
            row = np.exp(-np.sum(np.abs(diff) / np.asarray(lam), axis=1))
        cross = np.empty((n + 1, n + 1))
        cross[:n, :n] = self.cross_matrix
        cross[:n, n] = row
        cross[n, :n] = row
        cross[n, n] = 1.0
        self.cross_matrix = cross

        if self.midpoints is not None:
            mids = np.empty((n + 1, n + 1, self.spec.dim))
            mids[:n, :n] = self.midpoints
            mrow = 0.5 * (self._pts + x)
            mids[:n, n] = mrow
            mids[n, :n] = mrow
            mids[n, n] = x
            self.midpoints = mids

        self._pts = np.vstack([self._pts, x])
        self._push_count += 1

        if self._push_count % REBUILD_EVERY == 0:
            self.rebuild_inverse()
        elif n >= 1:
            # Drift probe. The newest column is satisfied identically by
            # the Schur update, so probe a rotating older column.
            j = self._push_count % n
            r = self.inv_gram @ self.gram[:, j]
            r[j] -= 1.0
            if np.max(np.abs(r)) > DRIFT_TOL:
                self.rebuild_inverse()
        return self

    def rebuild_inverse(self):
        """Recompute the inverse Gram from scratch (SPD factorization)."""
        n = len(self._pts)
        if n == 0:
            raise ValueError("cannot rebuild an empty state")
        try:
            factor = cho_factor(self.gram, lower=True)
        except np.linalg.LinAlgError as e:
            raise NearSingularError(
                f"Gram matrix of {n} points is not positive definite at "
                f"jitter {self.jitter:.0e}: {e}"
            ) from e
        self.inv_gram = cho_solve(factor, np.eye(n))
        return self
