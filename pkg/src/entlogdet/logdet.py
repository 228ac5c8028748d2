"""Matrix-free log-determinant estimators.

All three estimators normalise ``A`` by a scalar ``c`` (the Gershgorin bound
by default), work with ``B = A / c`` through matvecs only, and return
``n log c`` plus an estimate of ``Tr log B``:

* ``logdet_maxent`` fits a maximum-entropy density to the raw moments of B
  and integrates ``log`` against it;
* ``logdet_taylor`` truncates ``log B = -sum_j (I - B)^j / j``;
* ``logdet_chebyshev`` interpolates ``log`` on ``[delta, 1]``.

With the same ``(k, m, kind, seed)`` the three spend exactly ``m * k``
matvecs on the same probe vectors.  Every estimator also accepts exact
moments of B through ``moments=``, in which case no matvecs are spent and
only the approximation error remains.
"""

import time
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import maxent
from .errors import ContractError
from .probe import ProbeKind, estimate_power_traces, krylov_quadratic_forms, probe_block
from .sparse import gershgorin_upper, spectral_norm_estimate

DEFAULT_MOMENTS = 10
DEFAULT_PROBES = 30
DEFAULT_CHEBYSHEV_DELTA = 1e-4


@dataclass
class LogDetResult:
    estimate: float
    method: str
    normalization: float
    num_moments: int
    num_probes: int
    matvecs: int
    fit_residual: float = None
    converged: bool = True
    seconds: float = 0.0
    flags: tuple = ()
    density: object = field(default=None, repr=False)
    moments: np.ndarray = field(default=None, repr=False)

    @property
    def degraded(self):
        return bool(self.flags)


def normalization_constant(A, norm="gershgorin"):
    if norm == "gershgorin":
        return gershgorin_upper(A)
    if norm == "spectral":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return spectral_norm_estimate(A, max_iters=1000, tol=1e-12)
    raise ContractError(f"unknown normalisation {norm!r}")


class _Shifted:
    """The operator ``(a * A + b * I)`` applied to blocks."""

    def __init__(self, A, a, b):
        self.dim = A.dim
        self._A, self._a, self._b = A, a, b

    def matmat(self, X):
        Y = self._A.matmat(X) * self._a
        if self._b:
            Y += self._b * X
        return Y


def _check_budget(k, m):
    if k < 1:
        raise ContractError("number of moments k must be >= 1")
    if m < 1:
        raise ContractError("number of probes m must be >= 1")


def _injected(moments, k):
    mu = np.asarray(moments.moments if hasattr(moments, "moments") else moments, dtype=np.float64)
    if mu.size < k + 1:
        raise ContractError(f"need {k + 1} injected moments, got {mu.size}")
    return mu[: k + 1]


def logdet_maxent(
    A,
    k=DEFAULT_MOMENTS,
    m=DEFAULT_PROBES,
    kind=ProbeKind.RADEMACHER,
    seed=0,
    tol=1e-6,
    *,
    moments=None,
    norm="gershgorin",
    max_iters=10_000,
    quad_nodes=maxent.DEFAULT_NODES,
    init_seed=None,
    fit_method="newton",
    stratified=False,
):
    """Entropic log-determinant estimate.

    Estimates the raw moments of ``B = A / c``, fits the maximum-entropy
    density to them and returns ``n * E_p[log x] + n * log c``.  A fit that
    does not reach ``tol`` is flagged on the result rather than raised.
    """
    if k < 2:
        raise ContractError("logdet_maxent needs k >= 2")
    _check_budget(k, m)
    t0 = time.perf_counter()
    n = A.dim
    c = normalization_constant(A, norm)
    flags = []
    if moments is None:
        est = estimate_power_traces(A, k, m, kind, seed, scale=c, stratified=stratified)
        raw = est.moments
        if np.any(raw[1:] <= 0.0) or np.any(raw[1:] > 1.0):
            flags.append("moments-clamped")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mu = est.clamped()
        matvecs = est.matvecs
    else:
        mu = _injected(moments, k)
        matvecs = 0
    q = maxent.default_quadrature() if quad_nodes == maxent.DEFAULT_NODES else maxent.build_quadrature(quad_nodes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        density = maxent.fit_maxent(mu, tol=tol, max_iters=max_iters, init_seed=init_seed, quadrature=q, method=fit_method)
    if not density.converged:
        flags.append("fit-not-converged")
    if density.suspect:
        flags.append("numerically-suspect")
    estimate = n * maxent.log_geometric_mean(density, q) + n * np.log(c)
    return LogDetResult(
        estimate=float(estimate),
        method="maxent",
        normalization=c,
        num_moments=k,
        num_probes=m if moments is None else 0,
        matvecs=matvecs,
        fit_residual=density.residual,
        converged=density.converged,
        seconds=time.perf_counter() - t0,
        flags=tuple(flags),
        density=density,
        moments=mu,
    )


def logdet_taylor(A, k=DEFAULT_MOMENTS, m=DEFAULT_PROBES, kind=ProbeKind.RADEMACHER, seed=0, *, moments=None, norm="gershgorin"):
    """Truncated Mercator series: ``n log c - sum_{j<=k} Tr((I - B)^j) / j``."""
    _check_budget(k, m)
    t0 = time.perf_counter()
    n = A.dim
    c = normalization_constant(A, norm)
    if moments is None:
        Z = probe_block(kind, n, m, seed)
        forms = krylov_quadratic_forms(_Shifted(A, -1.0 / c, 1.0), Z, k)
        traces = forms[1:].mean(axis=1)
        matvecs = m * k
    else:
        mu = _injected(moments, k)
        traces = np.array(
            [n * sum(comb(j, i) * (-1) ** i * mu[i] for i in range(j + 1)) for j in range(1, k + 1)]
        )
        matvecs = 0
    series = float(np.sum(traces / np.arange(1, k + 1)))
    return LogDetResult(
        estimate=float(n * np.log(c) - series),
        method="taylor",
        normalization=c,
        num_moments=k,
        num_probes=m if moments is None else 0,
        matvecs=matvecs,
        seconds=time.perf_counter() - t0,
    )


def chebyshev_log_coefficients(k, delta):
    """Degree-k Chebyshev coefficients of ``log`` on ``[delta, 1]``.

    Interpolates at the k + 1 Chebyshev points of the first kind (the
    discrete cosine fit), then shifts the constant term so the series
    vanishes at 1.  The shift keeps ``log 1 = 0`` exact, so a spectrum
    sitting at the Gershgorin bound costs nothing.
    """
    if not 0.0 < delta < 1.0:
        raise ContractError(f"delta must lie in (0, 1), got {delta}")
    t = np.polynomial.chebyshev.chebpts1(k + 1)
    x = 0.5 * ((1.0 - delta) * t + (1.0 + delta))
    coef = np.polynomial.chebyshev.chebfit(t, np.log(x), k)
    coef[0] -= np.polynomial.chebyshev.chebval(1.0, coef)
    return coef


def logdet_chebyshev(
    A,
    k=DEFAULT_MOMENTS,
    m=DEFAULT_PROBES,
    kind=ProbeKind.RADEMACHER,
    seed=0,
    delta=DEFAULT_CHEBYSHEV_DELTA,
    *,
    moments=None,
    norm="gershgorin",
):
    """Chebyshev expansion of ``log`` on ``[delta, 1]`` applied to ``B``."""
    coef = chebyshev_log_coefficients(k, delta)
    _check_budget(k, m)
    t0 = time.perf_counter()
    n = A.dim
    c = normalization_constant(A, norm)
    if moments is None:
        # t(B) = (2B - (1 + delta) I) / (1 - delta) maps [delta, 1] to [-1, 1]
        T = _Shifted(A, 2.0 / (c * (1.0 - delta)), -(1.0 + delta) / (1.0 - delta))
        Z = probe_block(kind, n, m, seed)
        prev, cur = Z, T.matmat(Z)
        acc = coef[0] * np.einsum("ij,ij->j", Z, prev) + coef[1] * np.einsum("ij,ij->j", Z, cur)
        for j in range(2, k + 1):
            prev, cur = cur, 2.0 * T.matmat(cur) - prev
            acc += coef[j] * np.einsum("ij,ij->j", Z, cur)
        trace_log = float(acc.mean())
        matvecs = m * k
    else:
        mu = _injected(moments, k)
        power = np.polynomial.Chebyshev(coef, domain=[delta, 1.0]).convert(kind=np.polynomial.Polynomial).coef
        trace_log = float(n * (power @ mu[: power.size]))
        matvecs = 0
    return LogDetResult(
        estimate=float(n * np.log(c) + trace_log),
        method="chebyshev",
        normalization=c,
        num_moments=k,
        num_probes=m if moments is None else 0,
        matvecs=matvecs,
        seconds=time.perf_counter() - t0,
    )


METHODS = {"maxent": logdet_maxent, "taylor": logdet_taylor, "chebyshev": logdet_chebyshev}


def relative_error(result, exact):
    """``|estimate - exact| / |exact|``; undefined for ``exact == 0``."""
    estimate = result.estimate if hasattr(result, "estimate") else float(result)
    if exact == 0:
        raise ContractError("relative error is undefined for an exact value of 0; compare absolutely")
    return abs(estimate - exact) / abs(exact)
