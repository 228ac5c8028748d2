"""Probing vectors and stochastic estimation of Tr(A^k).

Each probe ``i`` draws from its own child of ``SeedSequence(seed)``, so a
probe's values depend only on ``(seed, i)`` and not on how many probes are
drawn together or in what order they are evaluated.
"""

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


class ProbeKind(enum.Enum):
    RADEMACHER = "rademacher"
    GAUSSIAN = "gaussian"
    SPHERE = "sphere"
    BASIS = "basis"
    MUBS = "mubs"

    HUTCHINSON = "rademacher"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ContractError(f"unknown probe kind {value!r}") from None


def draw_probe(kind, n, rng):
    """One probing vector with E[z z^T] = I."""
    kind = ProbeKind.parse(kind)
    if n < 1:
        raise ContractError("n must be >= 1")
    if kind is ProbeKind.RADEMACHER:
        return rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
    if kind is ProbeKind.GAUSSIAN:
        return rng.standard_normal(n)
    if kind is ProbeKind.SPHERE:
        g = rng.standard_normal(n)
        return g * (np.sqrt(n) / np.linalg.norm(g))
    if kind is ProbeKind.BASIS:
        z = np.zeros(n)
        z[rng.integers(n)] = np.sqrt(n)
        return z
    raise NotImplementedError("mutually unbiased basis probes are not implemented")


def probe_block(kind, n, m, seed, *, stratified=False):
    """``m`` probes as the columns of an (n, m) array.

    With ``stratified`` and the basis kind, columns are drawn without
    replacement, so ``m == n`` sweeps every scaled unit vector once.
    """
    kind = ProbeKind.parse(kind)
    if m < 1:
        raise ContractError("m must be >= 1")
    if stratified and kind is ProbeKind.BASIS:
        order = np.random.default_rng(seed).permutation(n)
        idx = order[np.arange(m) % n]
        Z = np.zeros((n, m))
        Z[idx, np.arange(m)] = np.sqrt(n)
        return Z
    Z = np.empty((n, m))
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(m)):
        Z[:, i] = draw_probe(kind, n, np.random.default_rng(child))
    return Z


@dataclass(frozen=True)
class MomentEstimate:
    """Raw spectral moments mu_0..mu_k of ``A / scale``.

    ``trace_estimates[0]`` is ``dim`` and ``moments[0]`` is exactly 1.
    ``num_probes == 0`` marks moments computed exactly rather than sampled.
    """

    moments: np.ndarray
    trace_estimates: np.ndarray
    sample_variances: np.ndarray
    dim: int
    num_probes: int
    probe_kind: ProbeKind = None
    seed: int = None
    scale: float = 1.0
    matvecs: int = 0
    # probes are shared across powers, so the moment errors are correlated
    correlated: bool = True
    warnings: tuple = field(default_factory=tuple)

    @property
    def k_max(self):
        return self.moments.size - 1

    @property
    def standard_errors(self):
        """Standard error of each moment (zero for exact moments)."""
        if self.num_probes == 0:
            return np.zeros_like(self.moments)
        return np.sqrt(self.sample_variances / self.num_probes) / self.dim

    def clamped(self, floor=1e-12):
        """Moments forced into (0, 1] for the density fit.

        Monte Carlo excursions outside the interval are clipped and reported
        with a ``RuntimeWarning``.
        """
        mu = np.array(self.moments, dtype=np.float64)
        bad = (mu[1:] <= 0.0) | (mu[1:] > 1.0)
        if bad.any():
            idx = np.flatnonzero(bad) + 1
            warnings.warn(f"clamping estimated moments {idx.tolist()} into (0, 1]", RuntimeWarning, stacklevel=2)
            mu[1:] = np.clip(mu[1:], floor, 1.0)
        mu[0] = 1.0
        return mu


def _as_operator(A):
    if not hasattr(A, "matmat") or not hasattr(A, "dim"):
        raise ContractError("A must expose dim and matmat")
    return A


def krylov_quadratic_forms(A, Z, k_max, scale=1.0):
    """``z_i^T (A/scale)^j z_i`` for j = 0..k_max and every column of Z.

    Returns an array of shape (k_max + 1, m).  One block product per power.
    """
    A = _as_operator(A)
    if Z.shape[0] != A.dim:
        raise ContractError(f"probe length {Z.shape[0]} does not match dim {A.dim}")
    out = np.empty((k_max + 1, Z.shape[1]))
    out[0] = np.einsum("ij,ij->j", Z, Z)
    W = Z
    for j in range(1, k_max + 1):
        W = A.matmat(W)
        if scale != 1.0:
            W = W / scale
        out[j] = np.einsum("ij,ij->j", Z, W)
    return out


def estimate_power_traces(A, k_max, m=30, kind=ProbeKind.RADEMACHER, seed=0, *, scale=1.0, stratified=False):
    """Stochastic estimates of Tr((A/scale)^k) for k = 1..k_max.

    Each probe is pushed through ``k_max`` matvecs and reused for every
    power.  Exactly ``m * k_max`` matvecs are spent.
    """
    if k_max < 1:
        raise ContractError("k_max must be >= 1")
    kind = ProbeKind.parse(kind)
    A = _as_operator(A)
    n = A.dim
    Z = probe_block(kind, n, m, seed, stratified=stratified)
    forms = krylov_quadratic_forms(A, Z, k_max, scale)
    traces = forms.mean(axis=1)
    traces[0] = n
    if m > 1:
        variances = forms.var(axis=1, ddof=1)
    else:
        variances = np.full(k_max + 1, np.nan)
    variances[0] = 0.0
    moments = traces / n
    moments[0] = 1.0
    return MomentEstimate(
        moments=moments,
        trace_estimates=traces,
        sample_variances=variances,
        dim=n,
        num_probes=m,
        probe_kind=kind,
        seed=seed,
        scale=float(scale),
        matvecs=m * k_max,
    )


def moments_from_eigenvalues(eigenvalues, k_max, scale=1.0):
    """Exact moments of ``diag(eigenvalues) / scale``."""
    lam = np.asarray(eigenvalues, dtype=np.float64) / scale
    n = lam.size
    powers = np.vander(lam, k_max + 1, increasing=True)
    moments = powers.mean(axis=0)
    moments[0] = 1.0
    return MomentEstimate(
        moments=moments,
        trace_estimates=moments * n,
        sample_variances=np.zeros(k_max + 1),
        dim=n,
        num_probes=0,
        scale=float(scale),
        correlated=False,
    )


def exact_moments(A, k_max, scale=1.0):
    """Exact moments of ``A / scale`` from a dense eigensolve (oracle)."""
    return moments_from_eigenvalues(np.linalg.eigvalsh(A.to_dense()), k_max, scale)


def single_shot_variance(kind, A):
    """Analytic variance of one sample ``z^T A z`` for the given probe kind.

    The basis, MUBs, Hutchinson and Gaussian formulas follow the usual
    single-shot table; the sphere formula is the standard one for vectors
    uniform on the sphere of radius sqrt(d).
    """
    kind = ProbeKind.parse(kind)
    M = A.to_dense() if hasattr(A, "to_dense") else np.asarray(A, dtype=np.float64)
    d = M.shape[0]
    tr = np.trace(M)
    tr2 = float(np.sum(M * M))
    diag2 = float(np.sum(np.diag(M) ** 2))
    if kind is ProbeKind.GAUSSIAN:
        return 2.0 * tr2
    if kind is ProbeKind.RADEMACHER:
        return 2.0 * (tr2 - diag2)
    if kind is ProbeKind.BASIS:
        return d * diag2 - tr**2
    if kind is ProbeKind.MUBS:
        return d / (d + 1) * tr2 - tr**2 / (d + 1)
    return 2.0 * d / (d + 2) * (tr2 - tr**2 / d)
