"""Maximum-entropy eigenvalue densities on [0, 1].

The density has the form ``p(x) = exp(-1 - sum_j alpha_j x^j)`` and its
coefficients are chosen so the raw moments of ``p`` match the given ones.
All integrals use a single Gauss-Legendre rule on [0, 1].
"""

import warnings
from dataclasses import dataclass

from scipy.special import comb

import numpy as np

from .errors import ConstraintDomainError, ContractError, NumericalFailure

DEFAULT_NODES = 512
EXP_CLAMP = 700.0
# smallest damping factor a coefficient update can be halved to
MIN_STEP = 2.0**-12
# Newton steps allowed without a 0.1% drop in the best residual
NEWTON_PATIENCE = 1000


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        return float(self.weights @ values)


def build_quadrature(num_nodes=DEFAULT_NODES):
    """Gauss-Legendre rule mapped to [0, 1], weights normalised to sum to 1."""
    if num_nodes < 8:
        raise ContractError("num_nodes must be >= 8")
    x, w = np.polynomial.legendre.leggauss(num_nodes)
    w = w / w.sum()
    return QuadratureRule(nodes=0.5 * (x + 1.0), weights=w)


_DEFAULT_RULE = None


def default_quadrature():
    global _DEFAULT_RULE
    if _DEFAULT_RULE is None:
        _DEFAULT_RULE = build_quadrature(DEFAULT_NODES)
    return _DEFAULT_RULE


@dataclass(frozen=True)
class MaxEntDensity:
    """Fitted density with its fit diagnostics.

    When the moments belong to a measure with a few atoms (zero-variance
    spectra, two-eigenvalue matrices) there is only one measure matching
    them and no exponential-polynomial density; ``atoms`` and
    ``atom_weights`` then hold that measure and ``coefficients`` is unused.
    """

    coefficients: np.ndarray
    residual: float
    iterations: int
    converged: bool
    suspect: bool = False
    atoms: np.ndarray = None
    atom_weights: np.ndarray = None

    @property
    def is_atomic(self):
        return self.atoms is not None

    def __call__(self, x):
        return density_eval(self, x)

    def to_list(self):
        return [float(a) for a in self.coefficients]


def _log_density(coefficients, x):
    # Horner, highest power first
    poly = np.zeros_like(x, dtype=np.float64)
    for a in coefficients[::-1]:
        poly = poly * x + a
    return -1.0 - np.maximum(poly, -EXP_CLAMP)


def density_eval(d, x):
    """exp(-1 - sum_j alpha_j x^j) for x in (0, 1]."""
    if d.is_atomic:
        raise ContractError("an atomic fit has no density")
    xa = np.asarray(x, dtype=np.float64)
    if np.any(xa <= 0.0) or np.any(xa > 1.0):
        raise ContractError("density is defined on (0, 1]")
    out = np.exp(_log_density(np.asarray(d.coefficients), xa))
    return float(out) if out.ndim == 0 else out


def _density_on_nodes(d, q):
    return np.exp(_log_density(np.asarray(d.coefficients), q.nodes))


def moment_of_density(d, i, q=None):
    """Integral of x^i p(x) over [0, 1]."""
    if i < 0:
        raise ContractError("moment order must be >= 0")
    if d.is_atomic:
        return float(d.atom_weights @ d.atoms**i)
    q = q or default_quadrature()
    return q.integrate(q.nodes**i * _density_on_nodes(d, q))


def log_geometric_mean(d, q=None):
    """Integral of log(x) p(x) over [0, 1]."""
    if d.is_atomic:
        return float(d.atom_weights @ np.log(d.atoms))
    q = q or default_quadrature()
    return q.integrate(np.log(q.nodes) * _density_on_nodes(d, q))


def entropy(d, q=None):
    """Differential entropy -integral p log p."""
    if d.is_atomic:
        return -np.inf
    q = q or default_quadrature()
    logp = _log_density(np.asarray(d.coefficients), q.nodes)
    return -q.integrate(np.exp(logp) * logp)


def _as_moment_array(moments):
    mu = moments.clamped() if hasattr(moments, "clamped") else np.asarray(moments, dtype=np.float64)
    mu = np.array(mu, dtype=np.float64).ravel()
    if mu.size < 1:
        raise ConstraintDomainError("need at least mu_0")
    if abs(mu[0] - 1.0) > 1e-12:
        raise ConstraintDomainError(f"mu_0 must be 1, got {mu[0]!r}")
    bad = ~((mu > 0.0) & (mu <= 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ConstraintDomainError(f"moment mu_{i} = {mu[i]!r} is outside (0, 1]")
    return mu


def _point_mass(mu, rtol=1e-12):
    # an atom at c has mu_j = c^j; zero variance is the cheap certificate
    if mu.size < 3 or mu[2] - mu[1] ** 2 > rtol * mu[1] ** 2:
        return None
    return np.array([mu[1]]), np.array([1.0])


def _standardized_moments(mu):
    """Moments of ``(x - mean) / sd``, or ``None`` for a degenerate spread."""
    k = mu.size - 1
    mean = mu[1]
    var = mu[2] - mean**2
    if var <= 0.0:
        return None
    sd = np.sqrt(var)
    nu = np.empty(k + 1)
    for j in range(k + 1):
        i = np.arange(j + 1)
        nu[j] = np.sum(comb(j, i) * mu[: j + 1] * (-mean) ** (j - i)) / sd**j
    return nu, mean, sd


def atomic_representation(mu, tol):
    """Smallest atomic measure on (0, 1] whose moments match ``mu``.

    Works with standardized moments so the test does not depend on how
    narrow the spectrum is: a smooth spectrum squeezed into a short interval
    has tiny raw-moment residuals against a few-atom Gauss rule, but its
    standardized moments do not fit.  Tries r = 1, 2, ... atoms: the atoms
    are the roots of the degree-r polynomial orthogonal to lower powers, the
    weights a least-squares fit to all moments, and every standardized
    moment must match to ``tol``.  Returns ``(atoms, weights)`` or ``None``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    k = mu.size - 1
    if k < 2:
        return None
    std = _standardized_moments(mu)
    if std is None:
        return None
    nu, mean, sd = std
    for r in range(1, (k + 1) // 2 + 1):
        H = np.array([[nu[i + j] for j in range(r)] for i in range(r)])
        c = np.linalg.lstsq(H, -nu[r : 2 * r], rcond=None)[0]
        roots = np.roots(np.r_[1.0, c[::-1]])
        if np.any(np.abs(roots.imag) > 1e-8):
            continue
        y = roots.real
        Vt = np.vander(y, k + 1, increasing=True).T
        wts = np.linalg.lstsq(Vt, nu, rcond=None)[0]
        if np.any(wts <= 0.0) or np.abs(Vt @ wts - nu).max() >= tol:
            continue
        x = mean + sd * y
        if np.any(x <= 0.0) or np.any(x > 1.0 + 1e-9):
            continue
        order = np.argsort(x)
        return np.minimum(x, 1.0)[order], wts[order]
    return None


def fit_maxent(moments, tol=1e-6, max_iters=10_000, init_seed=None, quadrature=None, method="newton"):
    """Fit the maximum-entropy density matching moments mu_0..mu_k.

    ``method="cyclic"`` visits the coefficients in turn; coefficient ``i``
    moves by ``log(mu_i / m_i)``, ``m_i`` being the current i-th moment, in
    the direction that brings ``m_i`` toward ``mu_i``.  When a cycle increases
    the largest residual, the worst coefficient has its step halved.  ``max_iters``
    counts full cycles.

    ``method="newton"`` minimises the convex dual of the same problem with
    damped Newton steps in a shifted-Legendre basis; ``max_iters`` counts
    Newton steps.  Both target the same unique optimum, but the cyclic
    updates crawl when the spectrum is narrow relative to [0, 1].

    Both stop once every raw-moment residual is below ``tol``;
    non-convergence is reported through ``converged`` and a warning.
    ``init_seed`` of ``None`` starts from the uniform density; an integer
    draws the starting coefficients from a standard normal.
    """
    mu = _as_moment_array(moments)
    if tol <= 0:
        raise ContractError("tol must be positive")
    if method not in ("newton", "cyclic"):
        raise ContractError(f"unknown fit method {method!r}")
    k = mu.size - 1
    atomic = _point_mass(mu)
    if atomic is not None:
        return MaxEntDensity(np.zeros(k + 1), 0.0, 0, True, atoms=atomic[0], atom_weights=atomic[1])

    q = quadrature or default_quadrature()
    if init_seed is None:
        alpha = np.zeros(k + 1)
    else:
        alpha = np.random.default_rng(init_seed).standard_normal(k + 1)
    fit = _fit_cyclic if method == "cyclic" else _fit_newton
    alpha, err, iters, suspect = fit(mu, alpha, tol, max_iters, q)

    converged = err < tol
    if not converged:
        # moments on the boundary of the moment space admit no density
        atomic = atomic_representation(mu, tol)
        if atomic is not None:
            return MaxEntDensity(alpha, 0.0, iters, True, suspect, atoms=atomic[0], atom_weights=atomic[1])
    if not converged:
        warnings.warn(
            f"maximum-entropy fit ({method}) stopped after {iters} iterations with residual {err:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return MaxEntDensity(alpha, err, iters, converged, suspect)


def _exp_density(poly):
    # large positive poly just underflows to 0; only the overflow side is clamped
    suspect = bool(np.any(poly <= -EXP_CLAMP))
    return np.exp(-1.0 - np.maximum(poly, -EXP_CLAMP)), suspect


def _check_finite(p, alpha):
    if not np.all(np.isfinite(p)):
        i = int(np.argmax(np.abs(alpha)))
        raise NumericalFailure(f"density overflowed; coefficient {i} = {alpha[i]!r}")


def _fit_cyclic(mu, alpha, tol, max_iters, q):
    k = mu.size - 1
    V = np.vander(q.nodes, k + 1, increasing=True)
    wV = V * q.weights[:, None]
    p, suspect = _exp_density(V @ alpha)
    step = np.ones(k + 1)
    err = float(np.abs(wV.T @ p - mu).max())
    cycles = 0
    while err >= tol and cycles < max_iters:
        for i in range(k + 1):
            mi = float(wV[:, i] @ p)
            if not np.isfinite(mi) or mi <= 0.0:
                raise NumericalFailure(f"moment {i} became {mi!r} while updating coefficient {i}")
            delta = step[i] * np.log(mu[i] / mi)
            alpha[i] -= delta
            p = p * np.exp(delta * V[:, i])
        # refresh from the coefficients to stop multiplicative drift
        p, hit = _exp_density(V @ alpha)
        suspect = suspect or hit
        _check_finite(p, alpha)
        resid = np.abs(wV.T @ p - mu)
        if resid.max() > err:
            # the cycle overshot: damp the coefficient with the worst residual
            j = int(np.argmax(resid))
            step[j] = max(step[j] * 0.5, MIN_STEP)
        err = float(resid.max())
        cycles += 1
    return alpha, err, cycles, suspect


def _shifted_legendre(k):
    """Rows hold monomial coefficients of the Legendre polynomials on [0, 1]."""
    C = np.zeros((k + 1, k + 1))
    for j in range(k + 1):
        c = np.polynomial.Legendre.basis(j, domain=[0.0, 1.0]).convert(kind=np.polynomial.Polynomial).coef
        C[j, : c.size] = c
    return C


def _fit_newton(mu, alpha, tol, max_iters, q):
    k = mu.size - 1
    V = np.vander(q.nodes, k + 1, increasing=True)
    w = q.weights
    C = _shifted_legendre(k)
    P = V @ C.T
    nu = C @ mu
    # alpha = C^T beta; C is triangular with nonzero diagonal
    beta = np.linalg.solve(C.T, alpha)

    def dual(b):
        pb, _ = _exp_density(P @ b)
        return float(w @ pb) + float(b @ nu)

    p, suspect = _exp_density(P @ beta)
    err = float(np.abs(V.T @ (w * p) - mu).max())
    best = (err, beta)
    stale = 0
    it = 0
    while err >= tol and it < max_iters and stale < NEWTON_PATIENCE:
        wp = w * p
        g = nu - P.T @ wp
        H = (P * wp[:, None]).T @ P
        s, U = np.linalg.eigh(H)
        s = np.maximum(s, s[-1] * 1e-15)
        direction = U @ ((U.T @ g) / s)
        d0 = dual(beta)
        slope = float(g @ direction)
        t = 1.0
        while t > 1e-12:
            trial = beta - t * direction
            if dual(trial) <= d0 - 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        beta = trial
        p, hit = _exp_density(P @ beta)
        suspect = suspect or hit
        _check_finite(p, beta)
        err = float(np.abs(V.T @ (w * p) - mu).max())
        it += 1
        if err < best[0] * (1.0 - 1e-3):
            best, stale = (err, beta), 0
        else:
            stale += 1
    if err > best[0]:
        err, beta = best
    return C.T @ beta, err, it, suspect
