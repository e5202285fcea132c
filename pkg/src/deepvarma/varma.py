"""VARMA and VARMAX modelling by conditional Gaussian maximum likelihood.

The model is the lag-polynomial recursion

    y_t = c + sum_i AR_i y_{t-i} + sum_k X_k x_{t-k} + eps_t + sum_j MA_j eps_{t-j}

with Gaussian innovations eps_t ~ N(0, Sigma).  Residuals invert the recursion
from the first observation with pre-sample values treated as zero; the
likelihood conditions on the first max(p, q) observations.  Estimation runs a
quasi-Newton ascent with central-difference gradients from a two-stage
least-squares (Hannan-Rissanen) start, with steps into the non-stationary or
non-invertible region rejected through a penalty wall.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Iterable, Sequence

import numpy as np

from ._kernels import ma_invert, varma_generate
from .panel import Panel

__all__ = [
    "VarmaSpec",
    "VarmaParams",
    "FittedVarma",
    "ForecastResult",
    "ConvergenceInfo",
    "simulate",
    "compute_residuals",
    "conditional_loglik",
    "hannan_rissanen_init",
    "estimate_mle",
    "forecast",
    "forecast_values",
    "aic",
    "select_order",
    "check_roots",
    "spectral_radius",
    "companion_matrix",
]

_LOG_2PI = math.log(2.0 * math.pi)
_RADIUS_LIMIT = 0.999
_PENALTY = 1e10
_RIDGE = 1e-8


@dataclass(frozen=True)
class VarmaSpec:
    """Model orders: m endogenous series, AR lag p, MA lag q, exogenous lag s.

    ``s`` counts exogenous lags beyond the contemporaneous term (coefficient
    matrices at lags 0..s), and must be 0 when ``exog_dim`` is 0.  A spec with
    no dynamics at all (p = q = 0, no exogenous input, no intercept) is only
    constructible with ``allow_empty=True``; simulation and likelihood
    evaluation accept such pure-noise models, order search does not.
    """

    m: int
    p: int
    q: int
    s: int = 0
    exog_dim: int = 0
    include_intercept: bool = False
    allow_empty: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"endogenous dimension must be >= 1, got {self.m}")
        for name, v in (("p", self.p), ("q", self.q), ("s", self.s), ("exog_dim", self.exog_dim)):
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")
        if self.exog_dim == 0 and self.s != 0:
            raise ValueError("s > 0 requires exogenous input (exog_dim > 0)")
        if (
            self.p + self.q == 0
            and self.exog_dim == 0
            and not self.include_intercept
            and not self.allow_empty
        ):
            raise ValueError(
                "spec has no AR, MA, exogenous or intercept terms; "
                "pass allow_empty=True for a pure-noise model"
            )

    @property
    def k_params(self) -> int:
        """Free parameters: coefficient entries plus m(m+1)/2 for Sigma."""
        k = (self.p + self.q) * self.m * self.m
        if self.exog_dim > 0:
            k += (self.s + 1) * self.m * self.exog_dim
        if self.include_intercept:
            k += self.m
        k += self.m * (self.m + 1) // 2
        return k


@dataclass(frozen=True)
class VarmaParams:
    """Coefficient matrices and the innovation covariance factor.

    ``sigma_factor`` is the lower-triangular Cholesky factor of Sigma.  A
    strictly positive diagonal (positive definite Sigma) is required by the
    likelihood and the estimator; simulation tolerates zero diagonal entries
    for noiseless test fixtures.
    """

    ar: tuple[np.ndarray, ...]
    ma: tuple[np.ndarray, ...]
    exog: tuple[np.ndarray, ...] = ()
    intercept: np.ndarray | None = None
    sigma_factor: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.sigma_factor is None:
            raise ValueError("sigma_factor is required")
        L = np.array(self.sigma_factor, dtype=float)
        m = L.shape[0]
        if L.shape != (m, m):
            raise ValueError(f"sigma_factor must be square, got {L.shape}")
        if np.any(np.abs(np.triu(L, 1)) > 0):
            raise ValueError("sigma_factor must be lower-triangular")
        if np.any(np.diag(L) < 0):
            raise ValueError("sigma_factor diagonal must be non-negative")

        def freeze(mats, shape, label):
            frozen = []
            for A in mats:
                A = np.array(A, dtype=float)
                if A.shape != shape:
                    raise ValueError(f"{label} matrix has shape {A.shape}, expected {shape}")
                A.setflags(write=False)
                frozen.append(A)
            return tuple(frozen)

        object.__setattr__(self, "ar", freeze(self.ar, (m, m), "AR"))
        object.__setattr__(self, "ma", freeze(self.ma, (m, m), "MA"))
        if self.exog:
            d = np.asarray(self.exog[0]).shape[1]
            object.__setattr__(self, "exog", freeze(self.exog, (m, d), "exogenous"))
        else:
            object.__setattr__(self, "exog", ())
        if self.intercept is not None:
            c = np.array(self.intercept, dtype=float).reshape(m)
            c.setflags(write=False)
            object.__setattr__(self, "intercept", c)
        L.setflags(write=False)
        object.__setattr__(self, "sigma_factor", L)

    @property
    def m(self) -> int:
        return self.sigma_factor.shape[0]

    @property
    def p(self) -> int:
        return len(self.ar)

    @property
    def q(self) -> int:
        return len(self.ma)

    @property
    def exog_dim(self) -> int:
        return self.exog[0].shape[1] if self.exog else 0

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_factor @ self.sigma_factor.T


@dataclass(frozen=True)
class ConvergenceInfo:
    iterations: int
    gradient_norm: float
    converged: bool


@dataclass(frozen=True)
class FittedVarma:
    """Estimated model plus fit diagnostics and forecasting state.

    ``residuals`` is the in-sample residual panel (length T - max(p, q));
    the ``*_tail`` arrays keep just enough history to iterate the recursion
    forward, which is all that survives JSON serialisation.
    """

    spec: VarmaSpec
    params: VarmaParams
    log_likelihood: float
    aic: float
    k_params: int
    residuals: Panel | None
    convergence: ConvergenceInfo
    endog_tail: np.ndarray
    resid_tail: np.ndarray
    exog_tail: np.ndarray | None = None

    def to_dict(self) -> dict:
        p = self.params
        return {
            "spec": {
                "m": self.spec.m,
                "p": self.spec.p,
                "q": self.spec.q,
                "s": self.spec.s,
                "exog_dim": self.spec.exog_dim,
                "include_intercept": self.spec.include_intercept,
            },
            "params": {
                "ar": [A.tolist() for A in p.ar],
                "ma": [A.tolist() for A in p.ma],
                "exog": [A.tolist() for A in p.exog],
                "intercept": None if p.intercept is None else p.intercept.tolist(),
                "sigma_factor": p.sigma_factor.tolist(),
            },
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "k_params": self.k_params,
            "convergence": {
                "iterations": self.convergence.iterations,
                "gradient_norm": self.convergence.gradient_norm,
                "converged": self.convergence.converged,
            },
            "endog_tail": self.endog_tail.tolist(),
            "resid_tail": self.resid_tail.tolist(),
            "exog_tail": None if self.exog_tail is None else self.exog_tail.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedVarma":
        s = doc["spec"]
        spec = VarmaSpec(
            m=s["m"], p=s["p"], q=s["q"], s=s["s"], exog_dim=s["exog_dim"],
            include_intercept=s["include_intercept"], allow_empty=True,
        )
        pd = doc["params"]
        params = VarmaParams(
            ar=tuple(np.array(A) for A in pd["ar"]),
            ma=tuple(np.array(A) for A in pd["ma"]),
            exog=tuple(np.array(A) for A in pd["exog"]),
            intercept=None if pd["intercept"] is None else np.array(pd["intercept"]),
            sigma_factor=np.array(pd["sigma_factor"]),
        )
        conv = doc.get("convergence", {})
        return cls(
            spec=spec,
            params=params,
            log_likelihood=doc["log_likelihood"],
            aic=doc["aic"],
            k_params=doc["k_params"],
            residuals=None,
            convergence=ConvergenceInfo(
                iterations=conv.get("iterations", 0),
                gradient_norm=conv.get("gradient_norm", float("nan")),
                converged=conv.get("converged", True),
            ),
            endog_tail=np.array(doc["endog_tail"], dtype=float).reshape(-1, spec.m),
            resid_tail=np.array(doc["resid_tail"], dtype=float).reshape(-1, spec.m),
            exog_tail=None
            if doc.get("exog_tail") is None
            else np.array(doc["exog_tail"], dtype=float).reshape(-1, spec.exog_dim),
        )

    @classmethod
    def from_json(cls, text: str) -> "FittedVarma":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ForecastResult:
    """Point forecasts for steps 1..horizon, one row per step."""

    horizon: int
    values: np.ndarray
    exog_policy: str


# ---------------------------------------------------------------------------
# stability / invertibility


def companion_matrix(mats: Sequence[np.ndarray], m: int) -> np.ndarray:
    """Block companion matrix of a lag polynomial's coefficient list."""
    n = len(mats)
    if n == 0:
        return np.zeros((0, 0))
    C = np.zeros((m * n, m * n))
    for i, A in enumerate(mats):
        C[:m, i * m : (i + 1) * m] = A
    if n > 1:
        C[m:, :-m] = np.eye(m * (n - 1))
    return C


def spectral_radius(matrix: np.ndarray, tol: float = 1e-10) -> float:
    """Largest eigenvalue modulus via iterated matrix powers.

    Repeatedly squares the (normalised) matrix and reads the radius off the
    Gelfand limit ||A^n||^(1/n), which converges for complex-pair and
    defective dominant eigenvalues where plain vector iteration stalls.
    """
    A = np.array(matrix, dtype=float)
    if A.size == 0:
        return 0.0
    if not np.all(np.isfinite(A)):
        return float("inf")
    power = 1.0
    log_scale = 0.0
    previous = None
    estimate = 0.0
    for _ in range(64):
        norm = float(np.linalg.norm(A))
        if norm == 0.0:
            return 0.0
        log_scale += math.log(norm)
        A = A / norm
        estimate = math.exp(log_scale / power)
        if previous is not None and abs(estimate - previous) <= tol * max(estimate, 1e-12):
            return estimate
        previous = estimate
        A = A @ A
        power *= 2.0
        log_scale *= 2.0
    return estimate


def check_roots(params: VarmaParams) -> tuple[bool, bool]:
    """(stable, invertible): AR and MA companion spectral radii below one."""
    stable = spectral_radius(companion_matrix(params.ar, params.m)) < 1.0
    invertible = spectral_radius(companion_matrix(params.ma, params.m)) < 1.0
    return stable, invertible


def _radius_eig(mats: Sequence[np.ndarray], m: int) -> float:
    """Fast spectral radius for the optimizer's step rejection.

    A lag-coefficient norm bound short-circuits the common small-coefficient
    case; otherwise fall back to a direct eigenvalue computation.
    """
    if len(mats) == 0:
        return 0.0
    bound = sum(float(np.abs(A).sum(axis=1).max()) for A in mats)
    if bound < _RADIUS_LIMIT:
        return bound
    C = companion_matrix(mats, m)
    if not np.all(np.isfinite(C)):
        return float("inf")
    return float(np.max(np.abs(np.linalg.eigvals(C))))


# ---------------------------------------------------------------------------
# recursion cores


def _ma_stack(params: VarmaParams) -> np.ndarray:
    if params.q == 0:
        return np.zeros((0, params.m, params.m))
    return np.ascontiguousarray(np.stack(params.ma))


def _head_array(params: VarmaParams, y: np.ndarray, x: np.ndarray | None) -> np.ndarray:
    """Data minus intercept, AR and exogenous terms; lags before the sample are zero."""
    T = y.shape[0]
    head = np.array(y)
    if params.intercept is not None:
        head -= params.intercept
    for i, A in enumerate(params.ar, start=1):
        if i < T:
            head[i:] -= y[: T - i] @ A.T
    for k, G in enumerate(params.exog):
        if k == 0:
            head -= x @ G.T
        elif k < T:
            head[k:] -= x[: T - k] @ G.T
    return head


def _residuals_array(params: VarmaParams, y: np.ndarray, x: np.ndarray | None) -> np.ndarray:
    """Full-length residual recursion (row t is eps_t; pre-sample lags are zero)."""
    head = _head_array(params, y, x)
    if params.q == 0:
        return head
    eps = np.empty_like(head)
    ma_invert(np.ascontiguousarray(head), _ma_stack(params), eps)
    return eps


def _check_exog(params: VarmaParams, y: np.ndarray, x: np.ndarray | None) -> None:
    if params.exog_dim == 0:
        if x is not None and np.asarray(x).size:
            raise ValueError("model has no exogenous terms but exog data was supplied")
        return
    if x is None:
        raise ValueError("model has exogenous terms; exog data is required")
    if x.ndim != 2 or x.shape != (y.shape[0], params.exog_dim):
        raise ValueError(
            f"exog shape {x.shape} does not match (T={y.shape[0]}, d={params.exog_dim})"
        )


def compute_residuals(params: VarmaParams, panel: Panel, exog: Panel | None = None) -> Panel:
    """Invert the recursion to recover innovations.

    The recursion runs from the first observation with pre-sample lags (both
    of y and of eps) treated as zero; the first max(p, q) values condition the
    recursion and are not returned, so the result has T - max(p, q) rows.
    """
    panel.require_complete("compute_residuals")
    y = panel.values
    if y.shape[1] != params.m:
        raise ValueError(f"panel has {y.shape[1]} series, params expect {params.m}")
    x = None
    if exog is not None:
        exog.require_complete("compute_residuals")
        x = exog.values
    _check_exog(params, y, x)
    eps = _residuals_array(params, y, x)
    t0 = max(params.p, params.q)
    if eps.shape[0] <= t0:
        raise ValueError(f"sample of {eps.shape[0]} rows leaves no residuals beyond lag {t0}")
    return Panel(panel.timestamps[t0:], panel.columns, eps[t0:])


def _loglik_core(params: VarmaParams, eps_used: np.ndarray) -> float:
    L = params.sigma_factor
    diag = np.diag(L)
    if np.any(diag <= 0):
        raise ValueError("Sigma factor must have a strictly positive diagonal")
    n, m = eps_used.shape
    logdet = 2.0 * float(np.sum(np.log(diag)))
    z = np.linalg.solve(L, eps_used.T)
    quad = float(np.sum(z * z))
    return -0.5 * (n * (m * _LOG_2PI + logdet) + quad)


def conditional_loglik(params: VarmaParams, panel: Panel, exog: Panel | None = None) -> float:
    """Gaussian log-likelihood summed over t = max(p, q) + 1 .. T."""
    resid = compute_residuals(params, panel, exog)
    return _loglik_core(params, resid.values)


# ---------------------------------------------------------------------------
# simulation


def _synthetic_dates(T: int, start: date = date(2000, 1, 1)) -> tuple[date, ...]:
    base = start.toordinal()
    return tuple(date.fromordinal(base + t) for t in range(T))


def simulate(
    spec: VarmaSpec,
    params: VarmaParams,
    T: int,
    seed: int,
    exog: Panel | None = None,
    initial_state: dict | None = None,
    column_names: Sequence[str] | None = None,
) -> Panel:
    """Generate T observations from the recursion with Gaussian innovations.

    Pre-sample values of y and eps are zero unless ``initial_state`` supplies
    them (keys ``"y"`` and ``"eps"``, most recent row last).  Output is
    deterministic for a fixed seed.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if params.m != spec.m or params.p != spec.p or params.q != spec.q:
        raise ValueError("params dimensions do not match spec")
    x = None
    if spec.exog_dim > 0:
        if exog is None:
            raise ValueError("spec has exogenous terms; an exog panel is required")
        if len(exog) < T:
            raise ValueError(f"exog panel has {len(exog)} rows, need at least {T}")
        x = exog.values[:T]
    elif exog is not None:
        raise ValueError("spec has no exogenous terms but an exog panel was supplied")

    rng = np.random.default_rng(seed)
    shocks = rng.standard_normal((T, spec.m)) @ params.sigma_factor.T

    drive = shocks
    if params.intercept is not None:
        drive = drive + params.intercept
    if x is not None:
        for k, G in enumerate(params.exog):
            if k == 0:
                drive = drive + x @ G.T
            elif k < T:
                contrib = np.zeros((T, spec.m))
                contrib[k:] = x[: T - k] @ G.T
                drive = drive + contrib

    pre = max(spec.p, spec.q, 1)
    y_ext = np.zeros((pre + T, spec.m))
    eps_ext = np.zeros((pre + T, spec.m))
    eps_ext[pre:] = shocks
    if initial_state:
        y_init = np.atleast_2d(np.asarray(initial_state.get("y", []), dtype=float))
        eps_init = np.atleast_2d(np.asarray(initial_state.get("eps", []), dtype=float))
        if y_init.size:
            y_ext[pre - y_init.shape[0] : pre] = y_init
        if eps_init.size:
            eps_ext[pre - eps_init.shape[0] : pre] = eps_init

    ar = np.stack(params.ar) if spec.p else np.zeros((0, spec.m, spec.m))
    ma = np.stack(params.ma) if spec.q else np.zeros((0, spec.m, spec.m))
    varma_generate(
        np.ascontiguousarray(drive),
        np.ascontiguousarray(ar),
        np.ascontiguousarray(ma),
        eps_ext,
        y_ext,
        pre,
    )
    names = tuple(column_names) if column_names else tuple(f"y{i+1}" for i in range(spec.m))
    return Panel(_synthetic_dates(T), names, y_ext[pre:])


# ---------------------------------------------------------------------------
# Hannan-Rissanen two-stage initialisation


def _ridge_solve(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Least squares with a small ridge so collinear designs stay solvable."""
    XtX = X.T @ X
    return np.linalg.solve(XtX + _RIDGE * np.eye(X.shape[1]), X.T @ Y)


def hannan_rissanen_init(
    panel: Panel, spec: VarmaSpec, exog: Panel | None = None
) -> VarmaParams:
    """Two-stage least-squares starting values for the likelihood ascent.

    Stage one fits a long VAR to proxy the innovations; stage two regresses
    y_t on its own lags, the exogenous lags and the lagged innovation proxies.
    Sigma comes from the stage-two residual covariance, nudged to positive
    definite if necessary.
    """
    panel.require_complete("hannan_rissanen_init")
    y = panel.values
    T, m = y.shape
    if m != spec.m:
        raise ValueError(f"panel has {m} series, spec expects {spec.m}")
    minimum = 10 * (spec.p + spec.q + 1) * spec.m
    if T < minimum:
        raise ValueError(
            f"insufficient sample: T={T} below heuristic minimum {minimum} "
            f"for (p={spec.p}, q={spec.q}, m={spec.m})"
        )
    if float(np.ptp(y, axis=0).min()) == 0.0:
        raise ValueError("hannan_rissanen_init: a series has zero variance")
    x = None
    if spec.exog_dim > 0:
        if exog is None:
            raise ValueError("spec has exogenous terms; an exog panel is required")
        x = exog.values
        if x.shape != (T, spec.exog_dim):
            raise ValueError(f"exog shape {x.shape} does not match (T={T}, d={spec.exog_dim})")

    long_order = max(8, 2 * max(spec.p, spec.q))
    innovations = None
    if spec.q > 0:
        if T <= long_order + spec.q + 5:
            raise ValueError(
                f"insufficient sample for long VAR of order {long_order} (T={T})"
            )
        cols = [np.ones((T - long_order, 1))] if spec.include_intercept else []
        cols += [y[long_order - i : T - i] for i in range(1, long_order + 1)]
        X1 = np.hstack(cols)
        Y1 = y[long_order:]
        B1 = _ridge_solve(X1, Y1)
        innovations = np.zeros((T, m))
        innovations[long_order:] = Y1 - X1 @ B1

    t_start = max(spec.p, spec.s if x is not None else 0)
    if spec.q > 0:
        t_start = max(t_start, long_order + spec.q)
    rows = T - t_start
    cols = [np.ones((rows, 1))] if spec.include_intercept else []
    cols += [y[t_start - i : T - i] for i in range(1, spec.p + 1)]
    if x is not None:
        cols += [x[t_start - k : T - k] for k in range(spec.s + 1)]
    if spec.q > 0:
        cols += [innovations[t_start - j : T - j] for j in range(1, spec.q + 1)]
    Y2 = y[t_start:]
    if cols:
        X2 = np.hstack(cols)
        if rows < X2.shape[1] + 5:
            raise ValueError(
                f"insufficient sample: {rows} usable rows for {X2.shape[1]} regressors"
            )
        B2 = _ridge_solve(X2, Y2)
        resid = Y2 - X2 @ B2
    else:
        B2 = np.zeros((0, m))
        resid = Y2

    offset = 0
    intercept = None
    if spec.include_intercept:
        intercept = B2[0]
        offset = 1
    ar = []
    for _ in range(spec.p):
        ar.append(B2[offset : offset + m].T.copy())
        offset += m
    exog_coefs = []
    if x is not None:
        for _ in range(spec.s + 1):
            exog_coefs.append(B2[offset : offset + spec.exog_dim].T.copy())
            offset += spec.exog_dim
    ma = []
    for _ in range(spec.q):
        ma.append(B2[offset : offset + m].T.copy())
        offset += m

    sigma = resid.T @ resid / max(1, resid.shape[0])
    factor = None
    nudge = _RIDGE
    for _ in range(10):
        try:
            factor = np.linalg.cholesky(sigma)
            if np.all(np.diag(factor) > 0):
                break
        except np.linalg.LinAlgError:
            pass
        sigma = sigma + nudge * np.eye(m)
        nudge *= 10.0
        factor = None
    if factor is None:
        raise ValueError("failed to obtain a positive definite innovation covariance")

    return VarmaParams(
        ar=tuple(ar),
        ma=tuple(ma),
        exog=tuple(exog_coefs),
        intercept=intercept,
        sigma_factor=factor,
    )


# ---------------------------------------------------------------------------
# maximum likelihood


def _pack(params: VarmaParams, spec: VarmaSpec) -> np.ndarray:
    parts = [A.ravel() for A in params.ar]
    parts += [A.ravel() for A in params.ma]
    parts += [A.ravel() for A in params.exog]
    if spec.include_intercept:
        parts.append(params.intercept if params.intercept is not None else np.zeros(spec.m))
    L = params.sigma_factor
    parts.append(np.log(np.maximum(np.diag(L), 1e-150)))
    if spec.m > 1:
        parts.append(L[np.tril_indices(spec.m, k=-1)])
    return np.concatenate(parts) if parts else np.zeros(0)


def _unpack(vector: np.ndarray, spec: VarmaSpec) -> VarmaParams:
    m, d = spec.m, spec.exog_dim
    pos = 0

    def take(n):
        nonlocal pos
        out = vector[pos : pos + n]
        pos += n
        return out

    ar = tuple(take(m * m).reshape(m, m) for _ in range(spec.p))
    ma = tuple(take(m * m).reshape(m, m) for _ in range(spec.q))
    exog = tuple(take(m * d).reshape(m, d) for _ in range(spec.s + 1)) if d > 0 else ()
    intercept = take(m).copy() if spec.include_intercept else None
    L = np.zeros((m, m))
    np.fill_diagonal(L, np.exp(take(m)))
    if m > 1:
        L[np.tril_indices(m, k=-1)] = take(m * (m - 1) // 2)
    return VarmaParams(ar=ar, ma=ma, exog=exog, intercept=intercept, sigma_factor=L)


def _project_feasible(params: VarmaParams, target: float = 0.97) -> VarmaParams:
    """Shrink AR/MA blocks so the start point sits inside the stability wall.

    Scaling lag-i coefficients by c**i scales the companion eigenvalues by c.
    """
    ar, ma = params.ar, params.ma
    changed = False
    r = _radius_eig(ar, params.m)
    if r >= _RADIUS_LIMIT:
        c = target / r
        ar = tuple(A * c ** (i + 1) for i, A in enumerate(ar))
        changed = True
    r = _radius_eig(ma, params.m)
    if r >= _RADIUS_LIMIT:
        c = target / r
        ma = tuple(A * c ** (i + 1) for i, A in enumerate(ma))
        changed = True
    if not changed:
        return params
    return replace(params, ar=ar, ma=ma)


class _Objective:
    """Penalised negative log-likelihood over the packed parameter vector.

    Operates on raw views of the vector (no parameter-object construction)
    and knows the vector layout, so gradient probes that leave the AR and MA
    blocks untouched skip the spectral-radius check.
    """

    def __init__(self, spec: VarmaSpec, y: np.ndarray, x: np.ndarray | None):
        self.spec = spec
        self.y = y
        self.x = x
        m = spec.m
        self.m = m
        self.t0 = max(spec.p, spec.q)
        self.n_ar = spec.p * m * m
        self.n_arma = self.n_ar + spec.q * m * m
        self.n_exog = (spec.s + 1) * m * spec.exog_dim if spec.exog_dim else 0
        self.lower_idx = np.tril_indices(m, k=-1)

    def _split(self, vec: np.ndarray):
        spec, m = self.spec, self.m
        ar = vec[: self.n_ar].reshape(spec.p, m, m)
        ma = vec[self.n_ar : self.n_arma].reshape(spec.q, m, m)
        pos = self.n_arma
        gamma = None
        if self.n_exog:
            gamma = vec[pos : pos + self.n_exog].reshape(spec.s + 1, m, spec.exog_dim)
            pos += self.n_exog
        intercept = None
        if spec.include_intercept:
            intercept = vec[pos : pos + m]
            pos += m
        log_diag = vec[pos : pos + m]
        pos += m
        L = np.zeros((m, m))
        np.fill_diagonal(L, np.exp(log_diag))
        if m > 1:
            L[self.lower_idx] = vec[pos:]
        return ar, ma, gamma, intercept, log_diag, L

    def _residuals(self, ar, ma, gamma, intercept) -> np.ndarray:
        y = self.y
        T = y.shape[0]
        head = y.copy()
        if intercept is not None:
            head -= intercept
        for i in range(ar.shape[0]):
            head[i + 1 :] -= y[: T - i - 1] @ ar[i].T
        if gamma is not None:
            x = self.x
            head -= x @ gamma[0].T
            for k in range(1, gamma.shape[0]):
                head[k:] -= x[: T - k] @ gamma[k].T
        if ma.shape[0] == 0:
            return head
        eps = np.empty_like(head)
        ma_invert(head, ma, eps)
        return eps

    def _value(self, ar, ma, gamma, intercept, log_diag, L) -> float:
        eps = self._residuals(ar, ma, gamma, intercept)[self.t0 :]
        n = eps.shape[0]
        logdet = 2.0 * float(log_diag.sum())
        z = np.linalg.solve(L, eps.T)
        quad = float(np.sum(z * z))
        ll = -0.5 * (n * (self.m * _LOG_2PI + logdet) + quad)
        if not math.isfinite(ll) or -ll >= _PENALTY:
            # transient blow-ups of barely-invertible MA polynomials land here
            return _PENALTY
        return -ll

    def _wall(self, ar, ma) -> float | None:
        spec = self.spec
        worst = 0.0
        if spec.p:
            worst = _radius_eig(ar, self.m)
        if spec.q and worst < _RADIUS_LIMIT:
            worst = max(worst, _radius_eig(ma, self.m))
        if worst >= _RADIUS_LIMIT:
            return _PENALTY * (1.0 + worst - _RADIUS_LIMIT)
        return None

    def __call__(self, vec: np.ndarray) -> float:
        ar, ma, gamma, intercept, log_diag, L = self._split(vec)
        wall = self._wall(ar, ma)
        if wall is not None:
            return wall
        return self._value(ar, ma, gamma, intercept, log_diag, L)

    def value_inside_wall(self, vec: np.ndarray) -> float:
        """Objective for probes whose AR/MA blocks are known feasible."""
        ar, ma, gamma, intercept, log_diag, L = self._split(vec)
        return self._value(ar, ma, gamma, intercept, log_diag, L)

    def gradient(self, x: np.ndarray, fx: float) -> np.ndarray:
        """Central differences; radius checks only where AR/MA entries move.

        A probe that lands on the penalty wall would poison its entry, so such
        sides fall back to a one-sided difference against the centre value.
        """
        g = np.zeros_like(x)
        for i in range(len(x)):
            h = 1e-6 * max(1.0, abs(x[i]))
            xp = x.copy()
            xp[i] += h
            xm = x.copy()
            xm[i] -= h
            probe = self.__call__ if i < self.n_arma else self.value_inside_wall
            fp = probe(xp)
            fm = probe(xm)
            p_bad = not math.isfinite(fp) or fp >= _PENALTY
            m_bad = not math.isfinite(fm) or fm >= _PENALTY
            if p_bad and m_bad:
                g[i] = 0.0
            elif p_bad:
                g[i] = (fx - fm) / h
            elif m_bad:
                g[i] = (fp - fx) / h
            else:
                g[i] = (fp - fm) / (2.0 * h)
        return g


def _central_gradient(f, x: np.ndarray, fallback: float) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(len(x)):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fp, fm = f(xp), f(xm)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            fp = fp if math.isfinite(fp) else fallback
            fm = fm if math.isfinite(fm) else fallback
        g[i] = (fp - fm) / (2.0 * h)
    return g


def _backtrack(f, x, fx, g, d, max_halvings=40):
    slope = float(g @ d)
    if slope >= 0:
        return None
    alpha = 1.0
    for _ in range(max_halvings):
        candidate = x + alpha * d
        f_new = f(candidate)
        if math.isfinite(f_new) and f_new <= fx + 1e-4 * alpha * slope:
            return candidate, f_new
        alpha *= 0.5
    return None


def _minimize_bfgs(f, x0: np.ndarray, max_iterations: int, tol: float):
    """Dense BFGS with Armijo backtracking and central-difference gradients.

    ``f`` must be callable on a vector; when it also provides a ``gradient``
    method (the structure-aware objective), that is used instead of the
    generic central difference.
    """
    n = len(x0)
    x = np.array(x0, dtype=float)
    fx = f(x)
    if not math.isfinite(fx):
        raise ValueError("objective is not finite at the starting point")
    if n == 0:
        return x, fx, 0.0, 0, True
    grad = f.gradient if hasattr(f, "gradient") else lambda v, fb: _central_gradient(f, v, fb)
    g = grad(x, fx)
    H = np.eye(n)
    iterations = 0
    converged = False
    for _ in range(max_iterations):
        d = -H @ g
        step = _backtrack(f, x, fx, g, d)
        if step is None and not np.array_equal(d, -g):
            H = np.eye(n)
            step = _backtrack(f, x, fx, g, -g)
        if step is None:
            break
        x_new, f_new = step
        g_new = grad(x_new, f_new)
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv) + 1e-300):
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        improvement = fx - f_new
        x, fx, g = x_new, f_new, g_new
        iterations += 1
        if improvement <= tol * (abs(fx) + 1.0):
            converged = True
            break
    return x, fx, float(np.max(np.abs(g))), iterations, converged


def estimate_mle(
    panel: Panel,
    spec: VarmaSpec,
    exog: Panel | None = None,
    init: VarmaParams | None = None,
    max_iterations: int = 500,
    tol: float = 1e-8,
) -> FittedVarma:
    """Maximise the conditional log-likelihood by quasi-Newton ascent.

    Starts from :func:`hannan_rissanen_init` (or a caller-supplied ``init``),
    parameterises Sigma through its triangular factor with the diagonal on a
    log scale, and rejects steps whose AR or MA companion spectral radius
    reaches 0.999 through a penalty wall.  The returned log-likelihood is
    never below the initialiser's (only improving steps are accepted).
    """
    panel.require_complete("estimate_mle")
    y = panel.values
    T, m = y.shape
    if m != spec.m:
        raise ValueError(f"panel has {m} series, spec expects {spec.m}")
    t0 = max(spec.p, spec.q)
    if T <= t0 + spec.k_params / m:
        raise ValueError(
            f"sample too short: T={T} for max lag {t0} and {spec.k_params} parameters"
        )
    x = None
    if exog is not None:
        exog.require_complete("estimate_mle")
        x = exog.values

    if init is None:
        init = hannan_rissanen_init(panel, spec, exog)
    projected = _project_feasible(init)
    if projected is not init:
        # shrinking the lag coefficients changes the residuals; refresh Sigma
        # so the start point's likelihood is internally consistent
        eps0 = _residuals_array(projected, y, x)[max(spec.p, spec.q) :]
        sigma0 = eps0.T @ eps0 / max(1, eps0.shape[0])
        nudge = _RIDGE
        for _ in range(10):
            try:
                factor = np.linalg.cholesky(sigma0)
                if np.all(np.diag(factor) > 0):
                    projected = replace(projected, sigma_factor=factor)
                    break
            except np.linalg.LinAlgError:
                pass
            sigma0 = sigma0 + nudge * np.eye(m)
            nudge *= 10.0
    init = projected
    _check_exog(init, y, x)

    objective = _Objective(spec, y, x)
    x0 = _pack(init, spec)
    if objective(x0) >= _PENALTY:
        # a degenerate two-stage start (for instance a barely-invertible MA
        # with huge transients) is replaced by the zero-coefficient model
        intercept0 = y.mean(axis=0) if spec.include_intercept else None
        centred = y - intercept0 if intercept0 is not None else y
        sigma0 = centred.T @ centred / max(1, T)
        sigma0 = sigma0 + _RIDGE * np.eye(m)
        init = VarmaParams(
            ar=tuple(np.zeros((m, m)) for _ in range(spec.p)),
            ma=tuple(np.zeros((m, m)) for _ in range(spec.q)),
            exog=tuple(np.zeros((m, spec.exog_dim)) for _ in range(spec.s + 1))
            if spec.exog_dim
            else (),
            intercept=intercept0,
            sigma_factor=np.linalg.cholesky(sigma0),
        )
        x0 = _pack(init, spec)
    vec, f_best, grad_norm, iterations, converged = _minimize_bfgs(
        objective, x0, max_iterations, tol
    )
    params = _unpack(vec, spec)
    if spec.k_params and not math.isfinite(f_best):
        raise ValueError("optimizer diverged: non-finite objective")
    residuals = compute_residuals(params, panel, exog)
    log_likelihood = _loglik_core(params, residuals.values)
    k = spec.k_params
    return FittedVarma(
        spec=spec,
        params=params,
        log_likelihood=log_likelihood,
        aic=2.0 * k - 2.0 * log_likelihood,
        k_params=k,
        residuals=residuals,
        convergence=ConvergenceInfo(iterations, grad_norm, converged),
        endog_tail=np.array(y[T - max(spec.p, 1) :]),
        resid_tail=np.array(residuals.values[len(residuals) - spec.q :])
        if spec.q > 0
        else np.zeros((0, m)),
        exog_tail=np.array(x[T - max(spec.s, 1) :]) if x is not None else None,
    )


def aic(fitted: FittedVarma) -> float:
    """Akaike information criterion, 2 k - 2 log L."""
    return 2.0 * fitted.k_params - 2.0 * fitted.log_likelihood


# ---------------------------------------------------------------------------
# forecasting


def forecast_values(
    params: VarmaParams,
    endog_hist: np.ndarray,
    exog_hist: np.ndarray | None,
    h: int,
    exog_policy: str = "hold-last",
    future_exog: np.ndarray | None = None,
) -> np.ndarray:
    """h-step conditional-mean path given an observed history.

    Future innovations are zero; MA terms use the residuals recomputed over
    the supplied history; future exogenous rows come from ``future_exog``
    (policy ``"require"``) or repeat the last observed row (``"hold-last"``).
    """
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    y = np.asarray(endog_hist, dtype=float)
    T, m = y.shape
    x = None if exog_hist is None else np.asarray(exog_hist, dtype=float)
    _check_exog(params, y, x)

    x_future = None
    if params.exog_dim > 0:
        if exog_policy == "require":
            if future_exog is None or np.asarray(future_exog).shape[0] < h:
                raise ValueError("exog policy 'require' needs h rows of future exog values")
            x_future = np.asarray(future_exog, dtype=float)[:h]
        elif exog_policy == "hold-last":
            x_future = np.repeat(x[-1:], h, axis=0)
        else:
            raise ValueError(f"unknown exog policy {exog_policy!r}")

    eps = _residuals_array(params, y, x)
    out = np.zeros((h, m))

    def y_at(t: int) -> np.ndarray:
        return y[t] if t < T else out[t - T]

    def x_at(t: int) -> np.ndarray:
        return x[t] if t < T else x_future[t - T]

    for j in range(h):
        t = T + j
        acc = np.zeros(m) if params.intercept is None else np.array(params.intercept)
        for i, A in enumerate(params.ar, start=1):
            if t - i >= 0:
                acc += A @ y_at(t - i)
        for k, G in enumerate(params.exog):
            if t - k >= 0:
                acc += G @ x_at(t - k)
        for l, B in enumerate(params.ma, start=1):
            back = t - l
            if 0 <= back < T:
                acc += B @ eps[back]
        out[j] = acc
    return out


def forecast(
    fitted: FittedVarma,
    h: int,
    future_exog: np.ndarray | None = None,
    exog_policy: str = "hold-last",
) -> ForecastResult:
    """Iterate the recursion h steps past the end of the fitting sample."""
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    params = fitted.params
    m = params.m
    x_future = None
    if params.exog_dim > 0:
        if exog_policy == "require":
            if future_exog is None or np.asarray(future_exog).shape[0] < h:
                raise ValueError("exog policy 'require' needs h rows of future exog values")
            x_future = np.asarray(future_exog, dtype=float)[:h]
        elif exog_policy == "hold-last":
            if fitted.exog_tail is None or not len(fitted.exog_tail):
                raise ValueError("fitted model carries no exogenous tail to hold")
            x_future = np.repeat(fitted.exog_tail[-1:], h, axis=0)
        else:
            raise ValueError(f"unknown exog policy {exog_policy!r}")

    y_tail = fitted.endog_tail
    eps_tail = fitted.resid_tail
    x_tail = fitted.exog_tail
    n_y, n_e = len(y_tail), len(eps_tail)
    n_x = 0 if x_tail is None else len(x_tail)
    out = np.zeros((h, m))
    for j in range(h):
        acc = np.zeros(m) if params.intercept is None else np.array(params.intercept)
        for i, A in enumerate(params.ar, start=1):
            back = j - i  # index into the future block; negative reaches the tail
            if back >= 0:
                acc += A @ out[back]
            elif n_y + back >= 0:
                acc += A @ y_tail[n_y + back]
        for k, G in enumerate(params.exog):
            back = j - k
            if back >= 0:
                acc += G @ x_future[back]
            elif n_x + back >= 0:
                acc += G @ x_tail[n_x + back]
        for l, B in enumerate(params.ma, start=1):
            back = j - l
            if back < 0 and n_e + back >= 0:  # future innovations are zero
                acc += B @ eps_tail[n_e + back]
        out[j] = acc
    return ForecastResult(horizon=h, values=out, exog_policy=exog_policy)


# ---------------------------------------------------------------------------
# order selection


def _order_rank(candidate: tuple[VarmaSpec, FittedVarma]) -> tuple[float, int, int, int]:
    spec, fitted = candidate
    return (fitted.aic, spec.p + spec.q, spec.p, spec.s)


def pick_best(
    candidates: Iterable[tuple[VarmaSpec, FittedVarma]],
    aic_values: Sequence[float] | None = None,
) -> tuple[VarmaSpec, FittedVarma]:
    """Minimum-AIC candidate; ties go to smaller p + q, then smaller p.

    ``aic_values`` overrides the criterion per candidate (used by
    :func:`select_order` to rank on a common conditioning sample).
    """
    best = None
    best_rank = None
    for idx, cand in enumerate(candidates):
        rank = _order_rank(cand)
        if aic_values is not None:
            rank = (aic_values[idx],) + rank[1:]
        if best_rank is None or rank < best_rank:
            best, best_rank = cand, rank
    if best is None:
        raise ValueError("no candidates to rank")
    return best


def select_order(
    panel: Panel,
    p_range: Sequence[int] = (0, 1, 2, 3),
    q_range: Sequence[int] = (0, 1, 2),
    s_range: Sequence[int] | None = None,
    exog: Panel | None = None,
    include_intercept: bool = False,
    jobs: int = 1,
) -> tuple[VarmaSpec, FittedVarma]:
    """Fit every (p, q, s) combination and keep the minimum-AIC model.

    Candidates that fail to fit are skipped with a warning; the reduction over
    the fixed candidate ordering is deterministic regardless of ``jobs``.
    """
    if not p_range or not q_range:
        raise ValueError("order ranges must be non-empty")
    d = exog.n_series if exog is not None else 0
    if s_range is None:
        s_range = (0, 1) if d > 0 else (0,)
    if d == 0:
        s_range = (0,)

    specs = []
    for p in p_range:
        for q in q_range:
            for s in s_range:
                if p + q == 0 and d == 0 and not include_intercept:
                    continue  # pure-noise candidate is not expressible here
                specs.append(
                    VarmaSpec(
                        m=panel.n_series, p=p, q=q, s=s, exog_dim=d,
                        include_intercept=include_intercept,
                    )
                )
    if not specs:
        raise ValueError("no admissible order candidates in the given ranges")

    def fit_one(spec: VarmaSpec):
        try:
            return spec, estimate_mle(panel, spec, exog=exog)
        except Exception as exc:  # noqa: BLE001 - record and move on
            warnings.warn(
                f"order candidate (p={spec.p}, q={spec.q}, s={spec.s}) failed: {exc}",
                stacklevel=2,
            )
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fit_one, specs))
    else:
        results = [fit_one(spec) for spec in specs]
    fitted = [r for r in results if r is not None]
    if not fitted:
        raise ValueError("all order candidates failed to fit")
    # A fit whose optimum sits against the stationarity/invertibility wall is
    # numerically untrustworthy for forecasting (its innovation recursion can
    # amplify arbitrarily); prefer interior optima when any exist.
    healthy = []
    for spec, fit in fitted:
        radius = max(_radius_eig(fit.params.ar, spec.m), _radius_eig(fit.params.ma, spec.m))
        if radius < 0.995:
            healthy.append((spec, fit))
    if healthy and len(healthy) < len(fitted):
        dropped = [
            f"(p={s.p}, q={s.q}, s={s.s})" for s, f in fitted if (s, f) not in healthy
        ]
        warnings.warn(
            "order candidates pinned at the stability boundary were not ranked: "
            + ", ".join(dropped),
            stacklevel=2,
        )
    candidates = healthy if healthy else fitted
    # Rank on a common conditioning sample: each fit's own likelihood sums over
    # T - max(p, q) terms, so raw AICs would reward higher orders merely for
    # conditioning on more rows.  The returned fit keeps its own-sample AIC.
    t0_common = max(max(spec.p, spec.q) for spec, _ in candidates)
    common_aic = []
    for spec, fit in candidates:
        skip = t0_common - max(spec.p, spec.q)
        eps = fit.residuals.values[skip:]
        common_aic.append(2.0 * spec.k_params - 2.0 * _loglik_core(fit.params, eps))
    return pick_best(candidates, aic_values=common_aic)
