"""Maximum-likelihood parameter extraction by fixed-step gradient descent.

All three models have a Gaussian likelihood whose mean is linear in the
non-sigma parameters, so a fit works on a design matrix ``X`` (one column
per mean parameter) and a target ``y`` (path loss minus any fixed offset):

    mu_z - l_z = X[z] @ theta - y[z]
    NLL = Z ln(sigma sqrt(2 pi)) + sum_z (l_z - mu_z)^2 / (2 sigma^2)

The gradient with respect to a mean parameter is
``sum_z (mu_z - l_z) X[z, k] / sigma^2`` and with respect to sigma
``sum_z 1/sigma - (l_z - mu_z)^2 / sigma^3``. For AMPLE the columns are
(1, D_1..D_M, p, 10 log10 f); for CI the single column is 10 log10(d/d0)
with the free-space term moved into the offset; for ABG the columns are
(10 log10 d, 1, 10 log10 f).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateDesign, Diverged, EmptyDataset, NonPositiveSigma, RegionCountMismatch
from .models import (AbgParams, AmpleParams, CiParams, ModelParams, builtin_preset, collapse_line,
                     fspl, model_name)

log = logging.getLogger(__name__)

DEFAULT_STEP = 2e-6


@dataclass(frozen=True, eq=False)
class FitDataset:
    """Precomputed per-point features for one model family."""

    model: str
    design: np.ndarray
    target: np.ndarray
    offset: np.ndarray
    columns: tuple[str, ...]
    d0: float = 1.0

    def __post_init__(self):
        design = np.ascontiguousarray(self.design, dtype=np.float64)
        target = np.ascontiguousarray(self.target, dtype=np.float64)
        offset = np.ascontiguousarray(self.offset, dtype=np.float64)
        if design.ndim != 2 or design.shape[0] == 0:
            raise EmptyDataset("dataset has no points")
        if target.shape != (design.shape[0],) or offset.shape != target.shape:
            raise ValueError("design, target and offset disagree in length")
        if not (np.all(np.isfinite(design)) and np.all(np.isfinite(target))):
            raise ValueError("non-finite feature rows")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "offset", offset)

    def __len__(self):
        return self.design.shape[0]

    @property
    def path_loss(self) -> np.ndarray:
        return self.target + self.offset

    def subset(self, idx) -> "FitDataset":
        return FitDataset(self.model, self.design[idx], self.target[idx], self.offset[idx],
                          self.columns, self.d0)

    def predict(self, params: ModelParams) -> np.ndarray:
        """Mean path loss for every row."""
        _check_model(params, self)
        return self.offset + self.design @ params.mean_vector()


def ample_features(lines, freq, path_loss, M: int = 4) -> FitDataset:
    """Rows (1, D_1..D_M, p, 10 log10 f) from line matrices."""
    freq = np.asarray(freq, dtype=float)
    Z = len(lines)
    X = np.empty((Z, M + 3))
    X[:, 0] = 1.0
    for z, line in enumerate(lines):
        X[z, 1:M + 1] = collapse_line(line, M)
        X[z, M + 1] = line.p
    X[:, M + 2] = 10.0 * np.log10(freq)
    l = np.asarray(path_loss, dtype=float)
    cols = ("A",) + tuple(f"n{m}" for m in range(1, M + 1)) + ("X", "gamma")
    return FitDataset("ample", X, l, np.zeros(Z), cols)


def ample_features_from_D(D, p, freq, path_loss) -> FitDataset:
    D = np.atleast_2d(np.asarray(D, dtype=float))
    Z, M = D.shape
    X = np.column_stack([np.ones(Z), D, np.asarray(p, dtype=float), 10.0 * np.log10(freq)])
    cols = ("A",) + tuple(f"n{m}" for m in range(1, M + 1)) + ("X", "gamma")
    return FitDataset("ample", X, np.asarray(path_loss, dtype=float), np.zeros(Z), cols)


def ci_features(freq, d, path_loss, d0: float = 1.0) -> FitDataset:
    """Single column 10 log10(d/d0); target is l - FSPL(f, d0)."""
    freq = np.asarray(freq, dtype=float)
    d = np.asarray(d, dtype=float)
    off = np.broadcast_to(fspl(freq, d0), d.shape).astype(float)
    b = 10.0 * np.log10(d / d0)
    l = np.asarray(path_loss, dtype=float)
    return FitDataset("ci", b[:, None], l - off, off, ("n",), d0)


def abg_features(freq, d, path_loss) -> FitDataset:
    freq = np.asarray(freq, dtype=float)
    d = np.asarray(d, dtype=float)
    X = np.column_stack([10.0 * np.log10(d), np.ones(d.size), 10.0 * np.log10(freq)])
    return FitDataset("abg", X, np.asarray(path_loss, dtype=float), np.zeros(d.size),
                      ("alpha", "beta", "gamma_abg"))


def features_for(model: str, points, M: int = 4, d0: float = 1.0) -> FitDataset:
    """FitDataset from SamplePoints; AMPLE requires ``point.line``."""
    if not points:
        raise EmptyDataset("no points")
    freq = np.array([p.freq for p in points])
    l = np.array([p.path_loss for p in points])
    if model == "ample":
        lines = [p.line for p in points]
        if any(line is None for line in lines):
            raise ValueError("AMPLE features need line matrices; attach geometry first")
        return ample_features(lines, freq, l, M)
    d = np.array([p.distance3d for p in points])
    if model == "ci":
        return ci_features(freq, d, l, d0)
    if model == "abg":
        return abg_features(freq, d, l)
    raise ValueError(f"unknown model {model!r}")


@dataclass(frozen=True)
class FitConfig:
    step_size: float = DEFAULT_STEP
    max_iters: int = 2_000_000
    grad_tol: float = 1e-4
    init: ModelParams | None = None
    sigma_floor: float = 1e-3
    trace_every: int = 10_000

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.grad_tol > 0 or not self.sigma_floor > 0:
            raise ValueError("grad_tol and sigma_floor must be positive")


@dataclass
class FitResult:
    params: ModelParams
    final_nll: float
    iters: int
    converged: bool
    grad_norm: float
    rank_deficient: bool = False
    rejected_steps: int = 0
    final_step: float = DEFAULT_STEP
    trace: list = field(default_factory=list)


def default_init(model: str, M: int = 4, d0: float = 1.0) -> ModelParams:
    if model == "ample":
        params = builtin_preset("ample_uma_nlos").params
        if M != params.M:
            params = AmpleParams(params.A, tuple(params.n[:M]) + (2.0,) * max(0, M - params.M),
                                 params.X, params.gamma, params.sigma)
        return params
    if model == "ci":
        return CiParams(n=2.0, sigma=5.0, d0=d0)
    if model == "abg":
        return AbgParams(alpha=3.0, beta=20.0, gamma_abg=2.0, sigma=5.0)
    raise ValueError(f"unknown model {model!r}")


def _check_model(params, data):
    name = model_name(params)
    if name != data.model:
        raise ValueError(f"{name} parameters used with {data.model} features")
    if data.design.shape[1] != params.mean_vector().size:
        raise RegionCountMismatch(
            f"parameters have {params.mean_vector().size} mean terms, data has {data.design.shape[1]}")


def _rebuild(model, theta, sigma, data):
    if model == "ample":
        return AmpleParams.from_vector(theta, sigma)
    if model == "ci":
        return CiParams.from_vector(theta, sigma, data.d0)
    return AbgParams.from_vector(theta, sigma)


def nll(params: ModelParams, data: FitDataset) -> float:
    """Negative log-likelihood of the data under Gaussian shadowing."""
    _check_model(params, data)
    if not params.sigma > 0:
        raise NonPositiveSigma("sigma must be positive")
    value, _ = kernels.nll_grad(data.design, data.target, params.mean_vector(), float(params.sigma))
    return float(value)


def grad(params: ModelParams, data: FitDataset) -> np.ndarray:
    """Analytic NLL gradient, ordered as the mean parameters then sigma."""
    _check_model(params, data)
    if not params.sigma > 0:
        raise NonPositiveSigma("sigma must be positive")
    _, g = kernels.nll_grad(data.design, data.target, params.mean_vector(), float(params.sigma))
    return np.asarray(g)


nll_ample = nll_ci = nll_abg = nll
grad_ample = grad_ci = grad_abg = grad


def _fit(model: str, data: FitDataset, cfg: FitConfig) -> FitResult:
    if len(data) == 0:
        raise EmptyDataset("no points to fit")
    if data.model != model:
        raise ValueError(f"expected {model} features, got {data.model}")
    init = cfg.init if cfg.init is not None else default_init(model, data.design.shape[1] - 3, data.d0)
    _check_model(init, data)
    K = data.design.shape[1]
    rank_deficient = bool(np.linalg.matrix_rank(data.design) < K)
    if rank_deficient:
        log.warning("%s fit: design matrix is rank deficient; parameters are not all identifiable",
                    model)
    out = kernels.descend(data.design, data.target, init.mean_vector(), float(init.sigma),
                          float(cfg.step_size), int(cfg.max_iters), float(cfg.grad_tol),
                          float(cfg.sigma_floor), int(cfg.trace_every))
    if not out["finite"]:
        raise Diverged(f"{model} fit: NLL is not finite at the initial point")
    g = np.asarray(out["grad"])
    gnorm = float(np.max(np.abs(g[:-1]))) if K else 0.0
    if not (out["sigma"] <= cfg.sigma_floor and g[-1] > 0):
        gnorm = max(gnorm, abs(float(g[-1])))
    if not all(math.isfinite(v) for v in out["theta"]):
        raise Diverged(f"{model} fit produced non-finite parameters")
    if out["stalled"]:
        log.warning("%s fit: step size underflowed after %d iterations", model, out["iters"])
    params = _rebuild(model, out["theta"], out["sigma"], data)
    return FitResult(params=params, final_nll=float(out["nll"]), iters=int(out["iters"]),
                     converged=bool(out["converged"]), grad_norm=gnorm,
                     rank_deficient=rank_deficient, rejected_steps=int(out["rejected"]),
                     final_step=float(out["step"]), trace=list(out["trace"]))


def fit_ample(data: FitDataset, cfg: FitConfig = FitConfig()) -> FitResult:
    return _fit("ample", data, cfg)


def fit_ci(data: FitDataset, cfg: FitConfig = FitConfig()) -> FitResult:
    return _fit("ci", data, cfg)


def fit_abg(data: FitDataset, cfg: FitConfig = FitConfig()) -> FitResult:
    return _fit("abg", data, cfg)


def fit_model(model: str, data: FitDataset, cfg: FitConfig = FitConfig()) -> FitResult:
    return _fit(model, data, cfg)


def fit_ci_closed_form(data: FitDataset) -> CiParams:
    """Exact Gaussian MLE of the CI model.

    With a = l - FSPL(f, d0) and b = 10 log10(d/d0), setting the gradient to
    zero gives n = sum(a b) / sum(b^2) and sigma^2 = mean((a - n b)^2).
    """
    if data.model != "ci":
        raise ValueError("closed form needs CI features")
    a = data.target
    b = data.design[:, 0]
    bb = float(b @ b)
    if bb == 0.0:
        raise DegenerateDesign("every point sits at the reference distance")
    n = float(a @ b) / bb
    r = a - n * b
    return CiParams(n=n, sigma=math.sqrt(float(r @ r) / a.size), d0=data.d0)
