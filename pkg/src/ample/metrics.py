"""Evaluation metrics: RMSE, MAE, AHRE, PMDE and mean time per point.

PMDE fits the best distribution (by AIC) to the predicted and the reference
path loss samples separately, then integrates the absolute difference of
the two fitted densities.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

from .errors import AllFamiliesFailed, EmptyInput, LengthMismatch, TooFewPoints

log = logging.getLogger(__name__)

FAMILIES = ("normal", "lognormal", "gamma", "weibull", "rayleigh", "ricean", "chisquare")
POSITIVE_FAMILIES = frozenset(FAMILIES[1:])
# family -> families that contain it as a special case (Rayleigh is Weibull
# with shape 2 and Ricean with nu = 0; chi-square is gamma with scale 2) or
# as a limit (Ricean with nu/sigma -> inf and gamma/lognormal with vanishing
# skew tend to the normal)
NESTING = {
    "normal": {"ricean", "gamma", "lognormal"},
    "rayleigh": {"weibull", "ricean"},
    "chisquare": {"gamma"},
}
LOS_RANGE = (80.0, 100.0)
NLOS_RANGE = (100.0, 120.0)
PMDE_NODES = 20_001
PMDE_HALF_WIDTH = 8.0
MIN_POINTS = 30


def _pair(pred, ref):
    pred = np.asarray(pred, dtype=float).ravel()
    ref = np.asarray(ref, dtype=float).ravel()
    if pred.size != ref.size:
        raise LengthMismatch(f"{pred.size} predictions vs {ref.size} references")
    if pred.size == 0:
        raise EmptyInput("no points")
    return pred, ref


def rmse(pred, ref) -> float:
    pred, ref = _pair(pred, ref)
    d = pred - ref
    return math.sqrt(float(d @ d) / d.size)


def mae(pred, ref) -> float:
    pred, ref = _pair(pred, ref)
    return float(np.mean(np.abs(pred - ref)))


def thr(pred, ref, lt: float) -> float:
    """Total hit rate [%]: share of points on the same side of ``lt`` (ties included)."""
    pred, ref = _pair(pred, ref)
    return 100.0 * float(np.mean(np.sign(pred - lt) == np.sign(ref - lt)))


@dataclass(frozen=True)
class ThrRange:
    lt_min: float
    lt_max: float
    step: float = 1.0

    def __post_init__(self):
        if self.lt_min > self.lt_max:
            raise ValueError("lt_min must not exceed lt_max")
        if not self.step > 0:
            raise ValueError("step must be positive")

    @property
    def thresholds(self) -> np.ndarray:
        n = int(math.floor((self.lt_max - self.lt_min) / self.step + 1e-9)) + 1
        return self.lt_min + self.step * np.arange(n)

    @classmethod
    def for_environment(cls, los: bool) -> "ThrRange":
        return cls(*(LOS_RANGE if los else NLOS_RANGE))


def ahre(pred, ref, thr_range: ThrRange = ThrRange(*NLOS_RANGE)) -> float:
    """Average deviation of the total hit rate from 100 % over a threshold grid."""
    pred, ref = _pair(pred, ref)
    return float(np.mean([100.0 - thr(pred, ref, lt) for lt in thr_range.thresholds]))


# --- distribution fitting ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class DistFit:
    family: str
    params: dict
    loglik: float
    k: int
    dist: object = field(repr=False)

    @property
    def aic(self) -> float:
        return 2.0 * self.k - 2.0 * self.loglik

    def pdf(self, x) -> np.ndarray:
        return self.dist.pdf(x)

    @property
    def mean(self) -> float:
        return _moments(self)[0]

    @property
    def std(self) -> float:
        return _moments(self)[1]


def _moments(fit: DistFit) -> tuple[float, float]:
    if fit.family == "ricean":
        # scipy's series overflows for large nu/sigma; use the Laguerre form
        # L_1/2(-K) = (1 + K) i0e(K/2) + K i1e(K/2) with K = nu^2 / (2 sigma^2)
        nu, s = fit.params["nu"], fit.params["sigma"]
        K = nu * nu / (2.0 * s * s)
        mean = s * math.sqrt(math.pi / 2.0) * ((1.0 + K) * special.i0e(K / 2.0) + K * special.i1e(K / 2.0))
        var = 2.0 * s * s + nu * nu - mean * mean
        return float(mean), math.sqrt(max(var, 0.0))
    return float(fit.dist.mean()), float(fit.dist.std())


def _fit_normal(x):
    mu, s = float(np.mean(x)), float(np.std(x))
    return {"mu": mu, "sigma": s}, stats.norm(mu, s)


def _fit_lognormal(x):
    lx = np.log(x)
    mu, s = float(np.mean(lx)), float(np.std(lx))
    return {"mu": mu, "sigma": s}, stats.lognorm(s, scale=math.exp(mu))


def _fit_gamma(x):
    m = float(np.mean(x))
    c = math.log(m) - float(np.mean(np.log(x)))
    if not c > 0:
        raise ValueError("degenerate sample")
    # Minka's starting point, then Newton on ln k - digamma(k) = c
    k = (3.0 - c + math.sqrt((c - 3.0) ** 2 + 24.0 * c)) / (12.0 * c)
    for _ in range(50):
        f = math.log(k) - special.digamma(k) - c
        fp = 1.0 / k - special.polygamma(1, k)
        step = f / fp
        k = max(k - step, k / 10.0)
        if abs(step) < 1e-12 * k:
            break
    k = float(k)
    return {"shape": k, "scale": m / k}, stats.gamma(k, scale=m / k)


def _fit_weibull(x):
    lx = np.log(x)
    mean_lx = float(np.mean(lx))
    top = float(lx.max())

    def score(k):
        w = np.exp(k * (lx - top))
        return float(w @ lx) / float(w.sum()) - 1.0 / k - mean_lx

    lo, hi = 1e-2, 1.0
    while score(hi) < 0:
        hi *= 2.0
        if hi > 1e5:
            raise ValueError("weibull shape does not converge")
    k = optimize.brentq(score, lo, hi, xtol=1e-12, rtol=1e-12)
    scale = math.exp(top) * float(np.mean(np.exp(k * (lx - top)))) ** (1.0 / k)
    return {"shape": k, "scale": scale}, stats.weibull_min(k, scale=scale)


def _fit_rayleigh(x):
    s = math.sqrt(float(x @ x) / (2.0 * x.size))
    return {"sigma": s}, stats.rayleigh(scale=s)


def _fit_ricean(x):
    """Profile MLE: the score equations give sigma^2 = (m2 - nu^2) / 2 and
    nu = mean(x I1/I0(x nu / sigma^2)), a 1-D root in nu on (0, sqrt(m2)).
    Without an interior root the maximum sits at nu = 0 (the Rayleigh limit).
    """
    m2 = float(x @ x) / x.size
    top = math.sqrt(m2)

    def h(nu):
        s2 = 0.5 * (m2 - nu * nu)
        z = x * (nu / s2)
        return float(np.mean(x * (special.i1e(z) / special.i0e(z)))) / nu - 1.0

    lo, hi = 1e-3 * top, top * (1.0 - 1e-12)
    nu = 0.0
    if h(lo) > 0:
        while h(hi) >= 0:  # only possible through rounding at the upper end
            hi = 0.5 * (hi + top)
            if hi >= top:
                raise ValueError("ricean fit failed")
        nu = optimize.brentq(h, lo, hi, xtol=1e-12 * top, rtol=1e-14)
    s = math.sqrt(0.5 * (m2 - nu * nu))
    if not s > 0:
        raise ValueError("ricean fit failed")
    return {"nu": nu, "sigma": s}, stats.rice(nu / s, scale=s)


def _inv_digamma(y):
    x = math.exp(y) + 0.5 if y >= -2.22 else -1.0 / (y + 0.5772156649015329)
    for _ in range(60):
        step = (special.digamma(x) - y) / special.polygamma(1, x)
        x -= step
        if abs(step) < 1e-14 * x:
            break
    return x


def _fit_chisquare(x):
    # one degree-of-freedom parameter: digamma(k/2) = mean(ln x) - ln 2
    k = 2.0 * float(_inv_digamma(float(np.mean(np.log(x))) - math.log(2.0)))
    if not (k > 0 and math.isfinite(k)):
        raise ValueError("chi-square fit failed")
    return {"df": k}, stats.chi2(k)


_FITTERS = {
    "normal": (_fit_normal, 2),
    "lognormal": (_fit_lognormal, 2),
    "gamma": (_fit_gamma, 2),
    "weibull": (_fit_weibull, 2),
    "rayleigh": (_fit_rayleigh, 1),
    "ricean": (_fit_ricean, 2),
    "chisquare": (_fit_chisquare, 1),
}


def fit_family(data, family: str) -> DistFit:
    x = np.asarray(data, dtype=float).ravel()
    fitter, k = _FITTERS[family]
    params, dist = fitter(x)
    loglik = float(np.sum(dist.logpdf(x)))
    if not math.isfinite(loglik):
        raise ValueError(f"{family} log-likelihood is not finite")
    return DistFit(family, params, loglik, k, dist)


def fit_distributions(data, families: Sequence[str] = FAMILIES) -> list[DistFit]:
    """Fit every candidate family that applies; failures are dropped with a notice."""
    x = np.asarray(data, dtype=float).ravel()
    if x.size < MIN_POINTS:
        raise TooFewPoints(f"need at least {MIN_POINTS} points, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data must be finite")
    if float(np.ptp(x)) == 0.0:
        raise AllFamiliesFailed("data has zero variance")
    positive = bool(np.all(x > 0))
    fits = []
    for family in families:
        if family in POSITIVE_FAMILIES and not positive:
            log.info("skipping %s: data has nonpositive values", family)
            continue
        try:
            fits.append(fit_family(x, family))
        except (ValueError, FloatingPointError, RuntimeError, ZeroDivisionError) as exc:
            log.info("skipping %s: %s", family, exc)
    if not fits:
        raise AllFamiliesFailed("no candidate family could be fitted")
    return fits


def fit_best_distribution(data, families: Sequence[str] = FAMILIES) -> DistFit:
    """Minimum-AIC family; ties go to fewer parameters, then family order."""
    fits = fit_distributions(data, families)
    order = {f: i for i, f in enumerate(families)}
    return min(fits, key=lambda f: (f.aic, f.k, order[f.family]))


def pdf_distance(fp: DistFit, fr: DistFit, nodes: int = PMDE_NODES,
                 half_width: float = PMDE_HALF_WIDTH) -> float:
    """Integral of |f_p - f_r| by the trapezoid rule, clamped to [0, 2]."""
    s = max(fp.std, fr.std)
    lo = min(fp.mean, fr.mean) - half_width * s
    hi = max(fp.mean, fr.mean) + half_width * s
    grid = np.linspace(lo, hi, nodes)
    with np.errstate(all="ignore"):
        diff = np.abs(np.nan_to_num(fp.pdf(grid)) - np.nan_to_num(fr.pdf(grid)))
    value = float(np.trapezoid(diff, grid)) if hasattr(np, "trapezoid") else float(np.trapz(diff, grid))
    return min(max(value, 0.0), 2.0)


def pmde(pred, ref, families: Sequence[str] = FAMILIES) -> float:
    return pmde_detail(pred, ref, families)[0]


def pmde_detail(pred, ref, families: Sequence[str] = FAMILIES) -> tuple[float, DistFit, DistFit]:
    fp = fit_best_distribution(pred, families)
    fr = fit_best_distribution(ref, families)
    return pdf_distance(fp, fr), fp, fr


def mean_sim_time(predict: Callable, data, rounds: int = 1000) -> float:
    """Mean wall time per data point [ns] over ``rounds`` full-dataset runs.

    ``predict(data)`` must evaluate every point; any geometry is expected to
    be precomputed in ``data``.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    Z = len(data)
    if Z == 0:
        raise EmptyInput("no points to time")
    clock = time.perf_counter_ns
    start = clock()
    for _ in range(rounds):
        predict(data)
    return (clock() - start) / (rounds * Z)


# --- reports -----------------------------------------------------------------

@dataclass
class MetricsReport:
    rmse: float
    mae: float
    ahre: float
    pmde: float
    dist_pred: DistFit
    dist_ref: DistFit
    thr_range: ThrRange
    n_points: int
    t_p: float | None = None
    model: str = ""

    def records(self) -> list[dict]:
        recs = [
            {"metric": "rmse", "value": self.rmse, "unit": "dB"},
            {"metric": "mae", "value": self.mae, "unit": "dB"},
            {"metric": "ahre", "value": self.ahre, "unit": "%",
             "lt_min": self.thr_range.lt_min, "lt_max": self.thr_range.lt_max,
             "step": self.thr_range.step},
            {"metric": "pmde", "value": self.pmde, "unit": "",
             "pred_family": self.dist_pred.family, "pred_params": self.dist_pred.params,
             "ref_family": self.dist_ref.family, "ref_params": self.dist_ref.params},
        ]
        if self.t_p is not None:
            recs.append({"metric": "t_p", "value": self.t_p, "unit": "ns"})
        for r in recs:
            r["model"] = self.model
            r["n_points"] = self.n_points
        return recs

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def to_table(self) -> str:
        rows = [
            ("RMSE [dB]", f"{self.rmse:.4f}"),
            ("MAE [dB]", f"{self.mae:.4f}"),
            (f"AHRE [%] ({self.thr_range.lt_min:g}-{self.thr_range.lt_max:g} dB)", f"{self.ahre:.4f}"),
            ("PMDE", f"{self.pmde:.4f}"),
            ("  best fit, predicted", self.dist_pred.family),
            ("  best fit, reference", self.dist_ref.family),
        ]
        if self.t_p is not None:
            rows.append(("t_p [ns]", f"{self.t_p:.2f}"))
        rows.append(("points", str(self.n_points)))
        width = max(len(r[0]) for r in rows)
        head = f"model: {self.model}\n" if self.model else ""
        return head + "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def evaluate(pred, ref, thr_range: ThrRange, model: str = "", t_p: float | None = None) -> MetricsReport:
    pred, ref = _pair(pred, ref)
    p, fp, fr = pmde_detail(pred, ref)
    return MetricsReport(rmse=rmse(pred, ref), mae=mae(pred, ref), ahre=ahre(pred, ref, thr_range),
                         pmde=p, dist_pred=fp, dist_ref=fr, thr_range=thr_range,
                         n_points=int(pred.size), t_p=t_p, model=model)


def abs_error_cdf(pred, ref) -> tuple[np.ndarray, np.ndarray]:
    pred, ref = _pair(pred, ref)
    err = np.sort(np.abs(pred - ref))
    return err, np.arange(1, err.size + 1) / err.size


def write_abs_error_cdf(path, pred, ref) -> None:
    """Two columns: absolute error [dB], empirical CDF."""
    err, cdf = abs_error_cdf(pred, ref)
    with Path(path).open("w") as fh:
        fh.write("# abs_error_db cdf\n")
        for e, c in zip(err, cdf):
            fh.write(f"{e:.6f} {c:.8f}\n")
