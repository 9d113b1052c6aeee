"""Path loss predictors: AMPLE, close-in (CI) and alpha-beta-gamma (ABG).

All predictors return the mean path loss in dB; shadowing is drawn
separately with :func:`sample_shadowing`. Frequencies are in GHz and
distances in meters throughout.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DistanceBelowReference, InvalidLine, PresetError, RegionCountMismatch
from .regionmap import GeoPoint, LineMatrix, Los

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class AmpleParams:
    A: float
    n: tuple[float, ...]
    X: float
    gamma: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(float(v) for v in self.n))
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def M(self) -> int:
        return len(self.n)

    def mean_vector(self) -> np.ndarray:
        """Coefficients in design-column order: A, n_1..n_M, X, gamma."""
        return np.array([self.A, *self.n, self.X, self.gamma])

    @classmethod
    def from_vector(cls, theta, sigma):
        theta = [float(v) for v in theta]
        return cls(A=theta[0], n=tuple(theta[1:-2]), X=theta[-2], gamma=theta[-1], sigma=float(sigma))


@dataclass(frozen=True)
class CiParams:
    n: float
    sigma: float
    d0: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")

    def mean_vector(self) -> np.ndarray:
        return np.array([self.n])

    @classmethod
    def from_vector(cls, theta, sigma, d0=1.0):
        return cls(n=float(theta[0]), sigma=float(sigma), d0=d0)


@dataclass(frozen=True)
class AbgParams:
    alpha: float
    beta: float
    gamma_abg: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def mean_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma_abg])

    @classmethod
    def from_vector(cls, theta, sigma):
        return cls(alpha=float(theta[0]), beta=float(theta[1]), gamma_abg=float(theta[2]),
                   sigma=float(sigma))


ModelParams = Union[AmpleParams, CiParams, AbgParams]


def model_name(params: ModelParams) -> str:
    return {AmpleParams: "ample", CiParams: "ci", AbgParams: "abg"}[type(params)]


@dataclass(frozen=True)
class SamplePoint:
    """One transmitter-receiver observation."""

    tx: GeoPoint
    rx: GeoPoint
    distance3d: float
    freq: float
    path_loss: float
    los: Los | None = None
    line: LineMatrix | None = field(default=None, compare=False)
    tag: str = ""
    bin_label: int | None = None

    def __post_init__(self):
        if not self.distance3d > 0:
            raise ValueError("distance3d must be positive")
        if not self.freq > 0:
            raise ValueError("freq must be positive (GHz)")
        if not math.isfinite(self.path_loss):
            raise ValueError("path_loss must be finite")


# --- predictors ------------------------------------------------------------

def fspl(freq, d0=1.0):
    """Free-space path loss [dB] at distance ``d0`` [m] and ``freq`` [GHz]."""
    freq = np.asarray(freq, dtype=float)
    if np.any(freq <= 0) or not d0 > 0:
        raise ValueError("freq and d0 must be positive")
    out = 20.0 * np.log10(4.0 * math.pi * freq * 1e9 * d0 / SPEED_OF_LIGHT)
    return float(out) if out.ndim == 0 else out


def collapse_line(line: LineMatrix, M: int) -> np.ndarray:
    """Per-region-type log-distance weights D_1..D_M of a line matrix.

    Each segment after the reference segment contributes
    10*log10(cum_after / cum_before) to its region's weight.
    """
    if not line.codes or line.codes[0] != 0 or not line.lengths[0] > 0:
        raise InvalidLine("line must start with the reference segment (code 0, d0 > 0)")
    D = np.zeros(M)
    cum = line.lengths[0]
    for code, length in zip(line.codes[1:], line.lengths[1:]):
        if code < 1:
            raise InvalidLine(f"segment code {code} after the reference segment")
        if code > M:
            raise RegionCountMismatch(f"line references region {code} but the model has M = {M}")
        if not length > 0:
            raise InvalidLine("segment lengths must be positive")
        nxt = cum + length
        D[code - 1] += 10.0 * math.log10(nxt / cum)
        cum = nxt
    return D


def predict_ample_features(params: AmpleParams, D, p, freq):
    """Vectorized AMPLE mean from precomputed weights ``D`` (Z x M)."""
    D = np.asarray(D, dtype=float)
    if D.shape[-1] != params.M:
        raise RegionCountMismatch(f"features have {D.shape[-1]} regions, params have {params.M}")
    return (params.A + D @ np.asarray(params.n) + np.asarray(p, dtype=float) * params.X
            + 10.0 * params.gamma * np.log10(freq))


def predict_ample(params: AmpleParams, line: LineMatrix, freq: float) -> float:
    D = collapse_line(line, params.M)
    return float(params.A + D @ np.asarray(params.n) + line.p * params.X
                 + 10.0 * params.gamma * math.log10(freq))


def predict_ci(params: CiParams, freq, d):
    d = np.asarray(d, dtype=float)
    if np.any(d < params.d0):
        raise DistanceBelowReference(f"distance below d0 = {params.d0} m")
    out = fspl(freq, params.d0) + 10.0 * params.n * np.log10(d / params.d0)
    return float(out) if np.ndim(out) == 0 else out


def predict_abg(params: AbgParams, freq, d):
    d = np.asarray(d, dtype=float)
    freq = np.asarray(freq, dtype=float)
    if np.any(d <= 0) or np.any(freq <= 0):
        raise ValueError("distance and frequency must be positive")
    out = 10.0 * params.alpha * np.log10(d) + params.beta + 10.0 * params.gamma_abg * np.log10(freq)
    return float(out) if np.ndim(out) == 0 else out


def sample_shadowing(sigma: float, rng: np.random.Generator) -> float:
    """One zero-mean Gaussian shadowing draw [dB]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return 0.0
    return float(sigma * rng.standard_normal())


# --- preset files ----------------------------------------------------------

_CI_KEYS = ("n", "sigma", "d0")
_ABG_KEYS = ("alpha", "beta", "gamma_abg", "sigma")
_META_KEYS = ("model", "scenario", "environment")


def _ample_keys(M):
    return ("A",) + tuple(f"n{m}" for m in range(1, M + 1)) + ("X", "gamma", "sigma")


@dataclass(frozen=True)
class Preset:
    params: ModelParams
    scenario: str = ""
    environment: str = ""


def parse_preset(text: str, source: str = "<preset>") -> Preset:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise PresetError(f"{source}:{lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if key in values:
            raise PresetError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    model = values.pop("model", None)
    scenario = values.pop("scenario", "")
    environment = values.pop("environment", "")
    if model == "ample":
        M = sum(1 for k in values if k.startswith("n") and k[1:].isdigit())
        allowed = _ample_keys(M)
    elif model == "ci":
        allowed = _CI_KEYS
    elif model == "abg":
        allowed = _ABG_KEYS
    else:
        raise PresetError(f"{source}: model must be one of ample, ci, abg (got {model!r})")
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise PresetError(f"{source}: unknown keys {unknown}")
    required = [k for k in allowed if k != "d0"]
    missing = [k for k in required if k not in values]
    if missing:
        raise PresetError(f"{source}: missing keys {missing}")
    try:
        num = {k: float(v) for k, v in values.items()}
    except ValueError as exc:
        raise PresetError(f"{source}: {exc}") from exc
    if model == "ample":
        params = AmpleParams(A=num["A"], n=tuple(num[f"n{m}"] for m in range(1, M + 1)),
                             X=num["X"], gamma=num["gamma"], sigma=num["sigma"])
        if any(v < 0 for v in params.n):
            log.warning("%s: negative path loss exponent", source)
    elif model == "ci":
        params = CiParams(n=num["n"], sigma=num["sigma"], d0=num.get("d0", 1.0))
    else:
        params = AbgParams(alpha=num["alpha"], beta=num["beta"], gamma_abg=num["gamma_abg"],
                           sigma=num["sigma"])
    return Preset(params, scenario, environment)


def format_preset(preset: Preset | ModelParams) -> str:
    if not isinstance(preset, Preset):
        preset = Preset(preset)
    p = preset.params
    lines = [f"model = {model_name(p)}"]
    if preset.scenario:
        lines.append(f"scenario = {preset.scenario}")
    if preset.environment:
        lines.append(f"environment = {preset.environment}")
    if isinstance(p, AmpleParams):
        items = [("A", p.A)] + [(f"n{m}", v) for m, v in enumerate(p.n, 1)]
        items += [("X", p.X), ("gamma", p.gamma), ("sigma", p.sigma)]
    elif isinstance(p, CiParams):
        items = [("n", p.n), ("sigma", p.sigma), ("d0", p.d0)]
    else:
        items = [("alpha", p.alpha), ("beta", p.beta), ("gamma_abg", p.gamma_abg), ("sigma", p.sigma)]
    lines += [f"{k} = {v!r}" for k, v in items]
    return "\n".join(lines) + "\n"


def load_preset(path) -> Preset:
    path = Path(path)
    return parse_preset(path.read_text(), str(path))


def save_preset(preset: Preset | ModelParams, path) -> None:
    Path(path).write_text(format_preset(preset))


def builtin_presets() -> list[str]:
    root = resources.files("ample") / "data" / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


def builtin_preset(name: str) -> Preset:
    """Shipped presets, e.g. ``ample_uma_nlos`` or ``ci_uma_los``."""
    res = resources.files("ample") / "data" / "presets" / f"{name}.txt"
    if not res.is_file():
        raise PresetError(f"no built-in preset {name!r}; have {builtin_presets()}")
    return parse_preset(res.read_text(), name)
