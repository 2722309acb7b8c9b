"""Post-processing: error-rate estimates, thresholds, suppression factors,
observed distance and ebit budgets."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .geometry import Protocol

log = logging.getLogger(__name__)

Z95 = float(norm.ppf(0.975))


@dataclass(frozen=True)
class LogicalErrorEstimate:
    p_L: float
    shots: int
    failures: int
    ci_lo: float
    ci_hi: float
    method: str = "wilson95"

    @property
    def stderr(self) -> float:
        if self.shots == 0:
            return math.inf
        return math.sqrt(max(self.p_L * (1 - self.p_L), 1e-300) / self.shots)

    def to_dict(self) -> dict:
        return {"p_L": self.p_L, "shots": self.shots, "failures": self.failures,
                "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "method": self.method}


def wilson_interval(failures: int, shots: int, z: float = Z95) -> tuple[float, float]:
    if shots <= 0:
        return (0.0, 1.0)
    phat = failures / shots
    denom = 1 + z * z / shots
    centre = (phat + z * z / (2 * shots)) / denom
    half = z * math.sqrt(phat * (1 - phat) / shots + z * z / (4 * shots * shots)) / denom
    lo = 0.0 if failures == 0 else max(0.0, centre - half)
    hi = 1.0 if failures == shots else min(1.0, centre + half)
    return (lo, hi)


def estimate_pL(shot_failures: int, shots: int) -> LogicalErrorEstimate:
    if shots <= 0:
        raise ValueError("shots must be positive")
    if not 0 <= shot_failures <= shots:
        raise ValueError("failures must lie in [0, shots]")
    lo, hi = wilson_interval(shot_failures, shots)
    p = shot_failures / shots
    return LogicalErrorEstimate(p, shots, shot_failures, min(lo, p), max(hi, p))


# -- observed distance ------------------------------------------------------------

def observed_distance(pL_at_low: float, pL_at_high: float, p_low: float = 0.001, p_high: float = 0.01) -> float:
    """d_obs from the log-log slope s of p_L versus p: d_obs = 2 s - 1."""
    if pL_at_low <= 0 or pL_at_high <= 0:
        raise ValueError("observed distance needs two positive error rates")
    slope = (math.log(pL_at_high) - math.log(pL_at_low)) / (math.log(p_high) - math.log(p_low))
    return 2 * slope - 1


# -- thresholds -------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdEstimate:
    value: float
    spread: float
    crossings: tuple  # ((d1, d2, p_cross), ...)

    def to_dict(self) -> dict:
        return {"value": self.value, "spread": self.spread, "crossings": [list(c) for c in self.crossings]}


def _crossing(curve_a, curve_b) -> float | None:
    """First p where two curves (lists of (p, p_L)) cross, interpolating log p_L
    linearly in log p on the common p grid."""
    pa = {p: v for p, v in curve_a}
    pb = {p: v for p, v in curve_b}
    grid = sorted(set(pa) & set(pb))
    pts = [(math.log(p), math.log(pa[p]) - math.log(pb[p])) for p in grid if pa[p] > 0 and pb[p] > 0]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if y0 == 0:
            return math.exp(x0)
        if y0 * y1 < 0 or y1 == 0:
            t = y0 / (y0 - y1)
            return math.exp(x0 + t * (x1 - x0))
    return None


def find_threshold(curves: dict) -> ThresholdEstimate:
    """Mean and spread of the crossings of consecutive-distance curves."""
    ds = sorted(curves)
    if len(ds) < 2:
        raise ValueError("need at least two distances")
    crossings = []
    for a, b in zip(ds, ds[1:]):
        if len(curves[a]) < 3 or len(curves[b]) < 3:
            raise ValueError("need at least three noise points per curve")
        p = _crossing(sorted(curves[a]), sorted(curves[b]))
        if p is not None:
            crossings.append((a, b, p))
    if not crossings:
        raise ValueError("no bracketing crossing found")
    vals = np.array([c[2] for c in crossings])
    spread = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return ThresholdEstimate(float(vals.mean()), spread, tuple(crossings))


# -- suppression factors ------------------------------------------------------------

@dataclass
class SuppressionFactors:
    axis: str
    ratios: dict  # (key, key + 2) -> ratio per step of 2
    mean: float
    std: float
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "ratios": {f"{a}->{b}": r for (a, b), r in self.ratios.items()},
                "mean": self.mean, "std": self.std, "excluded": [list(x) for x in self.excluded]}


def ebits_per_round(protocol: Protocol | str, d: int) -> int:
    protocol = Protocol.parse(protocol)
    if protocol is Protocol.BELL_TELEPORTED:
        return d
    if protocol is Protocol.BENCHMARK_TELEPORTED:
        return 2 * d - 1
    return 0


def ebit_budget(protocol: Protocol | str, d: int) -> int:
    """Ebits per round a protocol needs when its crossing operations are
    teleported: d for the Bell-measurement protocols, 2d - 1 for the benchmark."""
    return d if Protocol.parse(protocol).is_bell else 2 * d - 1


def remap_to_ebits(protocol: Protocol | str, estimates: dict) -> dict:
    """{d: estimate} -> {ebit budget per round: estimate}."""
    return {ebit_budget(protocol, d): est for d, est in estimates.items()}


def _value(x) -> float:
    return x.p_L if isinstance(x, LogicalErrorEstimate) else float(x)


def lambda_factors(estimates: dict, axis: str = "Distance") -> SuppressionFactors:
    """Suppression per step of two along the chosen axis.

    ``estimates`` maps distance (axis ``Distance``) or ebit budget (axis
    ``Ebit``) to an estimate.  Consecutive keys further apart than two are
    converted to a per-two-step factor geometrically, so a benchmark ebit
    pair (2d - 1, 2d + 3) gives the square root of its distance ratio.
    """
    if axis not in ("Distance", "Ebit"):
        raise ValueError("axis must be Distance or Ebit")
    keys = sorted(estimates)
    ratios, excluded = {}, []
    for a, b in zip(keys, keys[1:]):
        pa, pb = _value(estimates[a]), _value(estimates[b])
        if pa <= 0 or pb <= 0:
            log.warning("zero error estimate between %s and %s excluded", a, b)
            excluded.append((a, b))
            continue
        ratios[(a, b)] = (pa / pb) ** (2.0 / (b - a))
    vals = np.array(list(ratios.values()))
    mean = float(vals.mean()) if len(vals) else math.nan
    std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return SuppressionFactors(axis, ratios, mean, std, excluded)


# -- exponential fits and ebit cost ------------------------------------------------------

@dataclass(frozen=True)
class ExponentialFit:
    """log p_L(d) = intercept + slope * d."""

    intercept: float
    slope: float
    measured: tuple  # ((d, p_L), ...)

    def __call__(self, d: float) -> float:
        return math.exp(self.intercept + self.slope * d)

    @property
    def lambda_d(self) -> float:
        return math.exp(-2 * self.slope)

    def distance_for(self, pL_target: float) -> float:
        """Real-valued distance where the fit reaches the target."""
        return (math.log(pL_target) - self.intercept) / self.slope

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "slope": self.slope, "lambda_d": self.lambda_d,
                "measured": [list(m) for m in self.measured]}


def fit_exponential(estimates: dict) -> ExponentialFit:
    """Inverse-variance weighted least squares of log p_L against d."""
    pts = [(d, e) for d, e in sorted(estimates.items()) if _value(e) > 0]
    if len(pts) < 3:
        raise ValueError("exponential fit needs at least three distances with failures")
    ds = np.array([d for d, _ in pts], dtype=float)
    ys = np.array([math.log(_value(e)) for _, e in pts])
    w = []
    for _, e in pts:
        if isinstance(e, LogicalErrorEstimate) and e.failures > 0:
            w.append(e.failures * (1 - e.p_L))  # 1 / var(log p_L)
        else:
            w.append(1.0)
    w = np.array(w)
    A = np.stack([np.ones_like(ds), ds], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], ys * sw, rcond=None)
    return ExponentialFit(float(coef[0]), float(coef[1]), tuple((int(d), _value(e)) for d, e in pts))


def ebit_cost_for_target(pL_target: float, fits: dict) -> dict:
    """Smallest odd distance meeting ``pL_target`` for each protocol fit.

    ``fits`` maps protocol -> ExponentialFit.  Measured points are used
    as they are; the fit only extrapolates beyond them.  Returns protocol ->
    ``(d, ebits per round, real-valued distance from the fit)``.
    """
    out = {}
    for protocol, fit in fits.items():
        if not isinstance(fit, ExponentialFit):
            raise ValueError("fits must be ExponentialFit instances")
        if fit.slope >= 0:
            raise ValueError(f"{protocol}: fitted error rate does not decrease with distance")
        measured = dict(fit.measured)
        d = 3
        while True:
            value = measured[d] if d in measured else fit(d)
            if value <= pL_target * (1 + 1e-12):
                break
            d += 2
            if d > 10_001:
                raise ValueError("target unreachable")
        out[protocol] = (d, ebit_budget(protocol, d), fit.distance_for(pL_target))
    return out


def ebit_saving(bell_ebits: float, benchmark_ebits: float) -> float:
    return 1 - bell_ebits / benchmark_ebits
