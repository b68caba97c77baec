"""Score fusion and countermeasure metrics (EER, min t-DCF, DET points).

Threshold convention: a trial is accepted as bonafide when its score is
``>= t``. Operating points are evaluated at ``-inf``, at the midpoint
between every pair of adjacent distinct scores, and at ``+inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import ScoreSet

TDCF_KEYS = (
    "p_target", "p_nontarget", "p_spoof",
    "c_miss_asv", "c_fa_asv", "c_miss_cm", "c_fa_cm",
    "p_miss_asv", "p_fa_asv", "p_miss_spoof_asv",
)


@dataclass(frozen=True)
class FusionWeights:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta"):
            _check_weight(getattr(self, name), name)


@dataclass(frozen=True)
class TdcfCostModel:
    """Cost model of the ASVspoof 2019 tandem detection cost function.

    ``p_target``/``p_nontarget``/``p_spoof`` are the trial priors; the
    ``p_*_asv`` terms are the ASV system's error rates at its fixed
    operating point and must come from an ASV evaluation.
    """

    p_target: float
    p_nontarget: float
    p_spoof: float
    c_miss_asv: float
    c_fa_asv: float
    c_miss_cm: float
    c_fa_cm: float
    p_miss_asv: float
    p_fa_asv: float
    p_miss_spoof_asv: float

    def __post_init__(self):
        for name in ("p_target", "p_nontarget", "p_spoof"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if abs(self.p_target + self.p_nontarget + self.p_spoof - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")
        for name in ("c_miss_asv", "c_fa_asv", "c_miss_cm", "c_fa_cm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("p_miss_asv", "p_fa_asv", "p_miss_spoof_asv"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def c1(self) -> float:
        return self.p_target * (self.c_miss_cm - self.c_miss_asv * self.p_miss_asv) - (
            self.p_nontarget * self.c_fa_asv * self.p_fa_asv
        )

    @property
    def c2(self) -> float:
        return self.c_fa_cm * self.p_spoof * (1.0 - self.p_miss_spoof_asv)

    @classmethod
    def from_mapping(cls, values: dict) -> TdcfCostModel:
        missing = [k for k in TDCF_KEYS if k not in values]
        if missing:
            raise ValueError(f"cost model missing keys: {', '.join(missing)}")
        return cls(**{k: float(values[k]) for k in TDCF_KEYS})


@dataclass
class DetCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray


def read_key_value(path) -> dict[str, str]:
    """Parse a ``key=value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_cost_model(path) -> TdcfCostModel:
    return TdcfCostModel.from_mapping(read_key_value(path))


# --- fusion ------------------------------------------------------------------


def _check_weight(w: float, name: str = "weight") -> None:
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {w}")


def fuse(a: ScoreSet, b: ScoreSet, weight: float) -> ScoreSet:
    """Per-trial ``weight * a + (1 - weight) * b``; trial order follows ``a``."""
    _check_weight(weight)
    for tid in a.entries:
        if tid not in b:
            raise ValueError(f"trial {tid!r} missing from second score set")
    for tid in b.entries:
        if tid not in a:
            raise ValueError(f"trial {tid!r} missing from first score set")
    out = ScoreSet()
    for tid, ea in a.entries.items():
        eb = b[tid]
        out.add(tid, weight * ea.score + (1.0 - weight) * eb.score, ea.label or eb.label)
    return out


def fuse_stage1(q_imag_low: ScoreSet, q_real_high: ScoreSet, alpha: float = 0.5) -> ScoreSet:
    return fuse(q_imag_low, q_real_high, alpha)


def fuse_stage2(q1: ScoreSet, q_f0: ScoreSet, beta: float = 0.5) -> ScoreSet:
    return fuse(q1, q_f0, beta)


def fuse_two_stage(q_imag_low, q_real_high, q_f0, weights: FusionWeights = FusionWeights()) -> ScoreSet:
    return fuse_stage2(fuse_stage1(q_imag_low, q_real_high, weights.alpha), q_f0, weights.beta)


# --- operating points --------------------------------------------------------


def operating_points(bona: np.ndarray, spoof: np.ndarray):
    """Return (thresholds, far, frr) over the midpoint sweep, thresholds ascending."""
    bona = np.asarray(bona, dtype=np.float64)
    spoof = np.asarray(spoof, dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise ValueError("need at least one bonafide and one spoof trial")
    levels = np.unique(np.concatenate([bona, spoof]))
    mids = levels[:-1] + 0.5 * np.diff(levels)
    thresholds = np.concatenate([[-np.inf], mids, [np.inf]])
    # rates are counted against the distinct score levels, not the midpoint
    # values, so they depend only on the rank order of the scores
    b_sorted = np.sort(bona)
    s_sorted = np.sort(spoof)
    n_below_b = np.searchsorted(b_sorted, levels, side="left")
    n_below_s = np.searchsorted(s_sorted, levels, side="left")
    frr = np.concatenate([[0], n_below_b[1:], [bona.size]]) / bona.size
    far = 1.0 - np.concatenate([[0], n_below_s[1:], [spoof.size]]) / spoof.size
    return thresholds, far, frr


def det_points(scores: ScoreSet) -> DetCurve:
    bona, spoof = scores.split()
    thr, far, frr = operating_points(bona, spoof)
    return DetCurve(thr, far, frr)


def eer_from_arrays(bona, spoof) -> tuple[float, float]:
    thr, far, frr = operating_points(bona, spoof)
    diff = far - frr  # non-increasing, +1 at -inf, -1 at +inf
    exact = np.flatnonzero(diff == 0)
    if exact.size:
        i = int(exact[0])
        return float(far[i]), float(thr[i])
    i = int(np.flatnonzero(diff > 0)[-1])
    j = i + 1
    lam = diff[i] / (diff[i] - diff[j])
    eer = far[i] + lam * (far[j] - far[i])
    if np.isfinite(thr[i]) and np.isfinite(thr[j]):
        t = thr[i] + lam * (thr[j] - thr[i])
    else:
        t = thr[j] if np.isfinite(thr[j]) else thr[i]
    return float(eer), float(t)


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Where no swept threshold gives FAR == FRR exactly, the crossing is
    linearly interpolated between the two straddling operating points.
    """
    return eer_from_arrays(*scores.split())


def min_tdcf_from_arrays(bona, spoof, cost: TdcfCostModel) -> tuple[float, float]:
    c1, c2 = cost.c1, cost.c2
    if c1 <= 0 or c2 <= 0:
        raise ValueError(f"degenerate cost model: C1={c1:g}, C2={c2:g}")
    thr, far, frr = operating_points(bona, spoof)
    tdcf = (c1 * frr + c2 * far) / min(c1, c2)
    i = int(np.argmin(tdcf))
    return float(tdcf[i]), float(thr[i])


def compute_min_tdcf(scores: ScoreSet, cost: TdcfCostModel) -> tuple[float, float]:
    """Minimum normalized t-DCF over the threshold sweep, and its threshold."""
    return min_tdcf_from_arrays(*scores.split(), cost)
