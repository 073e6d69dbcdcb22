"""Detection metrics: DET operating points, EER, minimum detection cost.

Conventions, pinned because they change results on small trial sets:
  * a trial is accepted iff score >= threshold (ties accept);
  * DET thresholds are -inf, every distinct score ascending, +inf, so the
    accept-all and reject-all endpoints are always present;
  * P_miss = #(targets below threshold) / #targets,
    P_fa  = #(nontargets at or above threshold) / #nontargets;
  * EER interpolates linearly between the two operating points straddling
    the P_miss = P_fa crossing of the stepwise curve;
  * minDCF is normalized by the better of the accept-all / reject-all costs.

``brute_force_*`` recompute everything by looping over candidate thresholds
and recounting each trial, O(N^2); they exist to cross-check the vectorized
path and are kept deliberately independent of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateError, DimensionError, NumericalError


@dataclass(frozen=True)
class ScoredTrials:
    """Parallel score/label arrays; label True marks a target trial."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=bool)
        if scores.ndim != 1 or scores.shape != labels.shape:
            raise DimensionError(
                f"scores {scores.shape} and labels {labels.shape} must be "
                "equal-length vectors")
        if scores.size == 0:
            raise DimensionError("empty trial set")
        if not np.all(np.isfinite(scores)):
            raise NumericalError("non-finite trial scores")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def require_both_classes(self):
        if not self.labels.any() or self.labels.all():
            raise DegenerateError("need both target and nontarget trials")


@dataclass(frozen=True)
class DetCurve:
    """Operating points ordered by ascending threshold."""

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray


def compute_det(trials: ScoredTrials) -> DetCurve:
    trials.require_both_classes()
    tgt = np.sort(trials.scores[trials.labels])
    non = np.sort(trials.scores[~trials.labels])
    thresholds = np.concatenate(([-np.inf], np.unique(trials.scores), [np.inf]))
    p_miss = np.searchsorted(tgt, thresholds, side="left") / tgt.size
    p_fa = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    return DetCurve(thresholds, p_miss, p_fa)


def _eer_from_points(p_miss, p_fa) -> float:
    # First index where the miss curve meets or passes the false-alarm
    # curve; linear interpolation from the previous point.
    for i in range(len(p_miss)):
        d = p_miss[i] - p_fa[i]
        if d >= 0.0:
            if i == 0 or d == 0.0:
                return float(p_miss[i])
            d_prev = p_miss[i - 1] - p_fa[i - 1]
            t = d_prev / (d_prev - d)
            return float(p_miss[i - 1] + t * (p_miss[i] - p_miss[i - 1]))
    raise NumericalError("miss and false-alarm curves never cross")


def compute_eer(trials: ScoredTrials) -> float:
    det = compute_det(trials)
    return _eer_from_points(det.p_miss, det.p_fa)


def _dcf_normalizer(p_tar, c_miss, c_fa) -> float:
    return min(c_miss * p_tar, c_fa * (1.0 - p_tar))


def compute_min_dcf(trials: ScoredTrials, p_tar: float = 1e-3,
                    c_miss: float = 1.0, c_fa: float = 1.0) -> float:
    if not 0.0 < p_tar < 1.0:
        raise DegenerateError(f"p_tar must lie in (0, 1), got {p_tar}")
    det = compute_det(trials)
    costs = c_miss * p_tar * det.p_miss + c_fa * (1.0 - p_tar) * det.p_fa
    return float(costs.min() / _dcf_normalizer(p_tar, c_miss, c_fa))


def brute_force_det(trials: ScoredTrials) -> DetCurve:
    trials.require_both_classes()
    scores = [float(s) for s in trials.scores]
    labels = [bool(b) for b in trials.labels]
    num_tgt = sum(1 for b in labels if b)
    num_non = len(labels) - num_tgt
    thresholds = [float("-inf")] + sorted(set(scores)) + [float("inf")]
    p_miss, p_fa = [], []
    for th in thresholds:
        misses = sum(1 for s, b in zip(scores, labels) if b and s < th)
        fas = sum(1 for s, b in zip(scores, labels) if not b and s >= th)
        p_miss.append(misses / num_tgt)
        p_fa.append(fas / num_non)
    return DetCurve(np.array(thresholds), np.array(p_miss), np.array(p_fa))


def brute_force_eer(trials: ScoredTrials) -> float:
    det = brute_force_det(trials)
    p_miss = [float(v) for v in det.p_miss]
    p_fa = [float(v) for v in det.p_fa]
    for i in range(len(p_miss)):
        d = p_miss[i] - p_fa[i]
        if d >= 0.0:
            if i == 0 or d == 0.0:
                return p_miss[i]
            d_prev = p_miss[i - 1] - p_fa[i - 1]
            t = d_prev / (d_prev - d)
            return p_miss[i - 1] + t * (p_miss[i] - p_miss[i - 1])
    raise NumericalError("miss and false-alarm curves never cross")


def brute_force_min_dcf(trials: ScoredTrials, p_tar: float = 1e-3,
                        c_miss: float = 1.0, c_fa: float = 1.0) -> float:
    det = brute_force_det(trials)
    best = min(c_miss * p_tar * float(pm) + c_fa * (1.0 - p_tar) * float(pf)
               for pm, pf in zip(det.p_miss, det.p_fa))
    return best / min(c_miss * p_tar, c_fa * (1.0 - p_tar))


def eer_permutation_pvalue(trials: ScoredTrials, num_permutations: int = 199,
                           seed: int = 0) -> float:
    """One-sided p-value for 'EER is below chance': the fraction of label
    permutations whose EER is at most the observed one, with the +1
    correction that counts the observed assignment itself."""
    observed = compute_eer(trials)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(num_permutations):
        permuted = ScoredTrials(trials.scores, rng.permutation(trials.labels))
        if compute_eer(permuted) <= observed:
            hits += 1
    return (1 + hits) / (1 + num_permutations)


def det_csv_lines(det: DetCurve) -> list[str]:
    lines = ["threshold,p_miss,p_fa"]
    for th, pm, pf in zip(det.thresholds, det.p_miss, det.p_fa):
        lines.append(f"{float(th)!r},{float(pm)!r},{float(pf)!r}")
    return lines


def det_probit_csv_lines(det: DetCurve) -> list[str]:
    """Probit-warped coordinates; endpoint rates 0 and 1 map to infinities,
    which plotting code is expected to drop."""
    lines = ["probit_p_fa,probit_p_miss"]
    for pm, pf in zip(det.p_miss, det.p_fa):
        lines.append(f"{float(ndtri(pf))!r},{float(ndtri(pm))!r}")
    return lines


def summary_lines(trials: ScoredTrials, p_tar: float = 1e-3) -> list[str]:
    eer = compute_eer(trials)
    min_dcf = compute_min_dcf(trials, p_tar=p_tar)
    num_tgt = int(trials.labels.sum())
    return [
        f"eer={eer:.4f}",
        f"min_dcf={min_dcf:.4f}",
        f"p_tar={p_tar!r}",
        f"num_target={num_tgt}",
        f"num_nontarget={trials.labels.size - num_tgt}",
    ]
