"""Scoring backend: WCCN, cosine, s-norm, logistic score fusion, PCA export.

All artifacts are fitted per phrase on background-speaker embeddings and are
immutable after fitting.  Embeddings are length-normalized before any
covariance estimation; cosine scoring itself is scale-invariant, so this
affects only the fitted transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateError, DimensionError, InsufficientDataError,
                     IterationLimitError, RankDeficiencyError)
from .resnet import length_normalize


@dataclass(frozen=True)
class WccnTransform:
    """x -> matrix.T @ x whitens the regularized within-class covariance."""

    phrase_id: str
    matrix: np.ndarray      # lower-triangular Cholesky factor B
    covariance: np.ndarray  # regularized within-class covariance W-bar


@dataclass(frozen=True)
class FusionModel:
    weights: np.ndarray
    bias: float


def wccn_from_covariance(within: np.ndarray, phrase_id: str = "") -> WccnTransform:
    """Regularize W to W + I/2, invert, and take the Cholesky factor B, so
    that B.T @ Wbar @ B = I."""
    within = np.asarray(within, dtype=np.float64)
    d = within.shape[0]
    if within.shape != (d, d):
        raise DimensionError(f"covariance must be square, got {within.shape}")
    wbar = within + 0.5 * np.eye(d)
    b = np.linalg.cholesky(np.linalg.inv(wbar))
    return WccnTransform(phrase_id, b, wbar)


def fit_wccn(by_speaker: dict[str, np.ndarray], phrase_id: str = "") -> WccnTransform:
    """Within-class covariance averaged unweighted over speakers (biased,
    1/N per speaker), on length-normalized embeddings."""
    if len(by_speaker) < 2:
        raise InsufficientDataError(
            f"wccn for phrase '{phrase_id}' needs >= 2 speakers, "
            f"got {len(by_speaker)}")
    accum = None
    for speaker in sorted(by_speaker):
        rows = np.asarray(by_speaker[speaker], dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise DimensionError(
                f"speaker '{speaker}' embeddings must be a nonempty matrix")
        normed = np.stack([length_normalize(r) for r in rows])
        centered = normed - normed.mean(axis=0)
        cov = centered.T @ centered / centered.shape[0]
        accum = cov if accum is None else accum + cov
    return wccn_from_covariance(accum / len(by_speaker), phrase_id)


def transform(t: WccnTransform, e: np.ndarray) -> np.ndarray:
    return np.asarray(e, dtype=np.float64) @ t.matrix


def cosine_score(e1: np.ndarray, e2: np.ndarray, t: WccnTransform) -> float:
    u = transform(t, e1)
    v = transform(t, e2)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateError("zero-norm embedding after WCCN transform")
    return float(np.dot(u, v)) / (nu * nv)


def cohort_scores(e: np.ndarray, cohort: np.ndarray, t: WccnTransform) -> np.ndarray:
    if cohort.ndim != 2 or cohort.shape[0] < 2:
        raise InsufficientDataError("cohort needs at least 2 utterances")
    return np.array([cosine_score(e, row, t) for row in cohort])


def cohort_stats(e: np.ndarray, cohort: np.ndarray,
                 t: WccnTransform) -> tuple[float, float]:
    scores = cohort_scores(e, cohort, t)
    mu = float(scores.mean())
    sigma = float(scores.std())
    if sigma == 0.0:
        raise DegenerateError("degenerate cohort: zero score variance")
    return mu, sigma


def apply_snorm(s: float, enroll_stats: tuple[float, float],
                test_stats: tuple[float, float]) -> float:
    mu_e, sigma_e = enroll_stats
    mu_t, sigma_t = test_stats
    if sigma_e <= 0.0 or sigma_t <= 0.0:
        raise DegenerateError("s-norm requires positive cohort deviations")
    return 0.5 * ((s - mu_e) / sigma_e + (s - mu_t) / sigma_t)


def fit_fusion(scores: np.ndarray, labels: np.ndarray, *, tol: float = 1e-8,
               max_iter: int = 200_000, l2: float = 0.0) -> FusionModel:
    """Logistic-regression fusion by gradient ascent on the mean binary
    log-likelihood (optionally ridge-penalized).

    Inputs are standardized internally for conditioning and the fitted
    weights are mapped back to the raw score scale.  Convergence means the
    gradient max-norm falls below ``tol``.  On separable data with ``l2 = 0``
    the likelihood has no maximizer, but the gradient still vanishes along
    the separating ray, so the fit returns a finite, very confident model
    rather than diverging; pass ``l2 > 0`` to keep weights moderate.
    IterationLimitError marks a stalled line search or an exhausted
    iteration budget.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise DimensionError(
            f"scores {scores.shape} do not pair with labels {labels.shape}")
    if labels.all() or not labels.any():
        raise DegenerateError("fusion fit needs both target and nontarget trials")
    mu = scores.mean(axis=0)
    sd = scores.std(axis=0)
    sd[sd == 0.0] = 1.0
    z = (scores - mu) / sd
    y = labels.astype(np.float64)
    n, k = z.shape

    def objective(w, b):
        logits = z @ w + b
        # mean log-likelihood, numerically stable via softplus
        ll = -(np.logaddexp(0.0, -logits) * y
               + np.logaddexp(0.0, logits) * (1.0 - y)).mean()
        return ll - 0.5 * l2 * float(w @ w)

    w = np.zeros(k)
    b = 0.0
    step = 1.0
    value = objective(w, b)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(z @ w + b)))
        grad_w = z.T @ (y - p) / n - l2 * w
        grad_b = float((y - p).mean())
        gnorm = max(float(np.abs(grad_w).max()), abs(grad_b))
        if gnorm < tol:
            break
        while step > 1e-16:
            cand = objective(w + step * grad_w, b + step * grad_b)
            if cand > value:
                w = w + step * grad_w
                b = b + step * grad_b
                value = cand
                step *= 2.0
                break
            step *= 0.5
        else:
            raise IterationLimitError(
                f"fusion line search stalled at gradient max-norm {gnorm:.3e}")
    else:
        raise IterationLimitError(
            f"fusion did not converge in {max_iter} iterations "
            f"(gradient max-norm {gnorm:.3e}, |w| up to {np.abs(w).max():.3e}); "
            "scores may be linearly separable")
    weights = w / sd
    bias = b - float((w * mu / sd).sum())
    if not np.any(weights != 0.0):
        raise DegenerateError("fusion fit produced all-zero weights")
    return FusionModel(weights, bias)


def apply_fusion(model: FusionModel, scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    single = scores.ndim == 1
    if single:
        scores = scores[None, :]
    if scores.shape[1] != model.weights.shape[0]:
        raise DimensionError(
            f"expected {model.weights.shape[0]} systems, got {scores.shape[1]}")
    fused = scores @ model.weights + model.bias
    return float(fused[0]) if single else fused


def pca_project(embeddings: np.ndarray, k: int = 2) -> np.ndarray:
    """Center and project onto the top-k principal axes (SVD).

    Deficient trailing directions give all-zero coordinates; only fully
    degenerate data (every point identical) is rejected.  Component signs
    are fixed so the largest-magnitude loading is positive.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected [N, d] embeddings, got {x.shape}")
    n, d = x.shape
    if not 1 <= k <= d:
        raise DimensionError(f"k must lie in [1, {d}], got {k}")
    if n < k + 1:
        raise InsufficientDataError(f"need at least {k + 1} points, got {n}")
    centered = x - x.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    if singular[0] <= 0.0:
        raise RankDeficiencyError("all points identical; no principal axes")
    components = vt[:k].copy()
    for i in range(k):
        j = int(np.abs(components[i]).argmax())
        if components[i, j] < 0:
            components[i] = -components[i]
    return centered @ components.T


@dataclass(frozen=True)
class PhraseBackend:
    """Per-phrase scoring artifacts: WCCN transform plus the s-norm cohort."""

    phrase_id: str
    wccn: WccnTransform
    cohort_ids: tuple[str, ...]
    cohort: np.ndarray  # [n_cohort, d] raw embeddings, rows follow cohort_ids


def fit_backends(records: dict, cohort_utts_by_phrase: dict[str, list[str]]
                 ) -> dict[str, "PhraseBackend"]:
    """Fit one PhraseBackend per phrase from the given cohort utterances.

    ``records`` maps utterance_id to an embedding record carrying speaker and
    phrase ids; cohort utterances double as the WCCN fitting set.
    """
    backends = {}
    for phrase in sorted(cohort_utts_by_phrase):
        utts = sorted(cohort_utts_by_phrase[phrase])
        by_speaker: dict[str, list[np.ndarray]] = {}
        rows = []
        for utt in utts:
            if utt not in records:
                raise KeyError(f"cohort utterance '{utt}' has no embedding")
            rec = records[utt]
            if rec.phrase_id != phrase:
                raise InsufficientDataError(
                    f"utterance '{utt}' belongs to phrase '{rec.phrase_id}', "
                    f"not '{phrase}'")
            by_speaker.setdefault(rec.speaker_id, []).append(rec.vector)
            rows.append(rec.vector)
        wccn = fit_wccn({s: np.stack(v) for s, v in by_speaker.items()}, phrase)
        backends[phrase] = PhraseBackend(phrase, wccn, tuple(utts), np.stack(rows))
    return backends


def enroll_model_vector(utterance_vectors: list[np.ndarray]) -> np.ndarray:
    """Speaker-phrase model: mean of length-normalized utterance embeddings."""
    if not utterance_vectors:
        raise InsufficientDataError("enrollment model with no utterances")
    return np.stack([length_normalize(v) for v in utterance_vectors]).mean(axis=0)


def score_trials(trial_list, records: dict, enroll_map: dict[str, list[str]],
                 backends: dict[str, "PhraseBackend"], *,
                 snorm: bool = True) -> list[float]:
    """Cosine scores in WCCN space, optionally s-normalized per phrase.

    Phrase isolation is enforced: a trial's model, test utterance, and
    backend must all carry the trial's phrase id.
    """
    model_phrase: dict[str, str] = {}
    model_vec: dict[str, np.ndarray] = {}
    for model, utts in enroll_map.items():
        recs = [records[u] for u in utts]
        phrases = {r.phrase_id for r in recs}
        if len(phrases) != 1:
            raise InsufficientDataError(
                f"model '{model}' mixes phrases {sorted(phrases)}")
        model_phrase[model] = phrases.pop()
        model_vec[model] = enroll_model_vector([r.vector for r in recs])

    stats_cache: dict[tuple[str, str], tuple[float, float]] = {}

    def stats(kind: str, key: str, vector: np.ndarray, backend) -> tuple[float, float]:
        cache_key = (kind, key)
        if cache_key not in stats_cache:
            stats_cache[cache_key] = cohort_stats(vector, backend.cohort,
                                                  backend.wccn)
        return stats_cache[cache_key]

    scores = []
    for trial in trial_list:
        if trial.phrase_id not in backends:
            raise KeyError(f"no backend fitted for phrase '{trial.phrase_id}'")
        backend = backends[trial.phrase_id]
        if trial.enroll_id not in model_vec:
            raise KeyError(f"unknown enrollment model '{trial.enroll_id}'")
        if model_phrase[trial.enroll_id] != trial.phrase_id:
            raise InsufficientDataError(
                f"model '{trial.enroll_id}' is phrase "
                f"'{model_phrase[trial.enroll_id]}' but trial says "
                f"'{trial.phrase_id}'")
        if trial.test_id not in records:
            raise KeyError(f"no embedding for test utterance '{trial.test_id}'")
        test = records[trial.test_id]
        if test.phrase_id != trial.phrase_id:
            raise InsufficientDataError(
                f"test utterance '{trial.test_id}' is phrase "
                f"'{test.phrase_id}' but trial says '{trial.phrase_id}'")
        raw = cosine_score(model_vec[trial.enroll_id], test.vector, backend.wccn)
        if snorm:
            e_stats = stats("m", trial.enroll_id, model_vec[trial.enroll_id],
                            backend)
            t_stats = stats("t", trial.test_id, test.vector, backend)
            scores.append(apply_snorm(raw, e_stats, t_stats))
        else:
            scores.append(raw)
    return scores


def save_backends(path, backends: dict[str, "PhraseBackend"]) -> None:
    from . import fileio

    fields = {"phrases": ",".join(sorted(backends))}
    tensors = {}
    for phrase in sorted(backends):
        b = backends[phrase]
        fields[f"cohort.{phrase}"] = ",".join(b.cohort_ids)
        tensors[f"{phrase}.wccn_matrix"] = b.wccn.matrix
        tensors[f"{phrase}.wccn_covariance"] = b.wccn.covariance
        tensors[f"{phrase}.cohort"] = b.cohort
    fileio.write_tensor_dir(path, "svbackend", 1, fields, tensors)


def load_backends(path) -> dict[str, "PhraseBackend"]:
    from . import fileio

    fields, tensors = fileio.read_tensor_dir(path, "svbackend", 1)
    backends = {}
    for phrase in fields["phrases"].split(","):
        wccn = WccnTransform(phrase,
                             tensors[f"{phrase}.wccn_matrix"].astype(np.float64),
                             tensors[f"{phrase}.wccn_covariance"].astype(np.float64))
        cohort_ids = tuple(fields[f"cohort.{phrase}"].split(","))
        backends[phrase] = PhraseBackend(
            phrase, wccn, cohort_ids,
            tensors[f"{phrase}.cohort"].astype(np.float64))
    return backends


def save_fusion(path, model: FusionModel) -> None:
    from . import fileio

    fileio.write_tensor_dir(path, "svfusion", 1,
                            {"bias": repr(model.bias),
                             "num_systems": str(model.weights.size)},
                            {"weights": model.weights})


def load_fusion(path) -> FusionModel:
    from . import fileio

    fields, tensors = fileio.read_tensor_dir(path, "svfusion", 1)
    return FusionModel(tensors["weights"].astype(np.float64),
                       float(fields["bias"]))
