"""Shot-based uncertainty metrics, ensemble decomposition, calibration and
selective prediction.

Entropies are in bits. Binary outcome ``0`` corresponds to label +1 (positive
``<Z_0>``) and outcome ``1`` to label -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .qsim import ShotEstimate, sample_ones
from .seeding import derive
from .vqc import VqcModel, decision_values, exact_values

N_OUTCOMES = 2


def entropy_bits(p: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shannon entropy in bits along ``axis`` with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=axis)


def predictive_entropy(estimate: ShotEstimate) -> float:
    return float(entropy_bits(estimate.probabilities(N_OUTCOMES)))


def variation_ratio(estimate: ShotEstimate) -> float:
    return 1.0 - max(estimate.counts.values()) / estimate.shots


def shot_std(estimate: ShotEstimate) -> float:
    """Standard deviation of the +-1 valued shot outcomes."""
    p = estimate.probability(0)
    return 2.0 * math.sqrt(max(p * (1.0 - p), 0.0))


def outcome_to_label(outcome) -> np.ndarray:
    return np.where(np.asarray(outcome) == 0, 1, -1)


# --- Dirichlet credible intervals ----------------------------------------------

def dirichlet_credible_interval(
    alpha: Sequence[float],
    level: float = 0.95,
    rng: np.random.Generator | None = None,
    draws: int = 10_000,
) -> np.ndarray:
    """Central ``level`` interval of each Dirichlet marginal, shape ``(K, 2)``.

    Quantiles come from ``draws`` seeded Monte Carlo samples.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError(f"Dirichlet parameters must be positive, got {alpha}")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    rng = derive(0, "dirichlet") if rng is None else rng
    samples = rng.dirichlet(alpha, size=draws)
    tail = (1.0 - level) / 2.0
    lo = np.quantile(samples, tail, axis=0)
    hi = np.quantile(samples, 1.0 - tail, axis=0)
    return np.column_stack([lo, hi])


# --- ensembles -------------------------------------------------------------------

@dataclass
class UncertaintyReport:
    """Per-sample uncertainty; arrays are indexed by sample."""

    prediction: np.ndarray           # labels in {-1, +1}
    mean_probs: np.ndarray           # (n, 2) pooled outcome frequencies
    member_probs: np.ndarray         # (M, n, 2)
    counts: np.ndarray               # (n, 2) pooled outcome counts
    entropy: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray
    variation_ratio: np.ndarray
    shot_std: np.ndarray
    max_confidence: np.ndarray
    credible_interval: np.ndarray    # (n, 2 classes, 2) lo/hi per outcome

    def __len__(self) -> int:
        return len(self.prediction)

    def predicted_interval(self) -> np.ndarray:
        """``(lo, hi)`` of the predicted outcome's probability, shape ``(n, 2)``."""
        outcome = np.where(self.prediction == 1, 0, 1)
        return self.credible_interval[np.arange(len(self)), outcome]


def decompose(member_probs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Total, aleatoric and epistemic entropy from member distributions.

    ``member_probs`` has shape ``(M, ..., K)``; returns ``(mean, H, H_aleat, H_epist)``.
    """
    member_probs = np.asarray(member_probs, dtype=float)
    mean = member_probs.mean(axis=0)
    total = entropy_bits(mean)
    aleatoric = entropy_bits(member_probs).mean(axis=0)
    return mean, total, aleatoric, total - aleatoric


def member_counts(
    members: Sequence[VqcModel],
    X: np.ndarray,
    shots: int,
    seed: int,
    stream: tuple = ("uq",),
) -> np.ndarray:
    """Outcome-1 counts per (member, sample) from ``shots`` Born samples each."""
    if len(members) < 1:
        raise ValueError("ensemble must have at least one member")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    X = np.atleast_2d(X)
    ones = np.empty((len(members), len(X)), dtype=np.int64)
    for m, model in enumerate(members):
        p1 = (1.0 - exact_values(model.params, X)) / 2.0
        ones[m] = sample_ones(p1, shots, derive(seed, *stream, "member", m))
    return ones


def ensemble_uq(
    members: Sequence[VqcModel],
    X,
    shots: int,
    seed: int = 0,
    level: float = 0.95,
    prior: float = 1.0,
    ci_draws: int = 10_000,
    stream: tuple = ("uq",),
) -> UncertaintyReport:
    """Ensemble uncertainty for every row of ``X``.

    Each member is sampled with ``shots`` shots; the ensemble prediction is the
    argmax of the averaged frequencies. ``prior`` is the Dirichlet pseudo-count
    per class (1 = flat, 0.5 = Jeffreys). ``ci_draws=0`` skips the credible
    intervals (left as NaN).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ones = member_counts(members, X, shots, seed, stream)
    M = len(members)
    p1 = ones / shots
    member_probs = np.stack([1.0 - p1, p1], axis=-1)
    mean, total, aleat, epist = decompose(member_probs)
    pooled = np.stack([M * shots - ones.sum(0), ones.sum(0)], axis=-1)
    prediction = outcome_to_label(np.argmax(mean, axis=-1))
    max_conf = pooled.max(axis=-1) / (M * shots)
    pooled_p0 = pooled[:, 0] / (M * shots)
    ci = np.full((len(X), N_OUTCOMES, 2), np.nan)
    for i in range(len(X) if ci_draws > 0 else 0):
        ci[i] = dirichlet_credible_interval(pooled[i] + prior, level,
                                            derive(seed, *stream, "ci", i), ci_draws)
    return UncertaintyReport(
        prediction=prediction,
        mean_probs=mean,
        member_probs=member_probs,
        counts=pooled,
        entropy=total,
        aleatoric=aleat,
        epistemic=epist,
        variation_ratio=1.0 - max_conf,
        shot_std=2.0 * np.sqrt(np.clip(pooled_p0 * (1.0 - pooled_p0), 0.0, None)),
        max_confidence=max_conf,
        credible_interval=ci,
    )


def build_ensemble(train_set, size: int, config, mode: str = "trained") -> list[VqcModel]:
    """Ensemble members from independent initializations.

    ``mode="trained"`` trains each member with its own seed; ``mode="init"``
    keeps the sampled initial parameters untrained.
    """
    from dataclasses import replace

    from .vqc import init_model, train_fresh

    if size < 1:
        raise ValueError("ensemble size must be >= 1")
    members = []
    for m in range(size):
        member_seed = int(derive(config.seed, "member", m).integers(2**31 - 1))
        cfg = replace(config, seed=member_seed)
        if mode == "trained":
            members.append(train_fresh(train_set, cfg).model)
        elif mode == "init":
            members.append(init_model(derive(member_seed, "init"), config.init_std))
        else:
            raise ValueError(f"unknown ensemble mode {mode!r}")
    return members


# --- calibration -----------------------------------------------------------------

@dataclass
class ReliabilityBin:
    lower: float
    upper: float
    mean_confidence: float | None
    accuracy: float | None
    count: int


@dataclass
class CalibrationReport:
    ece: float
    mce: float
    brier: float
    bins: list[ReliabilityBin] = field(default_factory=list)


def bin_index(confidences: np.ndarray, n_bins: int) -> np.ndarray:
    """0-based right-closed equal-width bins on [0, 1]; 0 goes to the first bin."""
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.digitize(np.asarray(confidences, dtype=float), edges, right=True) - 1
    return np.clip(idx, 0, n_bins - 1)


def calibration(confidences, correct, n_bins: int = 10) -> CalibrationReport:
    """ECE, MCE and Brier score from predicted-class confidences.

    The Brier term is ``(p_true - 1)^2`` where ``p_true`` is the probability
    put on the true class, i.e. ``(confidence - correct)^2`` for binary output.
    """
    conf = np.asarray(confidences, dtype=float)
    ok = np.asarray(correct, dtype=float)
    if conf.size == 0:
        raise ValueError("empty input")
    if n_bins < 1:
        raise ValueError("need at least one bin")
    idx = bin_index(conf, n_bins)
    n = conf.size
    ece, mce = 0.0, 0.0
    bins = []
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    for b in range(n_bins):
        sel = idx == b
        count = int(sel.sum())
        if count == 0:
            bins.append(ReliabilityBin(edges[b], edges[b + 1], None, None, 0))
            continue
        mc, acc = float(conf[sel].mean()), float(ok[sel].mean())
        gap = abs(acc - mc)
        ece += count / n * gap
        mce = max(mce, gap)
        bins.append(ReliabilityBin(edges[b], edges[b + 1], mc, acc, count))
    brier = float(np.mean((conf - ok) ** 2))
    return CalibrationReport(float(ece), float(mce), brier, bins)


def logistic_confidence(values, temperature: float = 1.0, k: float = 3.0) -> np.ndarray:
    """Confidence in the sign prediction under the link ``sigmoid(k f / T)``."""
    p_pos = 1.0 / (1.0 + np.exp(-k * np.asarray(values, dtype=float) / temperature))
    return np.maximum(p_pos, 1.0 - p_pos)


def temperature_grid(n: int = 121, low: float = 0.05, high: float = 20.0) -> np.ndarray:
    grid = np.geomspace(low, high, n)
    return np.unique(np.append(grid, 1.0))


@dataclass
class TemperatureResult:
    temperature: float
    confidences: np.ndarray
    ece_before: float
    ece_after: float
    grid: np.ndarray
    ece_curve: np.ndarray


def temperature_scale(values, labels, k: float = 3.0, grid=None, n_bins: int = 10) -> TemperatureResult:
    """Pick the grid temperature minimizing validation ECE.

    ``values`` are decision values in [-1, 1]; predictions are their signs
    (ties -> +1), so only the confidence changes with temperature.
    """
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels)
    if values.size == 0:
        raise ValueError("empty validation set")
    grid = temperature_grid() if grid is None else np.asarray(grid, dtype=float)
    correct = np.where(values >= 0, 1, -1) == labels
    curve = np.array([calibration(logistic_confidence(values, T, k), correct, n_bins).ece
                      for T in grid])
    best = float(grid[int(np.argmin(curve))])
    before = calibration(logistic_confidence(values, 1.0, k), correct, n_bins).ece
    return TemperatureResult(best, logistic_confidence(values, best, k), float(before),
                             float(curve.min()), grid, curve)


# --- selective prediction --------------------------------------------------------

@dataclass
class RiskCoveragePoint:
    threshold: float
    coverage: float
    risk: float | None  # None when nothing is retained


def risk_coverage_curve(confidences, correct, thresholds=None) -> list[RiskCoveragePoint]:
    conf = np.asarray(confidences, dtype=float)
    ok = np.asarray(correct, dtype=bool)
    if conf.size == 0:
        raise ValueError("empty input")
    thresholds = np.linspace(0.0, 1.0, 101) if thresholds is None else thresholds
    points = []
    for tau in thresholds:
        keep = conf >= tau
        cov = float(keep.mean())
        risk = float(1.0 - ok[keep].mean()) if keep.any() else None
        points.append(RiskCoveragePoint(float(tau), cov, risk))
    return points


# --- correct vs incorrect statistics -----------------------------------------------

@dataclass
class GroupStatistics:
    mean_correct: float
    mean_incorrect: float
    std_correct: float
    std_incorrect: float
    median_correct: float
    median_incorrect: float
    n_correct: int
    n_incorrect: int
    delta: float
    t_welch: float
    df_welch: float
    p_value: float
    t_student: float
    cohens_d: float


def _two_sided_p(t: float, df: float) -> float:
    if not np.isfinite(t):
        return 0.0
    if df > 30:
        return float(math.erfc(abs(t) / math.sqrt(2.0)))
    return float(2.0 * stats.t.sf(abs(t), df))


def group_statistics(correct_values, incorrect_values) -> GroupStatistics:
    """Compare a metric between correct and incorrect predictions.

    Differences are ``incorrect - correct``. Cohen's d uses the pooled
    standard deviation; the p-value comes from Welch's t.
    """
    a = np.asarray(correct_values, dtype=float)
    b = np.asarray(incorrect_values, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least 2 samples")
    na, nb = a.size, b.size
    va, vb = a.var(ddof=1), b.var(ddof=1)
    delta = float(b.mean() - a.mean())
    se = math.sqrt(va / na + vb / nb)
    pooled_var = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
    pooled = math.sqrt(pooled_var)
    if se > 0:
        t = delta / se
        df = (va / na + vb / nb) ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    else:
        t = 0.0 if delta == 0 else math.copysign(math.inf, delta)
        df = float(na + nb - 2)
    if pooled > 0:
        d = delta / pooled
        t_student = delta / (pooled * math.sqrt(1.0 / na + 1.0 / nb))
    else:
        d = t_student = 0.0 if delta == 0 else math.copysign(math.inf, delta)
    return GroupStatistics(
        float(a.mean()), float(b.mean()), float(math.sqrt(va)), float(math.sqrt(vb)),
        float(np.median(a)), float(np.median(b)), na, nb, delta, float(t), float(df),
        _two_sided_p(t, df), float(t_student), float(d),
    )


# --- shot-noise scaling ----------------------------------------------------------

@dataclass
class ShotVarianceStudy:
    shots: np.ndarray
    variance: np.ndarray
    theoretical: np.ndarray
    slope: float
    intercept: float


def shot_variance_study(
    p: float,
    shot_counts=(10, 50, 100, 200, 500, 1000),
    repetitions: int = 1000,
    seed: int = 0,
) -> ShotVarianceStudy:
    """Empirical ``Var[p_hat]`` per shot count and its log-log slope."""
    shot_counts = np.asarray(shot_counts, dtype=int)
    var = np.empty(len(shot_counts))
    for i, S in enumerate(shot_counts):
        ones = sample_ones(np.full(repetitions, p), int(S), derive(seed, "shot-variance", int(S)))
        var[i] = np.var(ones / S, ddof=1)
    slope, intercept = np.polyfit(np.log(shot_counts), np.log(var), 1)
    return ShotVarianceStudy(shot_counts, var, p * (1 - p) / shot_counts, float(slope),
                             float(intercept))


def single_model_uq(model: VqcModel, X, shots: int, seed: int = 0, stream=("single",)) -> UncertaintyReport:
    """Shot-only metrics for one model (an ensemble of size one)."""
    return ensemble_uq([model], X, shots, seed, stream=stream)


def shot_mode_accuracy(model: VqcModel, X, y, shots: int, rng) -> float:
    values = decision_values(model, X, shots, rng)
    return float(np.mean(np.where(values >= 0, 1, -1) == np.asarray(y)))
