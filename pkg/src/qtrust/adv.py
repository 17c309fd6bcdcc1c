"""Attacks on the classifier and robustness bookkeeping.

FGSM and PGD perturb the classical features inside an l-infinity ball using
exact parameter-shift input gradients of the squared hinge loss. The
quantum-state attack adds uniform noise to the encoding rotation angles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .data import Dataset
from .seeding import derive
from .vqc import (
    VqcModel,
    decision_values,
    encoded_state,
    hinge_sq,
    parameter_shift_gradient,
    sign_label,
)

EPSILON_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5)
ATTACKS = ("fgsm", "pgd", "quantum_state")
# shift-rule differences leave ~1e-17 residue where the true gradient is 0
GRAD_TOL = 1e-12


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    epsilon: float
    steps: int = 10
    step_size: float | None = None  # PGD default: epsilon / steps
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ValueError(f"unknown attack {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.steps < 1:
            raise ValueError("PGD needs at least one step")


def _loss_input_grad(model: VqcModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return parameter_shift_gradient(model, X, y, wrt="inputs")


def _grad_sign(grad: np.ndarray) -> np.ndarray:
    return np.where(np.abs(grad) > GRAD_TOL, np.sign(grad), 0.0)


def fgsm_batch(model: VqcModel, X, y, epsilon: float) -> np.ndarray:
    """``x + eps * sign(grad_x L)``; coordinates with zero gradient stay put."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if epsilon == 0:
        return X.copy()
    return X + epsilon * _grad_sign(_loss_input_grad(model, X, np.asarray(y)))


def fgsm(model: VqcModel, x, y: int, epsilon: float) -> np.ndarray:
    return fgsm_batch(model, np.asarray(x, dtype=float)[None, :], [y], epsilon)[0]


def pgd_batch(model: VqcModel, X, y, epsilon: float, steps: int = 10,
              step_size: float | None = None) -> np.ndarray:
    """Signed-gradient ascent from ``x`` with projection onto the eps-ball."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if epsilon == 0:
        return X.copy()
    alpha = epsilon / steps if step_size is None else step_size
    X_adv = X.copy()
    for _ in range(steps):
        X_adv = X_adv + alpha * _grad_sign(_loss_input_grad(model, X_adv, y))
        X_adv = np.clip(X_adv, X - epsilon, X + epsilon)
    return X_adv


def pgd(model: VqcModel, x, y: int, epsilon: float, steps: int = 10,
        step_size: float | None = None) -> np.ndarray:
    return pgd_batch(model, np.asarray(x, dtype=float)[None, :], [y], epsilon, steps, step_size)[0]


def quantum_state_perturb(X, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Encoding angles with i.i.d. ``Uniform(-eps, eps)`` offsets.

    The return value is a set of rotation angles for the encoding layer, not
    a modified feature record.
    """
    angles = np.atleast_2d(np.asarray(X, dtype=float))
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if epsilon == 0:
        return angles.copy()
    return angles + rng.uniform(-epsilon, epsilon, angles.shape)


def encoding_trace_distance(x, angles) -> float:
    """Trace distance between the clean and perturbed encoded states."""
    return qsim.trace_distance_pure(encoded_state(x), encoded_state(angles))


def generate(model: VqcModel, X, y, spec: AttackSpec, rng: np.random.Generator | None = None):
    if spec.kind == "fgsm":
        return fgsm_batch(model, X, y, spec.epsilon)
    if spec.kind == "pgd":
        return pgd_batch(model, X, y, spec.epsilon, spec.steps, spec.step_size)
    rng = derive(spec.seed, "quantum_state", repr(spec.epsilon)) if rng is None else rng
    return quantum_state_perturb(X, spec.epsilon, rng)


@dataclass
class RobustnessRow:
    attack: str
    epsilon: float
    clean_accuracy: float
    robust_accuracy: float
    accuracy_drop: float
    attack_success_rate: float


@dataclass
class RobustnessReport:
    rows: list[RobustnessRow] = field(default_factory=list)
    examples: dict = field(default_factory=dict)  # (attack, eps) -> adversarial X

    def by_attack(self, attack: str) -> list[RobustnessRow]:
        return [r for r in self.rows if r.attack == attack]

    def row(self, attack: str, epsilon: float) -> RobustnessRow:
        for r in self.rows:
            if r.attack == attack and np.isclose(r.epsilon, epsilon):
                return r
        raise KeyError((attack, epsilon))

    def mean_drop(self, attack: str) -> float:
        return float(np.mean([r.accuracy_drop for r in self.by_attack(attack)]))


def attack_outcome(model: VqcModel, data: Dataset, X_adv: np.ndarray) -> RobustnessRow:
    clean_pred = sign_label(decision_values(model, data.X))
    adv_pred = sign_label(decision_values(model, X_adv))
    clean_ok = clean_pred == data.y
    adv_ok = adv_pred == data.y
    clean_acc = float(clean_ok.mean())
    robust_acc = float(adv_ok.mean())
    success = float((clean_ok & ~adv_ok).sum() / clean_ok.sum()) if clean_ok.any() else 0.0
    return RobustnessRow("", 0.0, clean_acc, robust_acc, clean_acc - robust_acc, success)


def evaluate_robustness(
    model: VqcModel,
    data: Dataset,
    attacks=ATTACKS,
    epsilons=EPSILON_GRID,
    seed: int = 0,
    keep_examples: bool = False,
    pgd_steps: int = 10,
) -> RobustnessReport:
    """Robust accuracy, drop and success rate per (attack, epsilon)."""
    if len(data) == 0:
        raise ValueError("empty test set")
    report = RobustnessReport()
    for attack in attacks:
        for eps in epsilons:
            spec = AttackSpec(attack, float(eps), steps=pgd_steps, seed=seed)
            X_adv = generate(model, data.X, data.y, spec)
            row = attack_outcome(model, data, X_adv)
            row.attack, row.epsilon = attack, float(eps)
            report.rows.append(row)
            if keep_examples:
                report.examples[(attack, float(eps))] = X_adv
    return report


def transfer_rate(source: VqcModel, target: VqcModel, data: Dataset, X_adv: np.ndarray) -> float | None:
    """Fraction of source-fooling examples that also fool ``target``.

    Only samples the source classified correctly when clean and misclassifies
    after perturbation are counted. Returns ``None`` when there are none.
    """
    src_clean = sign_label(decision_values(source, data.X)) == data.y
    src_adv = sign_label(decision_values(source, X_adv)) == data.y
    fooled = src_clean & ~src_adv
    if not fooled.any():
        return None
    tgt_adv = sign_label(decision_values(target, X_adv[fooled])) == data.y[fooled]
    return float(np.mean(~tgt_adv))


@dataclass
class VulnerabilityResult:
    scores: np.ndarray
    top_k: np.ndarray
    bottom_k: np.ndarray


def vulnerability_scores(model: VqcModel, data: Dataset, epsilon: float = 0.2, k: int = 5) -> VulnerabilityResult:
    """Per-sample ``|f(x_fgsm) - f(x)|`` with the most and least vulnerable indices."""
    X_adv = fgsm_batch(model, data.X, data.y, epsilon)
    scores = np.abs(decision_values(model, X_adv) - decision_values(model, data.X))
    order = np.argsort(-scores, kind="stable")
    return VulnerabilityResult(scores, order[:k], order[::-1][:k])


def loss_per_sample(model: VqcModel, X, y) -> np.ndarray:
    return hinge_sq(decision_values(model, X), np.asarray(y))
