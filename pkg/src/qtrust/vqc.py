"""Two-qubit variational quantum classifier.

Features are angle-encoded with ``RY(x_i)`` on qubit ``i``; the trainable
ansatz is two layers of ``RY`` on every qubit followed by ``CNOT(0, 1)``. The
decision value is ``<Z_0>`` and the predicted label is its sign (ties -> +1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels, qsim
from .data import Dataset
from .seeding import derive

ANSATZ_ID = "ry-cnot-2layer"
N_PARAMS = 4
SHIFT = np.pi / 2


@dataclass(frozen=True)
class VqcModel:
    params: np.ndarray
    n_qubits: int = 2
    readout_qubit: int = 0
    ansatz_id: str = ANSATZ_ID

    def __post_init__(self):
        p = np.array(self.params, dtype=float).reshape(-1)
        if p.size != N_PARAMS:
            raise ValueError(f"ansatz {self.ansatz_id} takes {N_PARAMS} parameters, got {p.size}")
        if self.n_qubits != 2 or self.ansatz_id != ANSATZ_ID:
            raise ValueError(f"unsupported ansatz {self.ansatz_id!r} on {self.n_qubits} qubits")
        if not 0 <= self.readout_qubit < self.n_qubits:
            raise ValueError("readout qubit out of range")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    def with_params(self, params) -> "VqcModel":
        return VqcModel(np.asarray(params, dtype=float), self.n_qubits, self.readout_qubit,
                        self.ansatz_id)

    def ansatz(self) -> qsim.Circuit:
        t = self.params
        return qsim.Circuit(2, (
            qsim.RY(t[0], 0), qsim.RY(t[1], 1), qsim.CNOT(0, 1),
            qsim.RY(t[2], 0), qsim.RY(t[3], 1), qsim.CNOT(0, 1),
        ))

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "params": [float(v) for v in self.params],
            "readout_qubit": self.readout_qubit,
            "ansatz_id": self.ansatz_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VqcModel":
        unknown = set(d) - {"n_qubits", "params", "readout_qubit", "ansatz_id"}
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return cls(np.asarray(d["params"], dtype=float), int(d.get("n_qubits", 2)),
                   int(d.get("readout_qubit", 0)), d.get("ansatz_id", ANSATZ_ID))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "VqcModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_model(rng: np.random.Generator, init_std: float = 0.1) -> VqcModel:
    return VqcModel(rng.normal(0.0, init_std, N_PARAMS))


def _program(params: np.ndarray):
    """Kernel op arrays for the ansatz with the given parameter vector."""
    kinds = np.array([0, 0, 1, 0, 0, 1], dtype=np.int32)
    targets = np.array([0, 1, 1, 0, 1, 1], dtype=np.int32)
    controls = np.array([-1, -1, 0, -1, -1, 0], dtype=np.int32)
    angles = np.array([params[0], params[1], 0.0, params[2], params[3], 0.0], dtype=np.float64)
    return kinds, targets, controls, angles


_PARAM_SLOT = (0, 1, 3, 4)  # position of each parameter in the op list


def _as_batch(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != 2:
        raise ValueError(f"expected 2 features per sample, got {X.shape[1]}")
    return X


def exact_values(params: np.ndarray, X: np.ndarray) -> np.ndarray:
    kinds, targets, controls, angles = _program(params)
    return kernels.expectation_z_batch(X, kinds, targets, controls, angles, 0)


def encode(x: Sequence[float]) -> qsim.Circuit:
    """Encoding layer: ``RY(x_i)`` on qubit ``i``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != 2:
        raise ValueError(f"expected 2 features, got {x.size}")
    return qsim.Circuit(2, tuple(qsim.RY(v, i) for i, v in enumerate(x)))


def encoded_state(x: Sequence[float]) -> qsim.Statevector:
    return qsim.run_circuit(encode(x))


def output_state(model: VqcModel, x: Sequence[float]) -> qsim.Statevector:
    """Full statevector through the general simulator (reference path)."""
    return qsim.run_circuit(encode(x) + model.ansatz())


def decision_values(
    model: VqcModel,
    X,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """``<Z_0>`` per sample; with ``shots`` the estimate ``1 - 2 p_hat(1)``."""
    X = _as_batch(X)
    f = exact_values(model.params, X)
    if shots is None:
        return f
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if rng is None:
        raise ValueError("shot mode needs an rng")
    ones = qsim.sample_ones((1.0 - f) / 2.0, shots, rng)
    return 1.0 - 2.0 * ones / shots


def decision_value(model: VqcModel, x, shots: int | None = None, rng=None) -> float:
    return float(decision_values(model, x, shots, rng)[0])


def sign_label(values) -> np.ndarray:
    return np.where(np.asarray(values) >= 0.0, 1, -1)


def predict(model: VqcModel, X, shots: int | None = None, rng=None) -> np.ndarray:
    return sign_label(decision_values(model, X, shots, rng))


def accuracy(model: VqcModel, data: Dataset, shots: int | None = None, rng=None) -> float:
    return float(np.mean(predict(model, data.X, shots, rng) == data.y))


def hinge_sq(values: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - y * values) ** 2


def squared_hinge_loss(model: VqcModel, X, y, shots: int | None = None, rng=None) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(hinge_sq(decision_values(model, X, shots, rng), y)))


# --- SPSA -------------------------------------------------------------------

@dataclass(frozen=True)
class SpsaConfig:
    a: float = 0.5
    c: float = 0.1
    A: float = 5.0
    alpha: float = 0.602
    gamma: float = 0.101

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0 or self.A < 0 or self.alpha <= 0 or self.gamma <= 0:
            raise ValueError(f"SPSA gains must be positive: {self}")

    def gains(self, k: int) -> tuple[float, float]:
        return self.a / (self.A + k + 1) ** self.alpha, self.c / (k + 1) ** self.gamma


def spsa_step(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    k: int,
    spsa: SpsaConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One SPSA update; returns ``(new_params, gradient_estimate)``."""
    params = np.asarray(params, dtype=float)
    a_k, c_k = spsa.gains(k)
    delta = rng.choice(np.array([-1.0, 1.0]), size=params.shape)
    diff = loss_fn(params + c_k * delta) - loss_fn(params - c_k * delta)
    grad = diff / (2.0 * c_k) * delta  # 1/delta_i == delta_i for +-1 entries
    return params - a_k * grad, grad


@dataclass(frozen=True)
class AdversarialTraining:
    epsilon: float = 0.15
    attack: str = "fgsm"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.attack != "fgsm":
            raise ValueError(f"unsupported training attack {self.attack!r}")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 50
    spsa: SpsaConfig = field(default_factory=SpsaConfig)
    init_std: float = 0.1
    adversarial: AdversarialTraining | None = None
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class TrainResult:
    model: VqcModel
    loss_history: list[float]
    params_history: list[np.ndarray]
    best_iteration: int


def _training_batch(params: np.ndarray, data: Dataset, adv: AdversarialTraining | None):
    if adv is None:
        return data.X, data.y
    from .adv import fgsm_batch

    X_adv = fgsm_batch(VqcModel(params), data.X, data.y, adv.epsilon)
    return np.vstack([data.X, X_adv]), np.concatenate([data.y, data.y])


def train(
    model: VqcModel,
    data: Dataset,
    config: TrainConfig,
    stream: tuple = ("spsa",),
    start_iteration: int = 0,
    select_best: bool = True,
) -> TrainResult:
    """Full-batch SPSA on the squared hinge loss.

    Iteration ``k`` draws its perturbation from ``derive(config.seed, *stream, k)``
    so runs are reproducible and can be matched across training drivers. With
    ``select_best`` the lowest-loss iterate is returned, otherwise the last.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    params = np.array(model.params, dtype=float)
    losses: list[float] = []
    history: list[np.ndarray] = [params.copy()]
    for j in range(config.iterations):
        k = start_iteration + j
        Xb, yb = _training_batch(params, data, config.adversarial)

        def loss_fn(p, Xb=Xb, yb=yb):
            return float(np.mean(hinge_sq(exact_values(p, Xb), yb)))

        losses.append(loss_fn(params))
        params, _ = spsa_step(loss_fn, params, k, config.spsa, derive(config.seed, *stream, k))
        history.append(params.copy())
    Xb, yb = _training_batch(params, data, config.adversarial)
    losses.append(float(np.mean(hinge_sq(exact_values(params, Xb), yb))))
    best = int(np.argmin(losses)) if select_best else len(losses) - 1
    return TrainResult(model.with_params(history[best]), losses, history, best)


def train_fresh(data: Dataset, config: TrainConfig, stream: tuple = ("spsa",)) -> TrainResult:
    """Initialize from ``N(0, init_std^2)`` using the config seed, then train."""
    model = init_model(derive(config.seed, "init"), config.init_std)
    return train(model, data, config, stream)


# --- gradients --------------------------------------------------------------

def parameter_shift_gradient(model: VqcModel, X, y=None, wrt: str = "params") -> np.ndarray:
    """Exact gradients by the two-term shift rule.

    Without ``y`` returns d<Z_0>/d(angle); with ``y`` the gradient of the
    per-sample squared hinge loss. Output shape ``(n_samples, n_angles)``.
    """
    X = _as_batch(X)
    if wrt == "params":
        kinds, targets, controls, base = _program(model.params)
        grads = np.empty((len(X), N_PARAMS))
        for j, slot in enumerate(_PARAM_SLOT):
            plus, minus = base.copy(), base.copy()
            plus[slot] += SHIFT
            minus[slot] -= SHIFT
            f_p = kernels.expectation_z_batch(X, kinds, targets, controls, plus, 0)
            f_m = kernels.expectation_z_batch(X, kinds, targets, controls, minus, 0)
            grads[:, j] = (f_p - f_m) / 2.0
    elif wrt == "inputs":
        grads = np.empty_like(X)
        for i in range(X.shape[1]):
            shift = np.zeros(X.shape[1])
            shift[i] = SHIFT
            grads[:, i] = (exact_values(model.params, X + shift)
                           - exact_values(model.params, X - shift)) / 2.0
    else:
        raise ValueError(f"wrt must be 'params' or 'inputs', got {wrt!r}")
    if y is None:
        return grads
    y = np.broadcast_to(np.asarray(y, dtype=float), (len(X),))
    f = exact_values(model.params, X)
    dloss_df = -2.0 * np.maximum(0.0, 1.0 - y * f) * y
    return grads * dloss_df[:, None]


def estimate_lipschitz(model: VqcModel, X) -> float:
    """Largest ``|f(x) - f(x')| / ||x - x'||_2`` over all distinct sample pairs."""
    X = _as_batch(X)
    if len(X) < 2:
        raise ValueError("need at least 2 samples")
    f = exact_values(model.params, X)
    best = 0.0
    # row blocks keep the pairwise matrices small
    for start in range(0, len(X), 256):
        xb, fb = X[start:start + 256], f[start:start + 256]
        dist = np.sqrt(((xb[:, None, :] - X[None, :, :]) ** 2).sum(-1))
        df = np.abs(fb[:, None] - f[None, :])
        mask = dist > 0
        if mask.any():
            best = max(best, float((df[mask] / dist[mask]).max()))
    return best
