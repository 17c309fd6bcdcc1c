"""Single-process federated training with FedAvg and a clipped Gaussian mechanism.

Clients are logical: each owns a slice of the training data and a set of
pre-assigned random streams, so the run log does not depend on the order in
which clients are simulated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import Dataset
from .seeding import derive
from .vqc import (
    N_PARAMS,
    SpsaConfig,
    TrainConfig,
    VqcModel,
    accuracy,
    exact_values,
    init_model,
    train,
    train_fresh,
)

BYTES_PER_PARAM = 8
HEADER_BYTES = 32


# --- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    kind: str = "iid"          # iid | label_skew | quantity_skew
    beta: float = 0.5          # label skew concentration
    alpha: float = 0.5         # quantity skew concentration
    min_size: int = 10

    def __post_init__(self):
        if self.kind not in ("iid", "label_skew", "quantity_skew"):
            raise ValueError(f"unknown partition {self.kind!r}")
        if self.beta <= 0 or self.alpha <= 0:
            raise ValueError("Dirichlet concentrations must be positive")


@dataclass(frozen=True)
class DpConfig:
    epsilon_per_round: float
    delta: float = 1e-5
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.epsilon_per_round <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip norm must be positive")

    @property
    def sigma(self) -> float:
        """Gaussian-mechanism noise scale for sensitivity ``clip_norm``."""
        return self.clip_norm * math.sqrt(2.0 * math.log(1.25 / self.delta)) / self.epsilon_per_round


@dataclass(frozen=True)
class FederatedConfig:
    n_clients: int = 4
    rounds: int = 20
    local_iterations: int = 3
    partition: Partition = field(default_factory=Partition)
    dp: DpConfig | None = None
    spsa: SpsaConfig = field(default_factory=SpsaConfig)
    init_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("need at least one client")
        if self.rounds < 0 or self.local_iterations < 0:
            raise ValueError("rounds and local_iterations must be non-negative")


# --- partitioning ----------------------------------------------------------------

def _sizes_from_proportions(total: int, props: np.ndarray, minimum: int) -> np.ndarray:
    spare = total - minimum * len(props)
    raw = props * spare
    sizes = np.floor(raw).astype(int)
    # hand out the remainder to the largest fractional parts
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[: spare - sizes.sum()]] += 1
    return sizes + minimum


def partition_dataset(data: Dataset, scheme: Partition, n_clients: int,
                      rng: np.random.Generator) -> list[Dataset]:
    """Split ``data`` into ``n_clients`` disjoint shards covering every sample."""
    n = len(data)
    if n < n_clients:
        raise ValueError(f"{n} samples cannot feed {n_clients} clients")
    if scheme.kind == "iid":
        perm = rng.permutation(n)
        return [data.subset(idx) for idx in np.array_split(perm, n_clients)]

    if scheme.kind == "quantity_skew":
        if n < scheme.min_size * n_clients:
            raise ValueError("dataset too small for the per-client minimum")
        props = rng.dirichlet(np.full(n_clients, scheme.alpha))
        sizes = _sizes_from_proportions(n, props, scheme.min_size)
        perm = rng.permutation(n)
        cuts = np.cumsum(sizes)[:-1]
        return [data.subset(idx) for idx in np.split(perm, cuts)]

    # label skew: equal shard sizes, class mix of each shard ~ Dir(beta)
    classes = np.unique(data.y)
    pools = {c: list(rng.permutation(np.flatnonzero(data.y == c))) for c in classes}
    sizes = [len(a) for a in np.array_split(np.arange(n), n_clients)]
    shards = []
    for i, size in enumerate(sizes):
        mix = rng.dirichlet(np.full(len(classes), scheme.beta))
        want = _sizes_from_proportions(size, mix, 0)
        take: list[int] = []
        for c, w in zip(classes, want):
            got = pools[c][:w]
            pools[c] = pools[c][w:]
            take.extend(got)
        # classes that ran dry are backfilled from whatever remains
        for c in classes:
            short = size - len(take)
            if short <= 0:
                break
            got = pools[c][:short]
            pools[c] = pools[c][short:]
            take.extend(got)
        shards.append(np.array(take, dtype=int))
    return [data.subset(idx) for idx in shards]


# --- client / server steps ---------------------------------------------------------

def local_update(global_model: VqcModel, client_data: Dataset, local_iterations: int,
                 config: FederatedConfig, client: int, round_index: int) -> np.ndarray:
    """SPSA from the global parameters; returns ``theta_local - theta_global``."""
    if len(client_data) == 0:
        raise ValueError(f"client {client} has no data")
    if local_iterations == 0:
        return np.zeros(N_PARAMS)
    tc = TrainConfig(iterations=local_iterations, spsa=config.spsa, seed=config.seed)
    result = train(global_model, client_data, tc, stream=("client", client, "spsa"),
                   start_iteration=round_index * local_iterations, select_best=False)
    return result.model.params - global_model.params


def clip(delta: np.ndarray, clip_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(delta))
    if norm <= clip_norm:
        return np.array(delta, dtype=float)
    return np.asarray(delta, dtype=float) * (clip_norm / norm)


def clip_and_noise(delta: np.ndarray, dp: DpConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(noised, clipped)`` updates."""
    clipped = clip(delta, dp.clip_norm)
    return clipped + rng.normal(0.0, dp.sigma, clipped.shape), clipped


def fedavg_aggregate(theta: np.ndarray, updates: list[np.ndarray]) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not updates:
        return theta.copy()
    shapes = {np.shape(u) for u in updates}
    if len(shapes) != 1 or shapes.pop() != theta.shape:
        raise ValueError("client updates do not match the parameter arity")
    return theta + np.mean(np.stack(updates), axis=0)


# --- accounting ---------------------------------------------------------------------

@dataclass
class PrivacyLedger:
    per_round: list[float]
    epsilon_total: float
    delta_total: float


def compose_privacy(epsilon_per_round: float, rounds: int, delta: float = 1e-5) -> PrivacyLedger:
    """Basic sequential composition over ``rounds`` releases."""
    if epsilon_per_round <= 0 or rounds < 0:
        raise ValueError("epsilon must be positive and rounds non-negative")
    return PrivacyLedger([float(epsilon_per_round)] * rounds,
                         float(epsilon_per_round * rounds), float(delta * rounds))


@dataclass
class CommunicationCost:
    per_message: int
    per_round: int
    total: int


def communication_cost(n_clients: int, param_count: int, rounds: int) -> CommunicationCost:
    """Bytes for broadcast + upload of float64 parameters with a fixed header."""
    per_message = param_count * BYTES_PER_PARAM + HEADER_BYTES
    per_round = n_clients * 2 * per_message
    return CommunicationCost(per_message, per_round, rounds * per_round)


# --- full run -----------------------------------------------------------------------

@dataclass
class RoundRecord:
    round: int
    accuracy: float
    epsilon_spent: float | None
    bytes: int
    per_client_update_norms: list[float]
    per_client_clipped_norms: list[float] | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FederatedRunLog:
    config: FederatedConfig
    initial_model: VqcModel
    final_model: VqcModel
    rounds: list[RoundRecord]
    ledger: PrivacyLedger | None
    communication: CommunicationCost
    client_sizes: list[int]

    @property
    def final_accuracy(self) -> float | None:
        return self.rounds[-1].accuracy if self.rounds else None


def run_federated(config: FederatedConfig, train_set: Dataset, test_set: Dataset) -> FederatedRunLog:
    shards = partition_dataset(train_set, config.partition, config.n_clients,
                               derive(config.seed, "partition"))
    theta = init_model(derive(config.seed, "init"), config.init_std)
    initial = theta
    comm = communication_cost(config.n_clients, N_PARAMS, 1)
    records: list[RoundRecord] = []
    for t in range(config.rounds):
        updates, norms, clipped_norms = [], [], []
        for i, shard in enumerate(shards):
            delta = local_update(theta, shard, config.local_iterations, config, i, t)
            norms.append(float(np.linalg.norm(delta)))
            if config.dp is not None:
                delta, clipped = clip_and_noise(delta, config.dp, derive(config.seed, "dp", t, i))
                clipped_norms.append(float(np.linalg.norm(clipped)))
            updates.append(delta)
        theta = theta.with_params(fedavg_aggregate(theta.params, updates))
        spent = None if config.dp is None else config.dp.epsilon_per_round * (t + 1)
        records.append(RoundRecord(t + 1, accuracy(theta, test_set), spent, comm.per_round * (t + 1),
                                   norms, clipped_norms if config.dp is not None else None))
    ledger = None
    if config.dp is not None:
        ledger = compose_privacy(config.dp.epsilon_per_round, config.rounds, config.dp.delta)
    return FederatedRunLog(config, initial, theta, records, ledger,
                           communication_cost(config.n_clients, N_PARAMS, config.rounds),
                           [len(s) for s in shards])


# --- membership inference -------------------------------------------------------------

@dataclass
class MiaReport:
    attack_success_rate: float
    n_member: int
    n_nonmember: int
    threshold: float
    true_positive_rate: float
    true_negative_rate: float


def max_confidence(model: VqcModel, X) -> np.ndarray:
    """``max(p0, p1)`` of the readout qubit from exact expectation values."""
    return (1.0 + np.abs(exact_values(model.params, np.atleast_2d(X)))) / 2.0


def balanced_accuracy(member_scores, nonmember_scores, threshold: float) -> tuple[float, float, float]:
    tpr = float(np.mean(np.asarray(member_scores) >= threshold))
    tnr = float(np.mean(np.asarray(nonmember_scores) < threshold))
    return (tpr + tnr) / 2.0, tpr, tnr


def best_threshold(member_scores, nonmember_scores) -> float:
    candidates = np.unique(np.concatenate([member_scores, nonmember_scores, [np.inf]]))
    accs = [balanced_accuracy(member_scores, nonmember_scores, c)[0] for c in candidates]
    return float(candidates[int(np.argmax(accs))])


def fit_shadow_threshold(aux: Dataset, n_shadow: int = 4, train_config: TrainConfig | None = None,
                         seed: int = 0) -> float:
    """Train shadow models on disjoint halves of auxiliary data and fit a threshold."""
    if len(aux) < 4 * n_shadow:
        raise ValueError(f"need at least {4 * n_shadow} auxiliary samples for {n_shadow} shadows")
    cfg = train_config or TrainConfig()
    perm = derive(seed, "shadow-split").permutation(len(aux))
    chunks = np.array_split(perm, 2 * n_shadow)
    member_scores, nonmember_scores = [], []
    for m in range(n_shadow):
        inside, outside = aux.subset(chunks[2 * m]), aux.subset(chunks[2 * m + 1])
        shadow = train_fresh(inside, replace(cfg, seed=int(derive(seed, "shadow", m).integers(2**31 - 1))))
        member_scores.append(max_confidence(shadow.model, inside.X))
        nonmember_scores.append(max_confidence(shadow.model, outside.X))
    return best_threshold(np.concatenate(member_scores), np.concatenate(nonmember_scores))


def mia_shadow_attack(
    target: VqcModel,
    members: Dataset,
    nonmembers: Dataset,
    n_shadow: int = 4,
    seed: int = 0,
    aux: Dataset | None = None,
    train_config: TrainConfig | None = None,
    threshold: float | None = None,
    max_samples: int = 1000,
) -> MiaReport:
    """Confidence-threshold membership inference calibrated on shadow models.

    Scores balanced accuracy over equally sized member and non-member samples
    (at most ``max_samples`` of each).
    """
    if len(members) == 0 or len(nonmembers) == 0:
        raise ValueError("member and non-member sets must be non-empty")
    if threshold is None:
        if aux is None:
            raise ValueError("auxiliary data is required to train shadow models")
        threshold = fit_shadow_threshold(aux, n_shadow, train_config, seed)
    k = min(len(members), len(nonmembers), max_samples)
    rng = derive(seed, "mia-sample")
    mem = members.subset(rng.permutation(len(members))[:k])
    non = nonmembers.subset(rng.permutation(len(nonmembers))[:k])
    acc, tpr, tnr = balanced_accuracy(max_confidence(target, mem.X), max_confidence(target, non.X),
                                      threshold)
    return MiaReport(acc, k, k, float(threshold), tpr, tnr)
