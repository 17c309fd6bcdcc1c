"""Experiment drivers behind ``qtrust run``.

Each driver takes a resolved :class:`ExperimentConfig`, one replicate seed and
an output directory, and writes plain CSV/JSON artifacts there. Files named
``table_*.csv`` are the ones ``qtrust report`` aggregates across replicates.
Nothing here records wall time, so reruns are byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import stats

from . import adv, data, fed, uq
from ._io import write_csv, write_json, write_jsonl
from .config import ExperimentConfig
from .seeding import derive
from .vqc import (
    AdversarialTraining,
    SpsaConfig,
    TrainConfig,
    accuracy,
    decision_values,
    estimate_lipschitz,
    exact_values,
    sign_label,
    train_fresh,
)

UQ_METRICS = ("entropy", "variation_ratio", "shot_std", "max_confidence", "aleatoric", "epistemic")


def dataset(cfg: ExperimentConfig, seed: int) -> tuple[data.Dataset, data.Dataset]:
    d = cfg.data
    return data.two_moons_split(d.n_samples, d.noise_std, d.train_fraction, derive(seed, "data"))


def train_config(cfg: ExperimentConfig, seed: int, adversarial: AdversarialTraining | None = None) -> TrainConfig:
    s = cfg.train.spsa
    return TrainConfig(
        iterations=cfg.train.iterations,
        spsa=SpsaConfig(a=s.a, c=s.c, A=s.A, alpha=s.alpha, gamma=s.gamma),
        init_std=cfg.train.init_std,
        adversarial=adversarial,
        seed=seed,
    )


def _write_dataset(path: Path, ds: data.Dataset) -> None:
    write_csv(path, ["sample_id", "x0", "x1", "label"],
              ([i, x[0], x[1], int(y)] for i, (x, y) in enumerate(zip(ds.X, ds.y))))


# --- train ----------------------------------------------------------------------

def run_train(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    train_set, test_set = dataset(cfg, seed)
    result = train_fresh(train_set, train_config(cfg, seed))
    model = result.model
    shots = cfg.train.eval_shots
    summary = {
        "seed": seed,
        "n_train": len(train_set),
        "n_test": len(test_set),
        "iterations": cfg.train.iterations,
        "best_iteration": result.best_iteration,
        "final_loss": result.loss_history[result.best_iteration],
        "train_accuracy": accuracy(model, train_set),
        "test_accuracy_exact": accuracy(model, test_set),
        "test_accuracy_shots": accuracy(model, test_set, shots, derive(seed, "eval", "shots")),
        "eval_shots": shots,
        "params": model.params,
    }
    model.save(out / "model.json")
    write_csv(out / "loss_history.csv", ["iteration", "loss"], enumerate(result.loss_history))
    _write_dataset(out / "train_data.csv", train_set)
    _write_dataset(out / "test_data.csv", test_set)
    write_json(out / "train_summary.json", summary)
    write_csv(out / "table_classification.csv",
              ["train_accuracy", "test_accuracy_exact", "test_accuracy_shots", "final_loss"],
              [[summary["train_accuracy"], summary["test_accuracy_exact"],
                summary["test_accuracy_shots"], summary["final_loss"]]])
    return summary


# --- uq -------------------------------------------------------------------------------

def _group_rows(report: uq.UncertaintyReport, correct: np.ndarray) -> list[dict]:
    rows = []
    for name in UQ_METRICS:
        values = getattr(report, name)
        row = {"metric": name}
        try:
            g = uq.group_statistics(values[correct], values[~correct])
        except ValueError:
            g = None
        fields = ("mean_correct", "std_correct", "mean_incorrect", "std_incorrect", "delta",
                  "cohens_d", "p_value", "t_welch", "df_welch", "t_student", "n_correct",
                  "n_incorrect")
        for f in fields:
            row[f] = getattr(g, f) if g is not None else None
        rows.append(row)
    return rows


def run_uq(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    u = cfg.uq
    train_set, test_set = dataset(cfg, seed)
    members = uq.build_ensemble(train_set, u.ensemble_size, train_config(cfg, seed), u.ensemble_mode)
    report = uq.ensemble_uq(members, test_set.X, u.shots, seed=seed, level=u.ci_level,
                            prior=u.prior, ci_draws=u.ci_draws)
    correct = report.prediction == test_set.y
    ci = report.predicted_interval()

    header = ["sample_id", "x0", "x1", "label", "prediction", "correct", "entropy", "aleatoric",
              "epistemic", "variation_ratio", "shot_std", "max_confidence", "ci_lo", "ci_hi"]
    rows = ([i, test_set.X[i, 0], test_set.X[i, 1], int(test_set.y[i]), int(report.prediction[i]),
             bool(correct[i]), report.entropy[i], report.aleatoric[i], report.epistemic[i],
             report.variation_ratio[i], report.shot_std[i], report.max_confidence[i],
             ci[i, 0], ci[i, 1]] for i in range(len(test_set)))
    write_csv(out / "uncertainty_per_sample.csv", header, rows)

    groups = _group_rows(report, correct)
    write_csv(out / "table_uncertainty.csv", list(groups[0]), ([r[k] for k in r] for r in groups))

    cal = uq.calibration(report.max_confidence, correct, u.n_bins)
    write_csv(out / "reliability.csv", ["bin", "lower", "upper", "mean_confidence", "accuracy", "count"],
              ([b, r.lower, r.upper, r.mean_confidence, r.accuracy, r.count]
               for b, r in enumerate(cal.bins)))

    # temperature is fit on the training split and applied to the test split
    def ensemble_values(X):
        return np.mean([exact_values(m.params, X) for m in members], axis=0)

    temp = uq.temperature_scale(ensemble_values(train_set.X), train_set.y, k=u.link_scale, n_bins=u.n_bins)
    test_values = ensemble_values(test_set.X)
    test_correct = sign_label(test_values) == test_set.y
    test_before = uq.calibration(uq.logistic_confidence(test_values, 1.0, u.link_scale), test_correct, u.n_bins)
    test_after = uq.calibration(uq.logistic_confidence(test_values, temp.temperature, u.link_scale),
                                test_correct, u.n_bins)

    curve = uq.risk_coverage_curve(report.max_confidence, correct)
    write_csv(out / "risk_coverage.csv", ["threshold", "coverage", "risk"],
              ([p.threshold, p.coverage, p.risk] for p in curve))

    write_json(out / "ensemble.json", {
        "mode": u.ensemble_mode,
        "size": u.ensemble_size,
        "members": [m.to_dict() for m in members],
    })
    summary = {
        "seed": seed,
        "n_test": len(test_set),
        "shots": u.shots,
        "ensemble_size": u.ensemble_size,
        "ensemble_mode": u.ensemble_mode,
        "accuracy": float(correct.mean()),
        "group_statistics": groups,
        "calibration": {"ece": cal.ece, "mce": cal.mce, "brier": cal.brier, "n_bins": u.n_bins},
        "temperature_scaling": {
            "temperature": temp.temperature,
            "link_scale": u.link_scale,
            "validation_ece_before": temp.ece_before,
            "validation_ece_after": temp.ece_after,
            "test_ece_before": test_before.ece,
            "test_ece_after": test_after.ece,
            "test_brier_before": test_before.brier,
            "test_brier_after": test_after.brier,
        },
        "mean_entropy": float(report.entropy.mean()),
        "mean_epistemic": float(report.epistemic.mean()),
        "credible_interval_level": u.ci_level,
        "dirichlet_prior": u.prior,
    }
    write_json(out / "uq_summary.json", summary)
    return summary


# --- shots-study ------------------------------------------------------------------------

SHOT_METRICS = ("accuracy", "entropy", "variation_ratio", "max_confidence", "shot_std")


def run_shots_study(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    s = cfg.shots_study
    train_set, test_set = dataset(cfg, seed)
    model = train_fresh(train_set, train_config(cfg, seed)).model

    records = []
    map_rows = []
    for S in s.shot_counts:
        for r in range(s.repeats):
            rep = uq.ensemble_uq([model], test_set.X, S, seed=seed, ci_draws=0, stream=("shots", S, r))
            records.append({
                "shots": S,
                "repeat": r,
                "accuracy": float(np.mean(rep.prediction == test_set.y)),
                "entropy": float(rep.entropy.mean()),
                "variation_ratio": float(rep.variation_ratio.mean()),
                "max_confidence": float(rep.max_confidence.mean()),
                "shot_std": float(rep.shot_std.mean()),
            })
            if r == 0:
                order = np.argsort(rep.entropy, kind="stable")
                k = min(s.highlight, len(order))
                for group, idx in (("high", order[::-1][:k]), ("low", order[:k])):
                    for rank, i in enumerate(idx):
                        map_rows.append([S, group, rank, int(i), test_set.X[i, 0], test_set.X[i, 1],
                                         rep.entropy[i]])
    write_csv(out / "shots_study.csv", ["shots", "repeat", *SHOT_METRICS],
              ([rec["shots"], rec["repeat"], *(rec[m] for m in SHOT_METRICS)] for rec in records))
    write_csv(out / "uncertainty_map.csv", ["shots", "group", "rank", "sample_id", "x0", "x1", "entropy"],
              map_rows)

    shots_axis = np.array([rec["shots"] for rec in records], dtype=float)
    lo, hi = min(s.shot_counts), max(s.shot_counts)
    table = []
    for m in SHOT_METRICS:
        values = np.array([rec[m] for rec in records])
        initial = float(values[shots_axis == lo].mean())
        final = float(values[shots_axis == hi].mean())
        if np.ptp(values) > 0 and np.ptp(shots_axis) > 0:
            r, p = stats.pearsonr(shots_axis, values)
        else:
            r, p = None, None
        change = 100.0 * (final - initial) / initial if initial != 0 else None
        table.append([m, initial, final, change, r, p])
    header = ["metric", "initial", "final", "change_pct", "pearson_r", "p_value"]
    write_csv(out / "table_shots.csv", header, table)

    var = uq.shot_variance_study(s.variance_probability, s.shot_counts, s.variance_repetitions, seed)
    write_csv(out / "shot_variance.csv", ["shots", "variance", "theoretical"],
              zip(var.shots, var.variance, var.theoretical))
    summary = {
        "seed": seed,
        "shot_counts": s.shot_counts,
        "repeats": s.repeats,
        "metrics": [dict(zip(header, row)) for row in table],
        "variance_probability": s.variance_probability,
        "variance_repetitions": s.variance_repetitions,
        "variance_slope": var.slope,
        "variance_intercept": var.intercept,
    }
    write_json(out / "shots_summary.json", summary)
    return summary


# --- attack ------------------------------------------------------------------------------

def run_attack(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    a = cfg.attack
    train_set, test_set = dataset(cfg, seed)
    model = train_fresh(train_set, train_config(cfg, seed)).model
    report = adv.evaluate_robustness(model, test_set, a.attacks, a.epsilons, seed=seed,
                                     keep_examples=True, pgd_steps=a.pgd_steps)
    write_csv(out / "robustness_curve.csv",
              ["attack", "epsilon", "clean_acc", "robust_acc", "drop", "success_rate"],
              ([r.attack, r.epsilon, r.clean_accuracy, r.robust_accuracy, r.accuracy_drop,
                r.attack_success_rate] for r in report.rows))

    # worst l-infinity offset relative to the budget; must stay <= 1
    budget_ratio = {}
    for (attack, eps), X_adv in report.examples.items():
        if eps > 0:
            ratio = float(np.abs(X_adv - test_set.X).max() / eps)
            budget_ratio[attack] = max(budget_ratio.get(attack, 0.0), ratio)

    example_rows = []
    for attack in a.attacks:
        spec = adv.AttackSpec(attack, a.example_epsilon, steps=a.pgd_steps, seed=seed)
        X_adv = adv.generate(model, test_set.X, test_set.y, spec)
        fooled = sign_label(decision_values(model, X_adv)) != test_set.y
        for i in range(len(test_set)):
            example_rows.append([i, attack, test_set.X[i, 0], test_set.X[i, 1], X_adv[i, 0], X_adv[i, 1],
                                 bool(fooled[i])])
    write_csv(out / "adversarial_examples.csv",
              ["sample_id", "attack", "x0", "x1", "x0_adv", "x1_adv", "fooled"], example_rows)

    vuln = adv.vulnerability_scores(model, test_set, a.vulnerability_epsilon, a.top_k)
    tag = np.full(len(test_set), "", dtype=object)
    tag[vuln.bottom_k] = "least"
    tag[vuln.top_k] = "most"
    write_csv(out / "vulnerability.csv", ["sample_id", "x0", "x1", "label", "score", "rank_group"],
              ([i, test_set.X[i, 0], test_set.X[i, 1], int(test_set.y[i]), vuln.scores[i], tag[i]]
               for i in range(len(test_set))))

    pgd_vs_fgsm = {}
    if "fgsm" in a.attacks and "pgd" in a.attacks:
        for eps in a.epsilons:
            l_f = adv.loss_per_sample(model, report.examples[("fgsm", float(eps))], test_set.y)
            l_p = adv.loss_per_sample(model, report.examples[("pgd", float(eps))], test_set.y)
            pgd_vs_fgsm[repr(float(eps))] = {
                "fraction_pgd_loss_ge_fgsm": float(np.mean(l_p >= l_f - 1e-9)),
                "mean_loss_fgsm": float(l_f.mean()),
                "mean_loss_pgd": float(l_p.mean()),
            }

    table = [[atk, report.mean_drop(atk),
              float(np.mean([r.clean_accuracy for r in report.by_attack(atk)])),
              float(np.mean([r.robust_accuracy for r in report.by_attack(atk)]))] for atk in a.attacks]
    write_csv(out / "table_attack.csv", ["attack", "mean_drop", "clean_acc", "mean_robust_acc"], table)
    write_csv(out / "table_robustness.csv",
              ["attack", "epsilon", "clean_acc", "robust_acc", "drop", "success_rate"],
              ([r.attack, r.epsilon, r.clean_accuracy, r.robust_accuracy, r.accuracy_drop,
                r.attack_success_rate] for r in report.rows))
    model.save(out / "model.json")
    summary = {
        "seed": seed,
        "epsilons": a.epsilons,
        "pgd_steps": a.pgd_steps,
        "per_attack": {row[0]: {"mean_drop": row[1], "clean_acc": row[2], "mean_robust_acc": row[3]}
                       for row in table},
        "max_epsilon_drop": {atk: report.row(atk, max(a.epsilons)).accuracy_drop for atk in a.attacks},
        "budget_ratio": budget_ratio,
        "pgd_vs_fgsm": pgd_vs_fgsm,
        "example_epsilon": a.example_epsilon,
        "vulnerability_epsilon": a.vulnerability_epsilon,
        "most_vulnerable": vuln.top_k,
        "least_vulnerable": vuln.bottom_k,
    }
    write_json(out / "attack_summary.json", summary)
    return summary


# --- defend -----------------------------------------------------------------------------

def run_defend(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    d = cfg.defend
    train_set, test_set = dataset(cfg, seed)
    standard = train_fresh(train_set, train_config(cfg, seed)).model
    robust = train_fresh(train_set, train_config(cfg, seed, AdversarialTraining(d.train_epsilon))).model

    curves = {name: adv.evaluate_robustness(m, test_set, ("fgsm",), d.eval_epsilons, seed=seed)
              for name, m in (("standard", standard), ("robust", robust))}
    write_csv(out / "defense_curve.csv",
              ["model", "epsilon", "clean_acc", "robust_acc", "drop", "success_rate"],
              ([name, r.epsilon, r.clean_accuracy, r.robust_accuracy, r.accuracy_drop, r.attack_success_rate]
               for name, rep in curves.items() for r in rep.rows))

    X_transfer = adv.fgsm_batch(standard, test_set.X, test_set.y, d.transfer_epsilon)
    transfer = adv.transfer_rate(standard, robust, test_set, X_transfer)

    def robust_at(model, eps):
        X_adv = adv.fgsm_batch(model, test_set.X, test_set.y, eps)
        return float(np.mean(sign_label(decision_values(model, X_adv)) == test_set.y))

    clean = {"standard": accuracy(standard, test_set), "robust": accuracy(robust, test_set)}
    at_eps = {"standard": robust_at(standard, d.robust_epsilon), "robust": robust_at(robust, d.robust_epsilon)}
    max_drop = {name: max(r.accuracy_drop for r in rep.rows) for name, rep in curves.items()}
    lip = {"standard": estimate_lipschitz(standard, test_set.X), "robust": estimate_lipschitz(robust, test_set.X)}

    table = [
        ["clean_accuracy", clean["standard"], clean["robust"], clean["robust"] - clean["standard"]],
        ["robust_accuracy", at_eps["standard"], at_eps["robust"], at_eps["robust"] - at_eps["standard"]],
        ["max_accuracy_drop", max_drop["standard"], max_drop["robust"], max_drop["robust"] - max_drop["standard"]],
        ["lipschitz", lip["standard"], lip["robust"], lip["robust"] - lip["standard"]],
        ["transfer_rate", None, transfer, None],
    ]
    write_csv(out / "table_defense.csv", ["metric", "standard", "robust", "improvement"], table)
    standard.save(out / "standard_model.json")
    robust.save(out / "robust_model.json")
    summary = {
        "seed": seed,
        "train_epsilon": d.train_epsilon,
        "robust_epsilon": d.robust_epsilon,
        "transfer_epsilon": d.transfer_epsilon,
        "clean_accuracy": clean,
        "robust_accuracy": at_eps,
        "max_accuracy_drop": max_drop,
        "lipschitz": lip,
        "transfer_rate": transfer,
    }
    write_json(out / "defense_summary.json", summary)
    return summary


# --- federated ---------------------------------------------------------------------------

def run_federated(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    f = cfg.federated
    train_set, test_set = dataset(cfg, seed)
    tc = train_config(cfg, seed)
    centralized = train_fresh(train_set, tc).model
    central_acc = accuracy(centralized, test_set)

    aux_raw = data.make_two_moons(f.aux_samples, cfg.data.noise_std, derive(seed, "aux"))
    std = train_set.standardization
    aux = data.Dataset(std.apply(aux_raw.X), aux_raw.y, std)
    threshold = fed.fit_shadow_threshold(aux, f.mia_shadows, tc, seed)

    def mia(model):
        return fed.mia_shadow_attack(model, train_set, test_set, seed=seed, threshold=threshold,
                                     max_samples=f.mia_max_samples).attack_success_rate

    central_mia = mia(centralized)
    runs = []  # (name, method, distribution, dp epsilon, log)
    for scheme in f.partitions:
        runs.append((f"fl_{scheme}", "fl_vanilla", scheme, None))
    for eps in f.dp_epsilons:
        runs.append((f"dp_eps{eps:g}", "fl_dp", "iid", eps))

    rows = [{
        "method": "centralized", "distribution": "none", "epsilon_per_round": None, "epsilon_total": None,
        "test_acc": central_acc, "delta_acc": 0.0, "mia_success": central_mia, "privacy_gain": 0.0,
        "utility_ratio": 1.0, "bytes_per_round": 0, "bytes_total": 0,
    }]
    comm_rows = []
    for name, method, scheme, eps in runs:
        fc = fed.FederatedConfig(
            n_clients=f.n_clients,
            rounds=f.rounds,
            local_iterations=f.local_iterations,
            partition=fed.Partition(scheme, beta=f.label_skew_beta, alpha=f.quantity_skew_alpha),
            dp=None if eps is None else fed.DpConfig(eps, f.delta, f.clip_norm),
            spsa=tc.spsa,
            init_std=tc.init_std,
            seed=seed,
        )
        log = fed.run_federated(fc, train_set, test_set)
        write_jsonl(out / f"rounds_{name}.jsonl", (r.to_dict() for r in log.rounds))
        acc = log.final_accuracy
        rate = mia(log.final_model)
        rows.append({
            "method": method, "distribution": scheme, "epsilon_per_round": eps,
            "epsilon_total": None if log.ledger is None else log.ledger.epsilon_total,
            "test_acc": acc, "delta_acc": acc - central_acc, "mia_success": rate,
            "privacy_gain": central_mia - rate,
            "utility_ratio": acc / central_acc if central_acc > 0 else None,
            "bytes_per_round": log.communication.per_round, "bytes_total": log.communication.total,
        })
        comm_rows.append([name, f.rounds, log.communication.per_round, log.communication.total, acc])

    cols = list(rows[0])
    write_csv(out / "table_federated.csv", cols, ([r[c] for c in cols] for r in rows))
    write_csv(out / "communication.csv", ["run", "rounds", "bytes_per_round", "bytes_total", "final_accuracy"],
              comm_rows)

    privacy = []
    for r in rows:
        if r["method"] == "fl_dp":
            setting = "dp"
        elif r["method"] == "centralized":
            setting = "centralized"
        elif r["distribution"] == "iid":
            setting = "fl_vanilla"
        else:
            continue
        privacy.append([setting, r["epsilon_per_round"], r["epsilon_total"], r["test_acc"], r["delta_acc"],
                        r["mia_success"], r["privacy_gain"], r["utility_ratio"]])
    write_csv(out / "table_privacy.csv",
              ["setting", "epsilon_per_round", "epsilon_total", "test_acc", "accuracy_drop", "mia_success",
               "privacy_gain", "relative_utility"], privacy)
    summary = {
        "seed": seed,
        "n_clients": f.n_clients,
        "rounds": f.rounds,
        "local_iterations": f.local_iterations,
        "delta": f.delta,
        "clip_norm": f.clip_norm,
        "mia_threshold": threshold,
        "rows": rows,
    }
    write_json(out / "federated_summary.json", summary)
    return summary


RUNNERS = {
    "train": run_train,
    "uq": run_uq,
    "shots-study": run_shots_study,
    "attack": run_attack,
    "defend": run_defend,
    "federated": run_federated,
}


def replicate_seed(seed: int, index: int) -> int:
    """Replicate ``i`` of a run with master seed ``s`` uses seed ``s + i``."""
    return seed + index


def run_replicate(cfg_dict: dict, index: int, out_dir: str) -> str:
    """Process-pool entry point: rebuild the config and run one replicate."""
    from .config import from_dict

    cfg = from_dict(cfg_dict)
    out = Path(out_dir) / f"replicate_{index:03d}"
    out.mkdir(parents=True, exist_ok=True)
    RUNNERS[cfg.experiment](cfg, replicate_seed(cfg.seed, index), out)
    return str(out)

