"""Synthetic experiment runners.

Every trial is self-contained and seeded by ``spec.seed + trial``: it samples
``W*``, the training set and a 10000-point test set, builds the label metric
from the rows of ``W*`` (or a degraded mix of them), builds the cover tree,
trains every requested loss from zero with the same sample order, and
evaluates on the shared test set.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..cover_tree import build_cover_tree, derive_u_paths, derive_v_tree
from ..errors import InvalidInputError
from ..metric_space import build_embedding_metric, mix_epsilon_metric
from ..optimizer import SGDConfig, initialize_params, sgd_train
from ..synthetic import SynthConfig, sample_bad_params, sample_dataset, sample_test_set, sample_true_params
from ..tree_loss import FLAT, U, V, evaluate, frobenius_norm, reconstruct_w
from .theory import check_bounds

LOSSES = {"tree": V, "utree": U, "xent": FLAT}
SWEEPABLE = ("n", "d", "k", "sigma", "base", "epsilon")

# (sweep name, default values, fixed settings) per experiment
DEFAULTS = {
    "I": ("n", (10, 20, 50, 100, 200, 500, 1000), dict(n=100, d=64, k=10, sigma=1.0)),
    "II": ("k", (10, 50, 100, 500), dict(n=1000, d=10, k=10, sigma=1.0)),
    "III": ("base", (1.1, 1.3, 2.0, 4.0), dict(n=1000, d=10, k=100, sigma=1.0)),
    "IV": ("epsilon", (0.0, 0.25, 0.5, 0.75, 1.0), dict(n=100, d=64, k=10, sigma=1.0)),
    "NORMS": ("k", (10, 50, 100, 500), dict(n=1000, d=10, k=10, sigma=1.0)),
    "BOUNDS": ("k", (50,), dict(n=1000, d=10, k=50, sigma=1.0)),
}
ALLOWED_SWEEPS = {
    "I": ("n", "d", "k", "sigma"),
    "II": ("k",),
    "III": ("base",),
    "IV": ("epsilon",),
    "NORMS": ("k", "d", "base"),
    "BOUNDS": ("k", "d", "base"),
}
TRIALS = 50
CI_TRIALS = 10
STEPS_PER_SAMPLE = 20


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    sweep: str
    values: tuple
    trials: int = TRIALS
    base: float = 2.0
    losses: tuple = ("tree", "xent")
    n: int = 100
    d: int = 64
    k: int = 10
    sigma: float = 1.0
    epsilon: float = 0.0
    seed: int = 0
    lambda_assumed: float = 1.0
    steps_per_sample: int = STEPS_PER_SAMPLE
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in DEFAULTS:
            raise InvalidInputError(f"unknown experiment {self.experiment!r}")
        if self.sweep not in ALLOWED_SWEEPS[self.experiment]:
            allowed = ", ".join(ALLOWED_SWEEPS[self.experiment])
            raise InvalidInputError(f"experiment {self.experiment} sweeps {allowed}, not {self.sweep!r}")
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if not self.values:
            raise InvalidInputError("sweep needs at least one value")
        for loss in self.losses:
            if loss not in LOSSES:
                raise InvalidInputError(f"unknown loss {loss!r}; choose from {', '.join(LOSSES)}")
        for v in self.values:
            _validate_point(self.sweep, v)

    def point(self, value) -> dict:
        settings = dict(n=self.n, d=self.d, k=self.k, sigma=self.sigma, base=self.base, epsilon=self.epsilon)
        settings[self.sweep] = value
        return settings


def default_spec(experiment, **overrides) -> ExperimentSpec:
    sweep, values, fixed = DEFAULTS[experiment]
    kwargs = dict(experiment=experiment, sweep=sweep, values=values, **fixed)
    kwargs.update(overrides)
    return ExperimentSpec(**kwargs)


def _validate_point(name, value):
    if name in ("n", "d", "k") and (int(value) != value or value < 1):
        raise InvalidInputError(f"{name} must be a positive integer, got {value}")
    if name == "sigma" and value < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {value}")
    if name == "base" and not value > 1:
        raise InvalidInputError(f"base must be > 1, got {value}")
    if name == "epsilon" and not 0 <= value <= 1:
        raise InvalidInputError(f"epsilon must lie in [0, 1], got {value}")


def theory_config(params, train, w_star, seed, steps_per_sample=STEPS_PER_SAMPLE) -> SGDConfig:
    """Step size ``B / (rho_A sqrt T)`` with ``B = ||W*||_F`` and ``T = steps_per_sample * n``.

    ``rho_A`` is the feature-norm bound times the Lipschitz factor of the
    parameterization (1 for flat weights).
    """
    factor = 1.0 if params.variant == FLAT else params.paths.lipschitz_factor
    B = float(np.linalg.norm(w_star))
    rho = train.rho * factor
    if B <= 0 or rho <= 0:
        # degenerate instance (k = 1 with a zero row, or sigma = 0 at the origin)
        return SGDConfig(steps_per_sample * train.n, step_mode="constant", eta=1.0, seed=seed)
    return SGDConfig(steps_per_sample * train.n, B=B, rho=rho, seed=seed)


def _trial(task):
    experiment, spec, value, trial = task
    point = spec.point(value)
    seed = spec.seed + trial
    cfg = SynthConfig(n=int(point["n"]), d=int(point["d"]), k=int(point["k"]), sigma=float(point["sigma"]), seed=seed)
    w_star = sample_true_params(cfg)
    common = dict(
        experiment=experiment, sweep=spec.sweep, value=value, seed=seed,
        n=cfg.n, d=cfg.d, k=cfg.k, sigma=cfg.sigma, base=float(point["base"]),
    )

    if experiment in ("NORMS", "BOUNDS"):
        report = check_bounds(w_star, point["base"], spec.lambda_assumed)
        tree = build_cover_tree(build_embedding_metric(w_star), point["base"])
        return [dict(common, loss="-", k_prime=derive_v_tree(tree).k_prime, **report.as_row())]

    if experiment == "IV":
        metric = mix_epsilon_metric(w_star, sample_bad_params(cfg), float(point["epsilon"]))
        common["epsilon"] = float(point["epsilon"])
    else:
        metric = build_embedding_metric(w_star)
    tree = build_cover_tree(metric, point["base"])
    tables = {V: derive_v_tree(tree), U: derive_u_paths(tree), FLAT: None}
    train = sample_dataset(w_star, cfg)
    test = sample_test_set(w_star, cfg)

    rows = []
    for loss in spec.losses:
        variant = LOSSES[loss]
        table = tables[variant]
        k_prime = cfg.k if table is None else table.k_prime
        init = initialize_params(variant, cfg.k, k_prime, cfg.d, paths=table)
        config = theory_config(init, train, w_star, seed, spec.steps_per_sample)
        result = sgd_train(init, train, config)
        params = result.final_params
        ev = evaluate(params, test)
        w_norm = frobenius_norm(params if variant == FLAT else reconstruct_w(params))
        rows.append(dict(
            common, loss=loss, top1=ev.top1, test_loss=ev.mean_loss,
            param_norm=frobenius_norm(params), w_norm=w_norm,
            height=tree.height, k_prime=k_prime, eta=result.eta,
        ))
    return rows


def run_trials(spec: ExperimentSpec) -> list:
    """Per-trial rows ordered by (sweep value, seed, loss)."""
    tasks = [(spec.experiment, spec, v, t) for v in spec.values for t in range(spec.trials)]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            chunks = list(pool.map(_trial, tasks))
    else:
        chunks = [_trial(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _stats(xs):
    xs = np.asarray(xs, dtype=np.float64)
    std = float(xs.std(ddof=1)) if len(xs) > 1 else 0.0
    return float(xs.mean()), std, std / math.sqrt(len(xs))


def aggregate(spec: ExperimentSpec, raw) -> list:
    """Mean / std / standard error per (sweep value, loss)."""
    out = []
    keys = []
    for row in raw:
        key = (row["value"], row["loss"])
        if key not in keys:
            keys.append(key)
    for value, loss in keys:
        group = [r for r in raw if r["value"] == value and r["loss"] == loss]
        row = dict(experiment=spec.experiment, sweep=spec.sweep, value=value, loss=loss,
                   seed=spec.seed, trials=len(group))
        if spec.experiment in ("NORMS", "BOUNDS"):
            for field_name in ("w_norm", "u_norm", "v_norm", "bound_lemma2", "bound_lemma3", "c_estimate", "height"):
                row[f"mean_{field_name}"] = _stats([r[field_name] for r in group])[0]
            row["lemma2_rate"] = float(np.mean([r["lemma2_satisfied"] for r in group]))
            row["w_bound_rate"] = float(np.mean([r["w_satisfied"] for r in group]))
            row["lemma3_rate"] = float(np.mean([r["lemma3_satisfied"] for r in group]))
        else:
            mean, std, se = _stats([r["top1"] for r in group])
            row.update(mean_top1=mean, std_top1=std, stderr_top1=se)
            row["mean_test_loss"] = _stats([r["test_loss"] for r in group])[0]
            row["mean_param_norm"] = _stats([r["param_norm"] for r in group])[0]
            row["mean_w_norm"] = _stats([r["w_norm"] for r in group])[0]
            row["mean_height"] = _stats([r["height"] for r in group])[0]
        out.append(row)
    return out


def run_experiment(spec: ExperimentSpec):
    """Return ``(results, raw)`` row lists."""
    raw = run_trials(spec)
    return aggregate(spec, raw), raw


def run_experiment_I(spec):
    return run_experiment(_as(spec, "I"))


def run_experiment_II(spec):
    return run_experiment(_as(spec, "II"))


def run_experiment_III(spec):
    return run_experiment(_as(spec, "III"))


def run_experiment_IV(spec):
    return run_experiment(_as(spec, "IV"))


def run_norms(spec):
    return run_experiment(_as(spec, "NORMS"))


def run_bounds(spec):
    return run_experiment(_as(spec, "BOUNDS"))


def _as(spec, experiment):
    if spec.experiment != experiment:
        raise InvalidInputError(f"expected an experiment {experiment} spec, got {spec.experiment}")
    return spec


def mean_by(results, loss, column="mean_top1") -> dict:
    return {r["value"]: r[column] for r in results if r["loss"] == loss}


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def paired_differences(raw, loss_a="tree", loss_b="xent", column="top1") -> dict:
    """Per sweep value, the list of ``a - b`` differences matched by seed."""
    out = {}
    index = {(r["value"], r["seed"], r["loss"]): r[column] for r in raw}
    for (value, seed, loss), score in index.items():
        if loss == loss_a and (value, seed, loss_b) in index:
            out.setdefault(value, []).append(score - index[(value, seed, loss_b)])
    return out
