"""Factorial sweep runner: per-run protocol, deterministic seeding,
parallel execution and per-cell aggregation of the evaluation metrics."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .contamination import (
    ContaminationKind,
    ContaminationSpec,
    apply_contamination,
    make_iterative_attack_hook,
)
from .datagen import (
    DataGenSpec,
    Dataset,
    DegenerateStandardizationError,
    fit_standardizer,
    generate_dataset,
)
from .losses import LossKind, LossSpec
from .net import Activation, Architecture, init_weights, predict
from .optimizer import (
    DEFAULT_DIVERGE_NORM,
    STEPMAX_DEEP,
    STEPMAX_SHALLOW,
    OptimizerSpec,
    TrainStatus,
    train,
)


class Depth(str, Enum):
    SHALLOW = "shallow"
    DEEP = "deep"


DEPTH_HIDDEN = {Depth.SHALLOW: (10, 10), Depth.DEEP: (5,) * 10}
DEPTH_STEPMAX = {Depth.SHALLOW: STEPMAX_SHALLOW, Depth.DEEP: STEPMAX_DEEP}

STATUS_ERROR = "error"


def loss_token(spec: LossSpec) -> str:
    """Short loss name used in ids, CSV files and chart labels."""
    if spec.kind == LossKind.SQUARED:
        return "squared"
    if spec.kind == LossKind.HUBER:
        return "huber"
    if spec.kind == LossKind.TUKEY:
        return "tukey"
    return f"trim{round(spec.trim_alpha * 100):g}"


LOSS_LABELS = {
    "squared": "Squared",
    "huber": "Huber",
    "tukey": "Tukey",
    "trim10": "Trim10",
    "trim25": "Trim25",
    "trim50": "Trim50",
}

LOSS_ORDER = ("squared", "huber", "tukey", "trim10", "trim25", "trim50")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataGenSpec
    contamination: ContaminationSpec
    activation: Activation
    loss: LossSpec
    standardize: bool
    depth: Depth
    replications: int
    base_seed: int
    optimizer: OptimizerSpec | None = None
    diverge_norm: float = DEFAULT_DIVERGE_NORM

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.diverge_norm <= 0:
            raise ValueError("diverge_norm must be positive")

    @property
    def scenario_id(self) -> str:
        """Identifier of everything but the loss function; one chart per scenario."""
        c = self.contamination
        return (
            f"{self.data.structure.value}_n{self.data.n_train}_p{self.data.p}"
            f"_{c.kind.value}_r{c.r:g}_m{c.mu_out:g}"
            f"_{self.activation.value}_{self.depth.value}"
            f"_{'std' if self.standardize else 'raw'}"
        )

    @property
    def config_id(self) -> str:
        return f"{self.scenario_id}_{loss_token(self.loss)}"

    def architecture(self) -> Architecture:
        return Architecture(
            input_dim=self.data.p,
            hidden_sizes=DEPTH_HIDDEN[self.depth],
            hidden_activation=self.activation,
            output_activation=Activation.IDENTITY,
        )

    def resolved_optimizer(self) -> OptimizerSpec:
        """Explicit optimizer if one was set, otherwise defaults with the
        depth-appropriate epoch cap."""
        if self.optimizer is not None:
            return self.optimizer
        return OptimizerSpec(stepmax=DEPTH_STEPMAX[self.depth])


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from the given parts (order-sensitive)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _data_key(d: DataGenSpec) -> str:
    return f"{d.structure.value}|{d.p}|{d.n_train}|{d.n_test}|{d.snr:g}|{d.mu:g}"


def _cont_key(c: ContaminationSpec) -> str:
    return f"{c.kind.value}|{c.r:g}|{c.mu_out:g}|{c.out_sd:g}"


@dataclass
class RunRecord:
    """One training run, flattened for CSV output."""

    config_id: str
    structure: str
    n: int
    p: int
    activation: str
    depth: str
    standardized: bool
    cont_kind: str
    r: float
    mu_out: float
    loss: str
    rep: int
    seed: int
    converged: bool
    status: str
    epochs: int
    test_loss: float | None
    sup_weight_norm: float
    breakdown: bool
    error: str | None = None

    @property
    def test_loss_finite(self) -> bool:
        return self.test_loss is not None and math.isfinite(self.test_loss)


def _record_base(cfg: ExperimentConfig, rep: int, seed: int) -> dict:
    return dict(
        config_id=cfg.config_id,
        structure=cfg.data.structure.value,
        n=cfg.data.n_train,
        p=cfg.data.p,
        activation=cfg.activation.value,
        depth=cfg.depth.value,
        standardized=cfg.standardize,
        cont_kind=cfg.contamination.kind.value,
        r=cfg.contamination.r,
        mu_out=cfg.contamination.mu_out,
        loss=loss_token(cfg.loss),
        rep=rep,
        seed=seed,
    )


def run_single(cfg: ExperimentConfig, rep: int) -> RunRecord:
    """Run one replication of one configuration.

    Data generation and contamination draw from scenario-scoped streams so
    the loss functions of one scenario see identical datasets; only the
    network initialization is keyed by the full configuration. The test set
    bypasses contamination entirely, which is asserted via a byte hash.
    """
    if rep >= cfg.replications:
        raise ValueError("rep exceeds the configured replication count")
    base = cfg.base_seed
    dkey = _data_key(cfg.data)
    ckey = _cont_key(cfg.contamination)
    init_seed = derive_seed("init", base, cfg.config_id, rep)

    try:
        rng_data = np.random.default_rng(derive_seed("data", base, dkey, rep))
        train_ds, test_ds = generate_dataset(cfg.data, rng_data)
        test_fingerprint = hashlib.sha256(
            test_ds.X.tobytes() + test_ds.Y.tobytes()).hexdigest()

        rng_cont = np.random.default_rng(derive_seed("cont", base, dkey, ckey, rep))
        train_c = apply_contamination(train_ds, cfg.contamination, rng_cont)

        if cfg.standardize:
            transform = fit_standardizer(train_c.Y)
            y_train = transform.apply(train_c.Y)
            y_test = transform.apply(test_ds.Y)
        else:
            y_train = train_c.Y
            y_test = test_ds.Y

        hook = None
        if cfg.contamination.kind == ContaminationKind.Y_ITERATIVE:
            _, hook = make_iterative_attack_hook(
                train_c.n, rng_cont, eps=cfg.contamination.mu_out)

        net = init_weights(cfg.architecture(), np.random.default_rng(init_seed))
        outcome = train(
            net,
            Dataset(train_c.X, y_train),
            cfg.loss,
            cfg.resolved_optimizer(),
            cfg.diverge_norm,
            epoch_end_hook=hook,
        )

        test_loss = None
        if outcome.status == TrainStatus.CONVERGED:
            with np.errstate(over="ignore", invalid="ignore"):
                preds = predict(outcome.final_net, test_ds.X)
                test_loss = float(np.mean((preds - y_test) ** 2))

        assert hashlib.sha256(
            test_ds.X.tobytes() + test_ds.Y.tobytes()).hexdigest() == test_fingerprint, \
            "test set was modified during the run"

        return RunRecord(
            **_record_base(cfg, rep, init_seed),
            converged=outcome.status == TrainStatus.CONVERGED,
            status=outcome.status.value,
            epochs=outcome.epochs_used,
            test_loss=test_loss,
            sup_weight_norm=outcome.sup_weight_norm,
            breakdown=outcome.breakdown,
        )
    except DegenerateStandardizationError as exc:
        return RunRecord(
            **_record_base(cfg, rep, init_seed),
            converged=False,
            status=STATUS_ERROR,
            epochs=0,
            test_loss=None,
            sup_weight_norm=float("nan"),
            breakdown=False,
            error=str(exc),
        )


def _run_task(task: tuple[ExperimentConfig, int]) -> RunRecord:
    cfg, rep = task
    try:
        return run_single(cfg, rep)
    except Exception as exc:  # record, never abort the sweep
        return RunRecord(
            **_record_base(cfg, rep, derive_seed("init", cfg.base_seed, cfg.config_id, rep)),
            converged=False,
            status=STATUS_ERROR,
            epochs=0,
            test_loss=None,
            sup_weight_norm=float("nan"),
            breakdown=False,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_sweep(cfgs: list[ExperimentConfig], parallelism: int = 1) -> list[RunRecord]:
    """Execute every (configuration, replication) pair.

    The output is sorted by (config_id, rep), so the result is independent
    of scheduling and of the degree of parallelism.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be positive")
    tasks = [(cfg, rep) for cfg in cfgs for rep in range(cfg.replications)]
    if parallelism == 1 or len(tasks) <= 1:
        records = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(_run_task, tasks))
    records.sort(key=lambda rec: (rec.config_id, rec.rep))
    return records


@dataclass
class CellSummary:
    """Aggregated metrics of one configuration cell."""

    config_id: str
    structure: str
    n: int
    p: int
    activation: str
    depth: str
    standardized: bool
    cont_kind: str
    r: float
    mu_out: float
    loss: str
    replications: int
    n_converged: int
    n_inf_losses: int
    mean_finite_test_loss: float | None
    mean_epochs_converged: float | None
    breakdown_rate_surrogate: float


def summarize(records: list[RunRecord]) -> list[CellSummary]:
    """Reduce run records to per-cell summaries.

    Test losses are averaged over converged runs with finite loss; converged
    runs whose loss overflowed are only counted (n_inf_losses). A cell where
    nothing converged keeps absent means. The breakdown surrogate is the
    fraction of replications that failed to converge.
    """
    groups: dict[str, list[RunRecord]] = {}
    for rec in records:
        groups.setdefault(rec.config_id, []).append(rec)
    out = []
    for config_id in sorted(groups):
        recs = sorted(groups[config_id], key=lambda rec: rec.rep)
        v = len(recs)
        converged = [rec for rec in recs if rec.converged]
        finite = [rec.test_loss for rec in converged if rec.test_loss_finite]
        n_inf = sum(1 for rec in converged if not rec.test_loss_finite)
        first = recs[0]
        out.append(CellSummary(
            config_id=config_id,
            structure=first.structure,
            n=first.n,
            p=first.p,
            activation=first.activation,
            depth=first.depth,
            standardized=first.standardized,
            cont_kind=first.cont_kind,
            r=first.r,
            mu_out=first.mu_out,
            loss=first.loss,
            replications=v,
            n_converged=len(converged),
            n_inf_losses=n_inf,
            mean_finite_test_loss=float(np.mean(finite)) if finite else None,
            mean_epochs_converged=(
                float(np.mean([rec.epochs for rec in converged])) if converged else None),
            breakdown_rate_surrogate=(v - len(converged)) / v,
        ))
    return out
