"""Cross-validation harness: feature scenarios, model registry, metrics,
synthetic data and table-style reports."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import NamedTuple, Sequence

import numpy as np

from . import cnf, crf, dbn, fcm, hmm, latent
from .core import (
    Dataset,
    LabelAlphabet,
    LabelSequence,
    ObservationSequence,
    chunk_dataset,
    load_dataset,
    split_folds,
    standardize,
)
from .errors import ConfigurationError, InputError, SleepFieldsError
from .training import TrainConfig

log = logging.getLogger(__name__)

__all__ = [
    "SCENARIOS",
    "MODELS",
    "ExperimentConfig",
    "FoldResult",
    "CvReport",
    "Aggregate",
    "round_half_up",
    "aggregate_folds",
    "evaluate",
    "fit_model",
    "predict_model",
    "apply_scenario",
    "run_cv",
    "sweep",
    "sweep_table",
    "synth_generator",
    "generate_synth",
]

SCENARIOS = ("raw", "dbn", "fcm")
# "epoch" is a transition-free per-epoch softmax baseline; "dbn" is the DBN-only classifier
MODELS = ("crf", "cnf", "hcrf", "ldcrf", "ldcnf", "hmm", "epoch", "dbn")
SLEEP_STAGES = ("Awake", "S1", "S2", "SWS", "REM")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "crf"
    scenario: str = "raw"
    folds: int = 10
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    fcm: fcm.FcmConfig = field(default_factory=fcm.FcmConfig)
    dbn: dbn.DbnConfig = field(default_factory=dbn.DbnConfig)
    data_path: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigurationError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.folds < 2:
            raise ConfigurationError("folds must be >= 2")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")

    def describe(self) -> dict:
        d = {"model": self.model, "scenario": self.scenario, "folds": self.folds, "seed": self.seed}
        d.update({f"train.{k}": v for k, v in asdict(self.train).items()})
        if self.scenario == "fcm":
            d.update({f"fcm.{k}": v for k, v in asdict(self.fcm).items() if k != "seed"})
        if self.scenario == "dbn" or self.model == "dbn":
            d.update({f"dbn.{k}": v for k, v in asdict(self.dbn).items() if k != "seed"})
        return d


# --- metrics --------------------------------------------------------------


def round_half_up(x: float, places: int = 2) -> str:
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


class Aggregate(NamedTuple):
    mean: float
    display: str


def aggregate_folds(values: Sequence[float]) -> Aggregate:
    """Arithmetic mean of fold values with a half-up 2-decimal display string.

    The display is computed in decimal arithmetic from the values' shortest
    repr, so printed 2-decimal table entries average without binary rounding.
    """
    if len(values) == 0:
        raise InputError("no fold values to aggregate")
    exact = sum(Decimal(repr(float(v))) for v in values) / len(values)
    return Aggregate(float(exact), str(exact.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)))


def evaluate(predicted: Sequence[LabelSequence], truth: Sequence[LabelSequence], n_labels: int | None = None):
    """Accuracy in percent and the ``(L, L)`` confusion matrix (rows = truth)."""
    if len(predicted) != len(truth):
        raise InputError(f"{len(predicted)} predicted sequences for {len(truth)} true ones")
    for p, t in zip(predicted, truth):
        if p.n != t.n:
            raise InputError(f"predicted length {p.n} != true length {t.n}")
    p = np.concatenate([s.labels for s in predicted]) if predicted else np.zeros(0, int)
    t = np.concatenate([s.labels for s in truth]) if truth else np.zeros(0, int)
    if t.size == 0:
        raise InputError("nothing to evaluate")
    L = n_labels or int(max(p.max(), t.max()) + 1)
    conf = np.zeros((L, L), dtype=np.int64)
    np.add.at(conf, (t, p), 1)
    return 100.0 * float((p == t).sum()) / t.size, conf


# --- models and scenarios -------------------------------------------------


def fit_model(name: str, data: Dataset, cfg: TrainConfig, dbn_cfg: dbn.DbnConfig | None = None):
    if name == "crf":
        return crf.train(data, cfg)
    if name == "cnf":
        return cnf.train(data, cfg)
    if name in latent.VARIANTS:
        return latent.train_latent(data, name, cfg)
    if name == "hmm":
        return hmm.fit_supervised(data)
    if name == "epoch":
        model = crf.train(chunk_dataset(data, 1), cfg)
        return replace(model, trans=np.zeros_like(model.trans))
    if name == "dbn":
        x = data.epochs()
        cfg_d = replace(dbn_cfg or dbn.DbnConfig(), seed=cfg.seed)
        return dbn.finetune_softmax(dbn.pretrain(x, cfg_d), x, data.labels(), data.alphabet.size, cfg_d)
    raise ConfigurationError(f"unknown model {name!r}")


def predict_model(model, x: ObservationSequence) -> LabelSequence:
    if isinstance(model, crf.CrfModel):
        return crf.predict(model, x)
    if isinstance(model, cnf.CnfModel):
        return cnf.predict(model, x)
    if isinstance(model, latent.LatentModel):
        return latent.predict(model, x)
    if isinstance(model, hmm.HmmModel):
        return hmm.decode(model, x)
    if isinstance(model, dbn.DbnModel):
        return LabelSequence(dbn.predict(model, x.epochs))
    raise TypeError(f"not a model: {type(model).__name__}")


def apply_scenario(scenario: str, train: Dataset, test: Dataset, cfg: ExperimentConfig, seed: int):
    """Fit the scenario's extractor on ``train`` only and transform both splits."""
    if scenario == "raw":
        return train, test
    if scenario == "fcm":
        part = fcm.fit(train.epochs(), replace(cfg.fcm, seed=seed))
        f = lambda x: fcm.transform(part, x)  # noqa: E731
        return train.map_features(f), test.map_features(f)
    if scenario == "dbn":
        d_cfg = replace(cfg.dbn, seed=seed)
        x = train.epochs()
        model = dbn.finetune_softmax(dbn.pretrain(x, d_cfg), x, train.labels(), train.alphabet.size, d_cfg)
        f = lambda x: dbn.transform(model, x)  # noqa: E731
        return train.map_features(f), test.map_features(f)
    raise ConfigurationError(f"unknown scenario {scenario!r}")


# --- cross-validation -----------------------------------------------------


@dataclass(frozen=True)
class FoldResult:
    fold: int
    accuracy: float
    hours: float
    n_test: int
    confusion: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class CvReport:
    rows: tuple[FoldResult, ...]
    alphabet: LabelAlphabet
    config: dict

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.rows]

    @property
    def mean_accuracy(self) -> Aggregate:
        return aggregate_folds([float(round_half_up(a)) for a in self.accuracies])

    @property
    def mean_hours(self) -> Aggregate:
        return aggregate_folds([float(round_half_up(r.hours)) for r in self.rows])

    @property
    def confusion(self) -> np.ndarray:
        return sum(r.confusion for r in self.rows)

    def to_csv(self, timing: bool = True) -> str:
        lines = [f"# {k}={v}" for k, v in self.config.items()]
        lines.append("fold,accuracy_pct" + (",time_hours" if timing else "") + ",test_epochs")
        for r in self.rows:
            t = f",{round_half_up(r.hours)}" if timing else ""
            lines.append(f"{r.fold + 1},{round_half_up(r.accuracy)}{t},{r.n_test}")
        t = f",{self.mean_hours.display}" if timing else ""
        lines.append(f"Average,{self.mean_accuracy.display}{t},{sum(r.n_test for r in self.rows)}")
        return "\n".join(lines) + "\n"

    def timing_csv(self) -> str:
        """Wall-clock hours per fold, kept apart because they vary between runs."""
        lines = ["fold,time_hours"] + [f"{r.fold + 1},{round_half_up(r.hours)}" for r in self.rows]
        lines.append(f"Average,{self.mean_hours.display}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        names = self.alphabet.names
        lines = ["truth\\predicted," + ",".join(names)]
        for name, row in zip(names, self.confusion):
            lines.append(name + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"

    def to_text(self, timing: bool = True) -> str:
        head = f"model={self.config.get('model')} scenario={self.config.get('scenario')} folds={len(self.rows)}"
        keep = slice(None) if timing else slice(0, 2)
        table = [("Fold", "Accuracy (%)", "Time (hours)")[keep]]
        table += [(str(r.fold + 1), round_half_up(r.accuracy), round_half_up(r.hours))[keep] for r in self.rows]
        table.append(("Average", self.mean_accuracy.display, self.mean_hours.display)[keep])
        return head + "\n" + _format_table(table)


def _format_table(rows: list[tuple[str, ...]]) -> str:
    widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
    out = []
    for i, r in enumerate(rows):
        out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if i == 0 or i == len(rows) - 2:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def run_fold(cfg: ExperimentConfig, data: Dataset, train_ids: list[str], test_ids: list[str], fold: int):
    """Train on ``train_ids`` and score ``test_ids``; returns the fold result and trained model."""
    t0 = time.perf_counter()
    seed = fold_seed(cfg.seed, fold)
    train_raw, test_raw = data.subset(train_ids), data.subset(test_ids)
    train, _ = standardize(train_raw, train_raw)
    test, _ = standardize(train_raw, test_raw)
    train, test = apply_scenario(cfg.scenario, train, test, cfg, seed)
    model = fit_model(cfg.model, train, replace(cfg.train, seed=seed), cfg.dbn)
    predicted = [predict_model(model, x) for x, _ in test]
    acc, conf = evaluate(predicted, [y for _, y in test], data.alphabet.size)
    hours = (time.perf_counter() - t0) / 3600.0
    log.info("fold %d: accuracy %.2f%%", fold + 1, acc)
    return FoldResult(fold, acc, hours, test.n_epochs, conf), model


def _run_fold_job(args):
    try:
        return run_fold(*args)[0]
    except SleepFieldsError as e:
        raise type(e)(f"fold {args[-1] + 1}: {e}") from e


def run_cv(config: ExperimentConfig, data: Dataset | None = None) -> CvReport:
    if data is None:
        if not config.data_path:
            raise ConfigurationError("no dataset given")
        data = load_dataset(config.data_path)
    split = split_folds(data, config.folds, config.seed)
    jobs = [(config, data, split.train_ids(k), split.test_ids(k), k) for k in range(config.folds)]
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            rows = list(pool.map(_run_fold_job, jobs))
    else:
        rows = [_run_fold_job(j) for j in jobs]
    return CvReport(tuple(rows), data.alphabet, config.describe())


# --- sweeps ---------------------------------------------------------------

SWEEP_PARAMS = {
    # name: (config section, short column label, applicability check)
    "gates": ("train", "g", lambda c: c.model in ("cnf", "ldcnf")),
    "hidden_per_label": ("train", "r", lambda c: c.model in ("hcrf", "ldcrf", "ldcnf")),
    "hcrf_window": ("train", "W", lambda c: c.model == "hcrf"),
    "context_window": ("train", "ctx", lambda c: c.model in ("cnf", "ldcnf")),
    "l2": ("train", "l2", lambda c: c.model not in ("hmm", "dbn")),
    "clusters": ("fcm", "cl", lambda c: c.scenario == "fcm"),
    "fuzziness": ("fcm", "w", lambda c: c.scenario == "fcm"),
}


def _with_param(cfg: ExperimentConfig, name: str, value) -> ExperimentConfig:
    section, _, _ = SWEEP_PARAMS[name]
    sub = getattr(cfg, section)
    return replace(cfg, **{section: replace(sub, **{name: value})})


def sweep(config: ExperimentConfig, name: str, values: Sequence, data: Dataset | None = None) -> list[CvReport]:
    if name not in SWEEP_PARAMS:
        raise ConfigurationError(f"cannot sweep {name!r}; choose from {sorted(SWEEP_PARAMS)}")
    if not SWEEP_PARAMS[name][2](config):
        raise ConfigurationError(f"{name} does not apply to model={config.model}, scenario={config.scenario}")
    if not values:
        raise ConfigurationError("no sweep values given")
    if data is None:
        data = load_dataset(config.data_path) if config.data_path else None
    return [run_cv(_with_param(config, name, v), data) for v in values]


def sweep_table(name: str, values: Sequence, reports: Sequence[CvReport], fmt: str = "text", timing: bool = True) -> str:
    """Folds as rows; an accuracy column group then (with ``timing``) a time column group, one column per value."""
    short = SWEEP_PARAMS[name][1]
    cols = [f"{short}={v}" for v in values]
    k = len(reports[0].rows)
    header = ["Fold"] + [f"acc {c}" for c in cols] + ([f"hours {c}" for c in cols] if timing else [])
    rows = [tuple(header)]
    for i in range(k):
        row = (str(i + 1),) + tuple(round_half_up(r.rows[i].accuracy) for r in reports)
        if timing:
            row += tuple(round_half_up(r.rows[i].hours) for r in reports)
        rows.append(row)
    avg = ("Average",) + tuple(r.mean_accuracy.display for r in reports)
    if timing:
        avg += tuple(r.mean_hours.display for r in reports)
    rows.append(avg)
    if fmt == "csv":
        return "\n".join(",".join(r) for r in rows) + "\n"
    return _format_table(rows)


# --- synthetic data -------------------------------------------------------


def synth_generator(
    states: int, dim: int, separation: float, seed: int, self_transition: float = 0.9
) -> hmm.HmmModel:
    """Ground-truth Gaussian HMM used by :func:`generate_synth`.

    Transition rows put ``self_transition`` on the diagonal and spread the
    rest by a seeded Dirichlet draw. Emission means sit pairwise
    ``separation`` apart (scaled simplex corners when ``dim >= states``, a
    line otherwise) with unit variances.
    """
    if states < 2 or dim < 1 or separation < 0 or not 0 <= self_transition < 1:
        raise ConfigurationError("need states >= 2, dim >= 1, separation >= 0, 0 <= self_transition < 1")
    rng = np.random.default_rng(seed)
    trans = np.zeros((states, states))
    for i in range(states):
        off = rng.dirichlet(np.ones(states - 1)) * (1 - self_transition)
        trans[i] = np.insert(off, i, self_transition)
    trans /= trans.sum(axis=1, keepdims=True)
    means = np.zeros((states, dim))
    if dim >= states:
        means[:, :states] = np.eye(states) * separation / np.sqrt(2)
    else:
        means[:, 0] = np.arange(states) * separation
    names = SLEEP_STAGES if states == len(SLEEP_STAGES) else tuple(f"s{i}" for i in range(states))
    return hmm.HmmModel(np.full(states, 1 / states), trans, means, np.ones((states, dim)), LabelAlphabet(names))


def generate_synth(
    states: int,
    dim: int,
    sequences: int,
    length: int,
    separation: float,
    seed: int,
    self_transition: float = 0.9,
) -> Dataset:
    if sequences < 1 or length < 1:
        raise ConfigurationError("sequences and length must be positive")
    model = synth_generator(states, dim, separation, seed, self_transition)
    rng = np.random.default_rng([seed, 1])
    cum = np.cumsum(model.trans, axis=1)
    seqs = []
    for s in range(sequences):
        y = np.empty(length, dtype=np.int64)
        y[0] = rng.integers(states)
        u = rng.random(length)
        for t in range(1, length):
            y[t] = min(int(np.searchsorted(cum[y[t - 1]], u[t], side="right")), states - 1)
        x = model.means[y] + rng.normal(size=(length, dim))
        seqs.append((ObservationSequence(f"rec{s:03d}", x), LabelSequence(y)))
    # generator label order, so indices line up with synth_generator's parameters
    return Dataset(tuple(seqs), model.alphabet)
