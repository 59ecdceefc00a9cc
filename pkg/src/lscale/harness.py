"""Batch active-learning experiments: the train/select loop, seeding,
label-access auditing, aggregation, report files and resumable state."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import TrainConfig, init_model, predict_labels, train
from .features import FeatureProvider
from .graph import load_dataset, make_split
from .strategies import PoolState, SelectionContext, Strategy, select, selection_space

logger = logging.getLogger(__name__)

RECORD_HEADER = ["run", "seed", "checkpoint", "accuracy"]
SUMMARY_HEADER = ["checkpoint", "mean", "std", "runs", "single_record"]
STATE_VERSION = 1

# stream tags for derived seeds
_INIT, _TRAIN, _SELECT = 0, 1, 2


class ReportError(ValueError):
    pass


class StateError(ValueError):
    pass


def derive_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    strategy: str = "lscale"
    features: str = "propagated"
    budget: tuple = (10, 30, 60)
    batch: int = 10
    init_pool: int = 5
    runs: int = 20
    splits: int = 10
    seed: int = 0
    lam: float = 0.99
    khops: int = 2
    hidden_dim: int = 100
    learning_rate: float = 0.2
    weight_decay: float = 5e-6
    max_epochs: int = 300
    early_stop: int = 10
    test_fraction: float = 0.2
    test_size: int | None = None
    val_size: int = 500
    restarts: int = 1
    fixed_alpha: float | None = None
    count_initial_in_budget: bool = False
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        budget = tuple(int(b) for b in self.budget)
        object.__setattr__(self, "budget", budget)
        if not budget or any(b < 0 for b in budget):
            raise ValueError("budget checkpoints must be non-negative and non-empty")
        if list(budget) != sorted(set(budget)):
            raise ValueError("budget checkpoints must be strictly ascending")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.init_pool < 1:
            raise ValueError("initial pool must hold at least one node")
        if self.runs < 1 or self.splits < 1:
            raise ValueError("runs and splits must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.count_initial_in_budget and budget[0] < self.init_pool:
            raise ValueError("checkpoints below the initial pool size are unreachable")
        Strategy.from_name(self.strategy, **self.strategy_params())

    # fields that do not change results
    _VOLATILE = ("out", "jobs")

    def strategy_params(self):
        return dict(lam=self.lam, khops=self.khops, fixed_alpha=self.fixed_alpha,
                    restarts=self.restarts)

    def make_strategy(self):
        return Strategy.from_name(self.strategy, **self.strategy_params())

    def train_config(self, seed=0):
        return TrainConfig(self.learning_rate, self.weight_decay, self.max_epochs,
                           self.early_stop, seed)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["budget"] = list(self.budget)
        return d

    def config_hash(self):
        d = {k: v for k, v in self.to_dict().items() if k not in self._VOLATILE}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def label_offset(self):
        """|L| minus the checkpoint counter."""
        return 0 if self.count_initial_in_budget else self.init_pool


@dataclass(frozen=True)
class Record:
    run: int
    seed: int
    checkpoint: int
    accuracy: float


@dataclass(frozen=True)
class Aggregate:
    checkpoint: int
    mean: float
    std: float
    runs: int
    single_record: bool


@dataclass
class ExperimentReport:
    records: list
    config: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    audit: dict = field(default_factory=dict)
    finished: bool = True

    @property
    def aggregates(self):
        return aggregate(self.records)

    def accuracies(self, checkpoint):
        return np.array([r.accuracy for r in self.records if r.checkpoint == checkpoint])


class LabelOracle:
    """Ground-truth label source that logs every read with its purpose."""

    def __init__(self, labels):
        self._labels = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
        self.k = int(self._labels.max()) + 1
        self.log = []

    def reveal(self, ids, purpose):
        ids = np.asarray(ids, dtype=np.int64)
        self.log.append((purpose, ids.copy()))
        return self._labels[ids]

    def audit(self, split, labelled_by_read=None):
        """Count reads that broke the access rules.

        ``labelled_by_read`` maps the index of each ``train`` read to the
        labelled set at that moment.
        """
        test = set(split.test.tolist())
        val = set(split.validation.tolist())
        out = {"train_outside_labelled": 0, "train_test_or_validation": 0,
               "test_outside_evaluation": 0, "validation_outside_early_stop": 0}
        for idx, (purpose, ids) in enumerate(self.log):
            ids_set = set(ids.tolist())
            if purpose == "train":
                out["train_test_or_validation"] += len(ids_set & (test | val))
                if labelled_by_read is not None and idx in labelled_by_read:
                    out["train_outside_labelled"] += len(ids_set - labelled_by_read[idx])
            if purpose != "evaluate":
                out["test_outside_evaluation"] += len(ids_set & test)
            if purpose != "early-stop":
                out["validation_outside_early_stop"] += len(ids_set & val)
        return out


def evaluate_accuracy(model, H, labels, test_ids):
    test_ids = np.asarray(test_ids, dtype=np.int64)
    if test_ids.size == 0:
        raise ValueError("test set is empty")
    y = np.asarray(getattr(labels, "labels", labels))
    pred = predict_labels(model, np.asarray(H)[test_ids])
    return float(np.mean(pred == y[test_ids]))


def aggregate(records):
    """Per-checkpoint mean and sample standard deviation (ddof=1)."""
    by_cp = {}
    for r in records:
        by_cp.setdefault(r.checkpoint, []).append(r.accuracy)
    out = []
    for cp in sorted(by_cp):
        vals = np.array(by_cp[cp], dtype=float)
        single = len(vals) == 1
        std = 0.0 if single else float(np.std(vals, ddof=1))
        out.append(Aggregate(cp, float(np.mean(vals)), std, len(vals), single))
    return out


def summary_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".summary.csv")


def write_report(report, path):
    """Write the records CSV and its ``.summary.csv`` companion."""
    records = report.records if isinstance(report, ExperimentReport) else list(report)
    if not records:
        raise ReportError("nothing to report")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow([r.run, r.seed, r.checkpoint, f"{r.accuracy:.9f}"])
    with summary_path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for a in aggregate(records):
            w.writerow([a.checkpoint, f"{a.mean:.9f}", f"{a.std:.9f}", a.runs, int(a.single_record)])
    return path


def read_report(path):
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportError(f"{path}: nothing to report") from None
        if [h.strip() for h in header] != RECORD_HEADER:
            raise ReportError(f"{path}:1: expected header {','.join(RECORD_HEADER)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ReportError(f"{path}:{lineno}: expected 4 fields, found {len(row)}")
            try:
                rec = Record(int(row[0]), int(row[1]), int(row[2]), float(row[3]))
            except ValueError:
                raise ReportError(f"{path}:{lineno}: malformed record {row!r}") from None
            if not 0.0 <= rec.accuracy <= 1.0:
                raise ReportError(f"{path}:{lineno}: accuracy outside [0, 1]")
            records.append(rec)
    if not records:
        raise ReportError(f"{path}: nothing to report")
    return ExperimentReport(records=records)


def format_table(report, method):
    """Accuracy table row in percent, ``mean±std`` per budget."""
    aggs = aggregate(report.records)
    header = ["method"] + [str(a.checkpoint) for a in aggs]
    row = [method] + [f"{100 * a.mean:.2f}±{100 * a.std:.1f}" for a in aggs]
    return header, row


def write_table(report, path, method):
    header, row = format_table(report, method)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow(row)
    return path


def write_config(config, path):
    with Path(path).open("w", encoding="utf-8") as fh:
        for key, value in config.to_dict().items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key.replace('_', '-')} = {value}\n")


# ---------------------------------------------------------------------------
# experiment loop


@dataclass
class _Prepared:
    graph: object
    X: np.ndarray
    labels: object
    H: np.ndarray


def prepare(config, data=None):
    if data is None:
        if config.dataset is None:
            raise ValueError("no dataset given")
        data = load_dataset(config.dataset)
    graph, X, labels = data
    provider = FeatureProvider.parse(config.features, khops=config.khops,
                                     dataset_dir=config.dataset)
    H = provider.resolve(graph, X)
    return _Prepared(graph, np.asarray(X, dtype=float), labels, H)


def _split_for(config, run, prep):
    return make_split(prep.graph, prep.labels, config.test_fraction, config.val_size,
                      seed=config.seed + run % config.splits, test_size=config.test_size)


def _initial_state(config, run, split):
    need = config.label_offset() + config.budget[-1]
    if need > len(split.pool):
        raise ValueError(
            f"infeasible budget: {need} labels requested from a pool of {len(split.pool)}"
        )
    rng = np.random.default_rng(derive_seed(config.seed + run, _INIT))
    initial = rng.choice(split.pool, size=config.init_pool, replace=False)
    return PoolState.initial(split.pool, initial)


def _novelty(space, prior, selected):
    if space is None or len(prior) == 0 or len(selected) == 0:
        return None
    a = space[selected]
    b = space[prior]
    d = np.sqrt(np.maximum(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1), 0.0))
    return float(d.min(axis=1).mean())


def _train_step(config, prep, oracle, state, split, run_seed, audit_sets):
    labelled = state.labelled
    y_l = oracle.reveal(labelled, "train")
    audit_sets[len(oracle.log) - 1] = set(labelled.tolist())
    y_v = oracle.reveal(split.validation, "early-stop")
    masked = np.full(prep.graph.n, -1, dtype=np.int64)
    masked[labelled] = y_l
    masked[split.validation] = y_v
    seed = derive_seed(run_seed, _TRAIN, state.step)
    model = init_model(prep.H.shape[1], config.hidden_dim, oracle.k, seed=seed)
    model, _ = train(model, prep.H, masked, labelled, split.validation,
                     config.train_config(seed))
    return model


def _state_dict(state):
    return {"labelled": state.labelled.tolist(), "unlabelled": state.unlabelled.tolist(),
            "step": state.step, "initial_size": state.initial_size}


def _state_from(d):
    return PoolState(np.asarray(d["labelled"], dtype=np.int64),
                     np.asarray(d["unlabelled"], dtype=np.int64),
                     int(d["step"]), int(d["initial_size"]))


def _run_one(config, run, prep, progress=None, step_budget=None, on_step=None):
    """Execute (or continue) one run.

    ``progress`` is the resumable per-run dict; ``step_budget`` caps the
    number of selection steps taken in this call. Returns the updated
    progress dict (its ``done`` flag says whether the run finished) and the
    number of steps taken.
    """
    strategy = config.make_strategy()
    run_seed = config.seed + run
    split = _split_for(config, run, prep)
    oracle = LabelOracle(prep.labels)
    audit_sets = {}
    if progress is None:
        state = _initial_state(config, run, split)
        progress = {"run": run, "records": [], "novelty": [], "labelled_at": {},
                    "done": False, "last_selected": []}
    else:
        state = _state_from(progress["state"])
    ctx = SelectionContext(prep.graph, prep.X, prep.H)
    offset = config.label_offset()
    targets = config.budget
    steps_taken = 0

    while True:
        counter = len(state.labelled) - offset
        model = _train_step(config, prep, oracle, state, split, run_seed, audit_sets)
        if counter in targets:
            y_test = oracle.reveal(split.test, "evaluate")
            y_eval = np.full(prep.graph.n, -1, dtype=np.int64)
            y_eval[split.test] = y_test
            acc = evaluate_accuracy(model, prep.H, y_eval, split.test)
            progress["records"].append([run, run_seed, counter, acc])
            progress["labelled_at"][str(counter)] = len(state.labelled)
        if counter >= targets[-1]:
            progress["done"] = True
            break
        next_target = min(t for t in targets if t > counter)
        b = min(config.batch, next_target - counter)
        ctx.model = model
        # the selection context carries no labels at all
        selected = select(strategy, state, ctx, b, seed=derive_seed(run_seed, _SELECT, state.step))
        space = selection_space(strategy, state, ctx)
        progress["novelty"].append(_novelty(space, state.labelled, selected))
        progress["last_selected"] = selected.tolist()
        state = state.advance(selected)
        steps_taken += 1
        progress["state"] = _state_dict(state)
        if on_step is not None:
            on_step(progress)
        if step_budget is not None and steps_taken >= step_budget:
            break
    progress["state"] = _state_dict(state)
    audit = oracle.audit(split, audit_sets)
    prev = progress.get("audit", {})
    progress["audit"] = {k: prev.get(k, 0) + v for k, v in audit.items()}
    return progress, steps_taken


def _assemble(config, completed, finished):
    records = []
    diagnostics = []
    audit = {}
    for prog in completed:
        records.extend(Record(int(a), int(b), int(c), float(d)) for a, b, c, d in prog["records"])
        diagnostics.append({"run": prog["run"], "novelty": prog["novelty"],
                            "labelled_at": prog["labelled_at"]})
        for k, v in prog.get("audit", {}).items():
            audit[k] = audit.get(k, 0) + v
    return ExperimentReport(records=records, config=config.to_dict(),
                            diagnostics=diagnostics, audit=audit, finished=finished)


def _parallel_worker(args):
    config, run, prep = args
    return _run_one(config, run, prep)[0]


def _save_state(path, config, completed, current, finished):
    payload = {"version": STATE_VERSION, "config_hash": config.config_hash(),
               "config": config.to_dict(), "completed": completed,
               "current": current, "finished": finished}
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    tmp.replace(path)


def _execute(config, prep, completed, current, state_path, max_steps):
    steps_left = max_steps
    for run in range(len(completed), config.runs):
        def checkpoint(progress):
            if state_path is not None:
                _save_state(state_path, config, completed, progress, False)

        prog = current if (current is not None and current["run"] == run) else None
        current = None
        prog, taken = _run_one(config, run, prep, progress=prog, step_budget=steps_left,
                               on_step=checkpoint)
        if steps_left is not None:
            steps_left -= taken
        if not prog["done"]:
            checkpoint(prog)
            return _assemble(config, completed + [prog], False)
        completed.append(prog)
        last = run == config.runs - 1
        if state_path is not None:
            _save_state(state_path, config, completed, None, last)
        if steps_left is not None and steps_left <= 0 and not last:
            return _assemble(config, completed, False)
    return _assemble(config, completed, True)


def run_experiment(config, data=None, state_path=None, max_steps=None):
    """Run every trial of ``config`` and collect test accuracies per checkpoint.

    ``data`` may hold a preloaded ``(graph, X, labels)`` triple. With
    ``state_path`` progress is saved after each selection step so the run can
    be continued by :func:`resume`; ``max_steps`` stops after that many
    selection steps (used to emulate an interruption).
    """
    prep = prepare(config, data)
    if config.jobs > 1 and state_path is None and max_steps is None:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            completed = list(pool.map(_parallel_worker,
                                      [(config, r, prep) for r in range(config.runs)]))
        return _assemble(config, completed, True)
    return _execute(config, prep, [], None, state_path, max_steps)


def load_state(path):
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StateError(f"{path}: unreadable state file ({exc})") from None
    if payload.get("version") != STATE_VERSION:
        raise StateError(f"{path}: unsupported state version")
    return payload


def resume(state_path, config, data=None, max_steps=None):
    """Continue a run saved by :func:`run_experiment`; identical outcome to an
    uninterrupted run."""
    payload = load_state(state_path)
    if payload["config_hash"] != config.config_hash():
        raise StateError("config hash mismatch")
    if payload["finished"]:
        logger.info("%s: run already finished, nothing to do", state_path)
        return _assemble(config, payload["completed"], True)
    prep = prepare(config, data)
    return _execute(config, prep, payload["completed"], payload["current"], state_path,
                    max_steps)


def last_selection(state_path):
    payload = load_state(state_path)
    if payload["current"] is not None:
        return payload["current"].get("last_selected", [])
    if payload["completed"]:
        return payload["completed"][-1].get("last_selected", [])
    return []


def steps_recorded(state_path):
    """Selection steps taken so far across all runs in a state file."""
    payload = load_state(state_path)
    progs = payload["completed"] + ([payload["current"]] if payload["current"] else [])
    return sum(len(p["novelty"]) for p in progs)


def check_budget_accounting(report, config):
    """True when |L| at every checkpoint equals the configured offset plus it."""
    offset = config.label_offset()
    for diag in report.diagnostics:
        for cp, size in diag["labelled_at"].items():
            if size != offset + int(cp):
                return False
    return True


def mean_or_nan(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else math.nan


def latent_space_for(config, labelled=None, data=None, run=0):
    """Train on ``labelled`` (default: run ``run``'s initial pool) and build the
    selection space the ``lscale`` strategy would cluster at that point."""
    from .latent import build_latent_space
    from .strategies import current_alpha

    prep = prepare(config, data)
    split = _split_for(config, run, prep)
    if labelled is None:
        state = _initial_state(config, run, split)
    else:
        labelled = np.asarray(labelled, dtype=np.int64)
        rest = split.pool[~np.isin(split.pool, labelled)]
        state = PoolState(labelled, rest, 0, min(config.init_pool, len(labelled)))
    oracle = LabelOracle(prep.labels)
    model = _train_step(config, prep, oracle, state, split, config.seed + run, {})
    alpha = current_alpha(config.make_strategy(), state)
    return build_latent_space(prep.H, model.embed(prep.H), alpha), state.labelled
