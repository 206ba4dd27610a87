"""Training protocol: weighted-loss Adam descent with elastic net, plateau LR
schedule, early stopping, 5-fold cross-validation, and grid search.

Everything is a pure function of (data, config, hyperparameters, seeds):
per-purpose rng streams are derived from seed tuples, so reruns reproduce
histories bit for bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import embedding_store as es
from . import fusion_models as fm
from . import metrics as mx
from . import nn_core as nn

IMPROVEMENT_EPS = 1e-8

# The hyperparameter grid used when grid-searching.
DEFAULT_GRID = {
    "lr": (1e-3, 1e-4, 1e-5),
    "l1": (1e-3, 1e-4, 1e-5),
    "l2": (1e-4, 1e-5, 1e-6),
    "dropout": (0.3, 0.4, 0.5),
    "patience": (5, 10),
}


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class HyperParams:
    lr: float = 1e-3
    l1: float = 1e-4
    l2: float = 1e-5
    dropout: float = 0.3
    patience: int = 10
    batch_size: int = 8
    max_epochs: int = 100
    lr_factor: float = 0.1
    lr_patience: int = 6

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("bad hyperparameters")

    def as_dict(self):
        return asdict(self)


@dataclass
class TrainState:
    lr: float
    epoch: int = 0
    best_val_loss: float = math.inf
    sched_bad_epochs: int = 0  # resets on improvement and on each lr cut
    stop_bad_epochs: int = 0  # resets on improvement only
    history: list = field(default_factory=list)


def scheduler_step(state: TrainState, val_loss: float, hp: HyperParams) -> bool:
    """Plateau rule: cut lr by ``lr_factor`` after ``lr_patience`` flat epochs.

    Returns True when ``val_loss`` improved on the best seen so far.
    """
    if not math.isfinite(val_loss):
        raise ValueError("validation loss must be finite")
    if val_loss < state.best_val_loss - IMPROVEMENT_EPS:
        state.best_val_loss = val_loss
        state.sched_bad_epochs = 0
        state.stop_bad_epochs = 0
        return True
    state.sched_bad_epochs += 1
    state.stop_bad_epochs += 1
    if state.sched_bad_epochs == hp.lr_patience:
        state.lr *= hp.lr_factor
        state.sched_bad_epochs = 0
    return False


def early_stop_check(state: TrainState, patience: int) -> bool:
    return state.stop_bad_epochs > patience


class Adam:
    """Standard Adam update (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: nn.ParameterSet, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.items()}

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, t in self.params.items():
            if t.grad is None:
                continue
            g = t.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            t.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def class_weights_from_labels(labels) -> np.ndarray:
    """Inverse-frequency weights w_c = N / (2 N_c)."""
    labels = np.asarray(labels)
    n = labels.size
    counts = np.array([(labels == 0).sum(), (labels == 1).sum()], dtype=np.float64)
    if (counts == 0).any():
        raise ValueError("both classes must be present to weight the loss")
    return (n / (2.0 * counts)).astype(np.float32)


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


class DataStore:
    """All embeddings of a manifest held in memory, batched by sample id.

    Video rows stay unpadded on the shelf; batches come out padded to the
    fixed frame count (manifest-supplied blank-frame vector if present,
    zeros otherwise).
    """

    def __init__(self, manifest: es.DatasetManifest, modalities=None):
        self.modalities = tuple(m for m in es.MODALITIES if modalities is None or m in modalities)
        self.labels = {}
        self.arrays = {m: {} for m in self.modalities}
        for record in manifest.samples:
            self.labels[record.id] = record.label
            for m in self.modalities:
                stored, values = es.read_embedding(record.embedding_refs[m])
                if stored != m:
                    raise es.EmbeddingFormatError(
                        f"{record.embedding_refs[m]}: modality {stored}, expected {m}"
                    )
                self.arrays[m][record.id] = values
        self.pad_vector = None
        if manifest.video_pad_ref is not None:
            _, pad = es.read_embedding(manifest.video_pad_ref)
            self.pad_vector = pad[0]

    @classmethod
    def from_arrays(cls, arrays: dict, labels: dict, pad_vector=None) -> "DataStore":
        """Build a store straight from {modality: {id: array}} dicts."""
        store = cls.__new__(cls)
        store.modalities = tuple(m for m in es.MODALITIES if m in arrays)
        store.arrays = {m: dict(arrays[m]) for m in store.modalities}
        store.labels = dict(labels)
        store.pad_vector = pad_vector
        return store

    def ids(self):
        return list(self.labels)

    def batch(self, ids):
        """Assemble (modality -> array) inputs plus the label vector."""
        out = {}
        for m in self.modalities:
            if m == "V":
                first = self.arrays["V"][ids[0]]
                v = np.zeros((len(ids), es.MAX_VIDEO_FRAMES, first.shape[1]), dtype=np.float32)
                if self.pad_vector is not None:
                    v[:] = self.pad_vector
                for row, i in enumerate(ids):
                    frames = self.arrays["V"][i]
                    v[row, : frames.shape[0]] = frames
                out["V"] = v
            else:
                out[m] = np.stack([self.arrays[m][i][0] for i in ids])
        labels = np.array([self.labels[i] for i in ids], dtype=np.int64)
        return out, labels


def _batch_iter(ids, batch_size):
    for lo in range(0, len(ids), batch_size):
        yield ids[lo : lo + batch_size]


def evaluate_loss(model, store, ids, class_weights, batch_size=64) -> float:
    total, n = 0.0, 0
    with nn.no_grad():
        for chunk in _batch_iter(list(ids), batch_size):
            batch, labels = store.batch(chunk)
            logits = fm.forward(model, batch, mode="eval")
            loss = nn.weighted_cross_entropy(logits, labels, class_weights)
            total += loss.item() * len(chunk)
            n += len(chunk)
    return total / n


def evaluate_report(model, store, ids, batch_size=64) -> mx.MetricsReport:
    preds, labels = [], []
    with nn.no_grad():
        for chunk in _batch_iter(list(ids), batch_size):
            batch, y = store.batch(chunk)
            logits = fm.forward(model, batch, mode="eval")
            preds.extend(logits.data.argmax(axis=1).tolist())
            labels.extend(y.tolist())
    return mx.report_from_predictions(preds, labels)


@dataclass
class FoldResult:
    fold: int
    best_val_loss: float
    best_values: dict
    history: list
    class_weights: np.ndarray


def train(model, store: DataStore, fold, hp: HyperParams, seed: int):
    """One training run on (train_ids, val_ids); returns the best snapshot.

    Per epoch: seeded shuffle, batches of ``hp.batch_size``, weighted
    cross-entropy plus elastic net minimized with Adam, then a validation
    pass feeding the plateau scheduler and early stopping. The returned
    parameter values are the ones with the lowest validation loss.
    """
    train_ids, val_ids = list(fold[0]), list(fold[1])
    if not train_ids or not val_ids:
        raise ValueError("fold must have nonempty train and validation id lists")
    train_labels = [store.labels[i] for i in train_ids]
    if len(set(train_labels)) < 2:
        raise ValueError("training split must contain both classes")
    class_weights = class_weights_from_labels(train_labels)

    params = model.params
    state = TrainState(lr=hp.lr)
    best_values = params.values_copy()
    if hp.max_epochs == 0:
        return best_values, state, class_weights

    shuffle_rng = _rng(seed, 1)
    dropout_rng = _rng(seed, 2)
    # Train-mode dropout rate comes from the hyperparameters, not the config.
    run_config = replace(model.config, dropout=hp.dropout)
    run_model = fm.Model(config=run_config, params=params)
    adam = Adam(params)

    for epoch in range(hp.max_epochs):
        order = list(train_ids)
        shuffle_rng.shuffle(order)
        epoch_loss, n_seen = 0.0, 0
        for chunk in _batch_iter(order, hp.batch_size):
            batch, labels = store.batch(chunk)
            params.zero_grad()
            logits = fm.forward(run_model, batch, mode="train", rng=dropout_rng)
            ce = nn.weighted_cross_entropy(logits, labels, class_weights)
            loss_value = ce.item() + nn.elastic_net_penalty(params, hp.l1, hp.l2)
            if not math.isfinite(loss_value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} after {n_seen} samples (lr={state.lr})"
                )
            nn.backward(ce)
            nn.apply_elastic_net_grads(params, hp.l1, hp.l2)
            adam.step(state.lr)
            epoch_loss += loss_value * len(chunk)
            n_seen += len(chunk)

        val_loss = evaluate_loss(run_model, store, val_ids, class_weights)
        improved = scheduler_step(state, val_loss, hp)
        if improved:
            best_values = params.values_copy()
        state.epoch = epoch + 1
        state.history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / n_seen,
                "val_loss": val_loss,
                "lr": state.lr,
            }
        )
        if early_stop_check(state, hp.patience):
            break
    return best_values, state, class_weights


def train_fold(config, store, fold, fold_idx, hp, seed) -> FoldResult:
    model = fm.build_model(config, seed=_seed_for(seed, fold_idx))
    best_values, state, class_weights = train(model, store, fold, hp, seed=_seed_for(seed, fold_idx, 7))
    return FoldResult(
        fold=fold_idx,
        best_val_loss=state.best_val_loss,
        best_values=best_values,
        history=state.history,
        class_weights=class_weights,
    )


def _seed_for(*key) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


@dataclass
class SeedRunResult:
    seed: int
    chosen_fold: int
    report: mx.MetricsReport
    fold_val_losses: list
    fold_histories: list
    best_values: dict


@dataclass
class CvResult:
    per_seed: list
    aggregate: mx.AggregateReport
    test_ids: tuple


def run_cv(manifest, config, hp: HyperParams, seeds, split_seed: int = 0, folds=None,
           store: DataStore | None = None) -> CvResult:
    """The evaluation protocol: per seed, train each fold, pick the fold
    checkpoint with the lowest validation loss, score it once on the held-out
    test split, then aggregate over seeds as mean (std).
    """
    plan = es.split_dataset(manifest, seed=split_seed)
    if store is None:
        store = DataStore(manifest)
    test_set = set(plan.test_ids)
    fold_indices = list(folds) if folds is not None else list(range(len(plan.folds)))

    per_seed = []
    for seed in seeds:
        results = []
        for k in fold_indices:
            train_ids, val_ids = plan.folds[k]
            leaked = (set(train_ids) | set(val_ids)) & test_set
            if leaked:
                raise RuntimeError(f"test ids leaked into fold {k}: {sorted(leaked)[:3]}")
            try:
                results.append(train_fold(config, store, plan.folds[k], k, hp, seed))
            except TrainingDiverged as e:
                raise TrainingDiverged(f"seed {seed}, fold {k}: {e}") from e
        chosen = min(results, key=lambda r: (r.best_val_loss, r.fold))
        model = fm.build_model(config, seed=_seed_for(seed, chosen.fold))
        model.params.load_values(chosen.best_values)
        report = evaluate_report(model, store, plan.test_ids)
        per_seed.append(
            SeedRunResult(
                seed=seed,
                chosen_fold=chosen.fold,
                report=report,
                fold_val_losses=[r.best_val_loss for r in results],
                fold_histories=[r.history for r in results],
                best_values=chosen.best_values,
            )
        )
    aggregate = mx.aggregate_runs([r.report for r in per_seed])
    return CvResult(per_seed=per_seed, aggregate=aggregate, test_ids=plan.test_ids)


def enumerate_grid(grid=None):
    """Cartesian product of the hyperparameter grid in fixed field order."""
    grid = dict(DEFAULT_GRID if grid is None else grid)
    names = [n for n in ("lr", "l1", "l2", "dropout", "patience") if n in grid]
    points = []
    for combo in itertools.product(*(grid[n] for n in names)):
        points.append(HyperParams(**dict(zip(names, combo))))
    return points


@dataclass
class GridSearchResult:
    best: HyperParams
    leaderboard: list  # (HyperParams, mean val M-F1) sorted best first


def grid_search(manifest, config, grid, seed: int, split_seed: int = 0, folds=None,
                max_epochs=None, store: DataStore | None = None) -> GridSearchResult:
    """Exhaustive sweep ranked by mean validation M-F1 across folds.

    Deterministic tie-break: lexicographically smaller hyperparameter tuple
    wins.
    """
    plan = es.split_dataset(manifest, seed=split_seed)
    if store is None:
        store = DataStore(manifest)
    fold_indices = list(folds) if folds is not None else list(range(len(plan.folds)))
    points = enumerate_grid(grid)
    if not points:
        raise ValueError("empty hyperparameter grid")

    scored = []
    for hp in points:
        if max_epochs is not None:
            hp = replace(hp, max_epochs=max_epochs)
        val_scores = []
        for k in fold_indices:
            result = train_fold(config, store, plan.folds[k], k, hp, seed)
            model = fm.build_model(config, seed=_seed_for(seed, k))
            model.params.load_values(result.best_values)
            val_scores.append(evaluate_report(model, store, plan.folds[k][1]).m_f1)
        scored.append((hp, sum(val_scores) / len(val_scores)))

    def sort_key(item):
        hp, score = item
        return (-score, hp.lr, hp.l1, hp.l2, hp.dropout, hp.patience)

    scored.sort(key=sort_key)
    return GridSearchResult(best=scored[0][0], leaderboard=scored)
