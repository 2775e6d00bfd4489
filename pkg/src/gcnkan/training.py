"""Training protocol: cross-entropy loss, Adam with L2 weight decay,
plateau LR scheduling, early stopping, the per-fold loop, and the
stratified cross-validation driver.

Batches are processed one subject graph at a time with gradients
accumulated and averaged, which is equivalent to a batched mean loss.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import metrics as M
from .errors import ConfigError, NonFiniteGradientError
from .graph import build_adjacency
from .model import VARIANTS, init_params, model_forward

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 0.0005
    weight_decay: float = 1e-4
    dropout: float = 0.2
    grid_size: int = 10
    tau: float = 0.1
    epochs_max: int = 1000
    early_stop_patience: int = 50
    scheduler_patience: int = 20
    scheduler_factor: float = 0.1
    min_lr: float = 1e-6
    improvement_eps: float = 1e-4
    seed: int = 0
    folds: int = 5
    model: str = "gcn-kan"
    hidden: int = 32
    epsilon: float = 1e-8

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.tau < 1.0:
            raise ConfigError(f"tau must be in [0, 1), got {self.tau}")
        if self.grid_size < 1:
            raise ConfigError(f"grid_size must be >= 1, got {self.grid_size}")
        if self.epochs_max < 1:
            raise ConfigError(f"epochs_max must be >= 1, got {self.epochs_max}")
        if self.early_stop_patience < 1 or self.scheduler_patience < 1:
            raise ConfigError("patience values must be >= 1")
        if not 0.0 < self.scheduler_factor < 1.0:
            raise ConfigError(
                f"scheduler_factor must be in (0, 1), got {self.scheduler_factor}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.model not in VARIANTS:
            raise ConfigError(f"model must be one of {VARIANTS}, got {self.model!r}")
        return self

    def to_dict(self):
        return asdict(self)


def cross_entropy(logits, label):
    """Softmax negative log-likelihood of the true class, stabilized by
    max-logit subtraction. Returns a taped Tensor for Tensor input, a float
    otherwise."""
    if label not in (0, 1):
        raise ConfigError(f"label must be 0 or 1, got {label!r}")
    out = ad.cross_entropy_logits(logits, label)
    if isinstance(out, ad.Tensor):
        return out
    return float(out)


class Adam:
    """Classic Adam over a dict of named arrays, updated in place.

    Weight decay enters as an L2 term added to the gradient before the
    moment updates.
    """

    def __init__(self, arrays, lr, weight_decay=0.0,
                 beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.arrays = dict(arrays)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in self.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.arrays.items()}
        self.step_count = 0

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        for name, theta in self.arrays.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(
                    f"non-finite gradient for parameter {name!r} at step {t}")
            if self.weight_decay:
                g = g + self.weight_decay * theta
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            theta -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params, grads, config, lr=None):
    """One Adam update of a ModelParams, using its own moment buffers.

    `grads` maps parameter names to arrays; `lr` overrides config.lr when
    the scheduler has reduced it. Mutates and returns `params`.
    """
    lr = config.lr if lr is None else lr
    params.adam_step_count += 1
    t = params.adam_step_count
    for name, theta in params.named_arrays():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient for parameter {name!r} at step {t}")
        if config.weight_decay:
            g = g + config.weight_decay * theta
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params


class PlateauScheduler:
    """Cut the learning rate by `factor` after `patience` consecutive
    epochs without an absolute improvement of more than `eps`."""

    def __init__(self, lr, factor, patience, min_lr, eps=1e-4):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.eps = eps
        self.best = np.inf
        self.stale = 0

    def step(self, val_loss):
        if val_loss < self.best - self.eps:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.stale = 0
        return self.lr


class EarlyStopper:
    """Signal a stop after `patience` consecutive epochs without an
    absolute improvement of more than `eps`."""

    def __init__(self, patience, eps=1e-4):
        self.patience = patience
        self.eps = eps
        self.best = np.inf
        self.stale = 0

    def step(self, val_loss):
        """Returns (improved, stop)."""
        if val_loss < self.best - self.eps:
            self.best = val_loss
            self.stale = 0
            return True, False
        self.stale += 1
        return False, self.stale >= self.patience


@dataclass
class FoldResult:
    fold_index: int
    best_val_loss: float
    best_epoch: int
    epochs_run: int
    params: object
    graph: object  # the RoiGraph built from this fold's training subjects
    report: object  # EvalReport of the best params on the held-out fold
    history: list = field(default_factory=list)


@dataclass
class CvResult:
    folds: list
    aggregate: dict  # metric -> (mean, sample std)
    config: TrainConfig


def _rng_streams(seed_seq):
    if not isinstance(seed_seq, np.random.SeedSequence):
        seed_seq = np.random.SeedSequence(seed_seq)
    init_ss, shuffle_ss, dropout_ss = seed_seq.spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss),
            np.random.default_rng(dropout_ss))


def _loss_and_scores(params, graph, table):
    """Inference-mode mean loss, positive-class scores, and accuracy."""
    losses, scores = [], []
    correct = 0
    for row, label in zip(table.features, table.labels):
        logits = model_forward(params, graph, row[:, None])
        losses.append(cross_entropy(logits, label))
        shifted = logits - logits.max()
        p = np.exp(shifted)
        p /= p.sum()
        score = float(p[1])
        scores.append(score)
        if (1 if score >= 0.5 else 0) == label:
            correct += 1
    return float(np.mean(losses)), scores, correct / len(table.labels)


def train_one_fold(train_table, val_table, graph, config, seed_seq=None,
                   fold_index=0):
    """Train one model on a train/val split against a fixed graph.

    Per epoch: shuffled mini-batches of config.batch_size with averaged,
    accumulated gradients; validation loss drives the plateau scheduler and
    early stopping. Returns the best-validation-loss parameters along with
    the epoch history and an evaluation of the held-out split.
    """
    config.validate()
    if train_table.n_subjects == 0 or val_table.n_subjects == 0:
        raise ConfigError("train and validation splits must both be nonempty")
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(config.seed)
    init_rng, shuffle_rng, dropout_rng = _rng_streams(seed_seq)

    params = init_params(config.model, init_rng, n_features=1,
                         hidden=config.hidden, n_classes=2,
                         grid_size=config.grid_size, epsilon=config.epsilon)
    scheduler = PlateauScheduler(config.lr, config.scheduler_factor,
                                 config.scheduler_patience, config.min_lr,
                                 eps=config.improvement_eps)
    stopper = EarlyStopper(config.early_stop_patience,
                           eps=config.improvement_eps)

    n_train = train_table.n_subjects
    features = train_table.features
    labels = train_table.labels
    best_params = params.copy()
    best_val = np.inf
    best_epoch = 0
    history = []
    epochs_run = 0

    for epoch in range(1, config.epochs_max + 1):
        epochs_run = epoch
        order = shuffle_rng.permutation(n_train)
        epoch_losses = []
        for start in range(0, n_train, config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
            for i in batch:
                tape = ad.Tape()
                lifted, leaves = params.lift(tape)
                logits = model_forward(lifted, graph, features[i][:, None],
                                       training=True,
                                       dropout_rate=config.dropout,
                                       rng=dropout_rng, tape=tape)
                loss = cross_entropy(logits, labels[i])
                epoch_losses.append(loss.item())
                grad_map = ad.backward(tape, loss)
                for name, leaf in leaves.items():
                    acc[name] += grad_map[leaf]
            inv = 1.0 / len(batch)
            grads = {name: g * inv for name, g in acc.items()}
            adam_step(params, grads, config, lr=scheduler.lr)

        val_loss, _, val_acc = _loss_and_scores(params, graph, val_table)
        lr_now = scheduler.lr
        improved, stop = stopper.step(val_loss)
        if improved:
            best_params = params.copy()
            best_val = val_loss
            best_epoch = epoch
        scheduler.step(val_loss)
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "val_loss": val_loss,
            "val_accuracy": val_acc,
            "lr": lr_now,
        })
        if stop:
            break

    _, scores, _ = _loss_and_scores(best_params, graph, val_table)
    report = M.evaluate_scores(val_table.subject_ids, val_table.labels, scores)
    return FoldResult(fold_index=fold_index, best_val_loss=float(best_val),
                      best_epoch=best_epoch, epochs_run=epochs_run,
                      params=best_params, graph=graph, report=report,
                      history=history)


def stratified_fold_assignment(labels, folds, rng):
    """Fold index per subject; each class is shuffled then dealt round-robin
    so fold class proportions stay within one subject of the global ones."""
    labels = np.asarray(labels)
    fold_of = np.empty(len(labels), dtype=int)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < folds:
            raise ConfigError(
                f"class {cls} has {idx.size} subjects, fewer than {folds} folds")
        idx = idx.copy()
        rng.shuffle(idx)
        for pos, subject in enumerate(idx):
            fold_of[subject] = pos % folds
    return fold_of


def run_cross_validation(table, config):
    """Stratified k-fold over a binary cohort table.

    Each fold builds its adjacency from its training subjects only, trains,
    and evaluates on the held-out fold (which also serves as the early
    stopping validation set). Aggregates are mean +- sample std across
    folds.
    """
    config.validate()
    table.validate()
    base = np.random.SeedSequence(config.seed)
    seqs = base.spawn(config.folds + 1)
    assign_rng = np.random.default_rng(seqs[0])
    fold_of = stratified_fold_assignment(table.labels, config.folds, assign_rng)

    results = []
    for f in range(config.folds):
        val_idx = np.flatnonzero(fold_of == f)
        train_idx = np.flatnonzero(fold_of != f)
        train_table = table.subset(train_idx)
        val_table = table.subset(val_idx)
        fold_graph = build_adjacency(train_table, config.tau)
        result = train_one_fold(train_table, val_table, fold_graph, config,
                                seed_seq=seqs[1 + f], fold_index=f)
        results.append(result)

    aggregate = M.aggregate_metrics([r.report for r in results])
    return CvResult(folds=results, aggregate=aggregate, config=config)
