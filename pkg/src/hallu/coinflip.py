"""Coin-aggregation experiment: exact count laws, data, and a linear learner.

A task owns a pool of coins (distinct head probabilities) and latent states
that each flip one subset of the pool; the observation is the total number
of heads. The exact law of a subset's total is Poisson-binomial, computed by
the convolution recurrence, so hallucination verdicts here are exact pmf
statements rather than density approximations.

The learner is a linear least-squares map from the binary coin encoding:
for these tasks the optimal predictor is linear in the encoding, so the
model reaches the very optimum the theory is about, without transformer
machinery.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ModelError
from .rng import stream

DIVERGENCE_LOSS = 1e12


@dataclass(frozen=True)
class CoinSet:
    """A pool of coins, each with its own head probability in (0, 1)."""

    head_probs: np.ndarray

    def __init__(self, head_probs):
        p = np.asarray(head_probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InputError("head_probs must be a nonempty vector")
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise InputError("head probabilities must lie strictly inside (0, 1)")
        if np.unique(p).size != p.size:
            raise InputError("head probabilities must be pairwise distinct")
        p = np.array(p)
        p.setflags(write=False)
        object.__setattr__(self, "head_probs", p)

    @property
    def n_coins(self) -> int:
        return self.head_probs.size


@dataclass(frozen=True)
class LatentCoinTask:
    """Latent states pick which coin subset generated the observed count.

    With `shared_input` the dataset encodes every row as the union of all
    subsets (the learner knows which coins are in play but not which subset
    was flipped); otherwise each row encodes its state's own subset.
    """

    coins: CoinSet
    subsets: tuple[tuple[int, ...], ...]
    state_probs: np.ndarray
    shared_input: bool = False

    def __init__(self, coins, states, shared_input=False):
        subsets, probs = [], []
        for subset, prob in states:
            idx = tuple(int(i) for i in subset)
            if not idx:
                raise InputError("state subsets must be nonempty")
            if any(i < 0 or i >= coins.n_coins for i in idx):
                raise InputError("subset indexes a coin outside the pool")
            subsets.append(idx)
            probs.append(float(prob))
        p = np.asarray(probs, dtype=float)
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise InputError("state probabilities must form a probability vector")
        p = np.array(p)
        p.setflags(write=False)
        object.__setattr__(self, "coins", coins)
        object.__setattr__(self, "subsets", tuple(subsets))
        object.__setattr__(self, "state_probs", p)
        object.__setattr__(self, "shared_input", bool(shared_input))

    @property
    def n_states(self) -> int:
        return len(self.subsets)

    def subset_probs(self, i: int) -> np.ndarray:
        return self.coins.head_probs[list(self.subsets[i])]

    def subset_mean(self, i: int) -> float:
        return float(np.sum(self.subset_probs(i)))

    def encoding_for_state(self, i: int) -> np.ndarray:
        enc = np.zeros(self.coins.n_coins, dtype=np.uint8)
        if self.shared_input:
            for subset in self.subsets:
                enc[list(subset)] = 1
        else:
            enc[list(self.subsets[i])] = 1
        return enc

    def state_pmf(self, i: int) -> np.ndarray:
        return poisson_binomial_pmf(self.subset_probs(i))


def poisson_binomial_pmf(head_probs) -> np.ndarray:
    """Exact pmf of the number of heads among independent, non-identical coins.

    Convolution recurrence: after coin j, f_k <- f_k (1 - p_j) + f_{k-1} p_j.
    """
    p = np.asarray(head_probs, dtype=float)
    if p.size == 0:
        raise InputError("empty coin subset")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise InputError("head probabilities must lie strictly inside (0, 1)")
    pmf = np.zeros(p.size + 1)
    pmf[0] = 1.0
    for j, pj in enumerate(p):
        pmf[1 : j + 2] = pmf[1 : j + 2] * (1.0 - pj) + pmf[: j + 1] * pj
        pmf[0] *= 1.0 - pj
    return pmf


@dataclass(frozen=True)
class FlipDataset:
    encodings: np.ndarray  # (M, n_coins) uint8
    counts: np.ndarray  # (M,) observed totals
    states: np.ndarray  # (M,) generating state index

    def __post_init__(self):
        if np.any(self.counts > self.encodings.shape[1]):
            raise InputError("a count exceeds the number of coins")

    @property
    def n_rows(self) -> int:
        return self.counts.size


def generate_dataset(task: LatentCoinTask, flips: int, seed: int,
                     partitions: int = 1) -> FlipDataset:
    """Draw `flips` rows: latent state by its probability, then that subset's coins."""
    if flips < 1:
        raise InputError("need at least one flip")
    if partitions < 1:
        raise InputError("partitions must be >= 1")
    base, extra = divmod(flips, partitions)
    enc_rows, count_rows, state_rows = [], [], []
    encodings = np.stack([task.encoding_for_state(i) for i in range(task.n_states)])
    for part in range(partitions):
        n = base + (1 if part < extra else 0)
        if n == 0:
            continue
        gen = stream(seed, "coinflip.dataset", part)
        states = gen.choice(task.n_states, size=n, p=task.state_probs)
        counts = np.zeros(n, dtype=np.int64)
        for i in range(task.n_states):
            mask = states == i
            k = int(np.count_nonzero(mask))
            if k:
                probs = task.subset_probs(i)
                counts[mask] = np.sum(gen.random((k, probs.size)) < probs, axis=1)
        enc_rows.append(encodings[states])
        count_rows.append(counts)
        state_rows.append(states)
    return FlipDataset(np.concatenate(enc_rows), np.concatenate(count_rows),
                       np.concatenate(state_rows))


def bayes_prediction(task: LatentCoinTask, encoding) -> float:
    """Posterior-weighted mean count over the states consistent with `encoding`."""
    enc = np.asarray(encoding, dtype=np.uint8)
    consistent = [i for i in range(task.n_states)
                  if np.array_equal(task.encoding_for_state(i), enc)]
    total = sum(task.state_probs[i] for i in consistent)
    if not consistent or total <= 0:
        raise InputError("encoding matches no state with positive probability")
    return float(sum(task.state_probs[i] * task.subset_mean(i) for i in consistent) / total)


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray

    def predict(self, encodings) -> np.ndarray:
        return np.asarray(encodings, dtype=float) @ self.weights


@dataclass(frozen=True)
class TrainingTrace:
    epochs: np.ndarray
    train_loss: np.ndarray
    mean_conditional_pmf: np.ndarray


def least_squares_model(dataset: FlipDataset) -> LinearModel:
    """Minimum-norm least-squares fit; the limit a zero-initialized learner reaches."""
    x = dataset.encodings.astype(float)
    w, *_ = np.linalg.lstsq(x, dataset.counts.astype(float), rcond=None)
    return LinearModel(w)


def _mean_conditional_pmf(task, model, encodings, states) -> float:
    """pmf of the true generating state's count law at the rounded prediction."""
    preds = np.rint(model.predict(encodings)).astype(np.int64)  # ties to even
    pmfs = [task.state_pmf(i) for i in range(task.n_states)]
    out = np.zeros(preds.size)
    for r, (k, s) in enumerate(zip(preds, states)):
        pmf = pmfs[int(s)]
        if 0 <= k < pmf.size:
            out[r] = pmf[k]
    return float(np.mean(out))


def train_estimator(dataset: FlipDataset, task: LatentCoinTask, epochs: int,
                    learning_rate: float, seed: int, batch_size: int | None = None,
                    val_fraction: float = 0.2) -> tuple[LinearModel, TrainingTrace]:
    """Gradient descent on mean squared error from zero weights.

    `batch_size=None` runs full-batch (deterministic) descent; otherwise
    shuffled mini-batches. The trace records, per epoch, the training loss
    and the mean conditional pmf of rounded predictions on a held-out slice.
    """
    if dataset.n_rows == 0:
        raise InputError("dataset is empty")
    if epochs < 0 or learning_rate <= 0:
        raise InputError("epochs must be >= 0 and learning_rate positive")
    gen = stream(seed, "coinflip.train")
    order = gen.permutation(dataset.n_rows)
    n_val = int(round(val_fraction * dataset.n_rows))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        raise InputError("validation fraction leaves no training rows")
    x = dataset.encodings[train_idx].astype(float)
    y = dataset.counts[train_idx].astype(float)
    xv, sv = dataset.encodings[val_idx], dataset.states[val_idx]
    if xv.shape[0] == 0:
        xv, sv = dataset.encodings[train_idx], dataset.states[train_idx]

    w = np.zeros(x.shape[1])
    ep, losses, pmfs = [], [], []

    def record(epoch: int):
        loss = float(np.mean((x @ w - y) ** 2))
        if loss > DIVERGENCE_LOSS:
            raise ModelError(f"training diverged: loss {loss:.3g} at epoch {epoch}")
        ep.append(epoch)
        losses.append(loss)
        pmfs.append(_mean_conditional_pmf(task, LinearModel(w), xv, sv))

    record(0)
    m = x.shape[0]
    for epoch in range(1, epochs + 1):
        if batch_size is None:
            w -= learning_rate * (2.0 / m) * (x.T @ (x @ w - y))
        else:
            perm = gen.permutation(m)
            for start in range(0, m, batch_size):
                idx = perm[start : start + batch_size]
                xb, yb = x[idx], y[idx]
                w -= learning_rate * (2.0 / xb.shape[0]) * (xb.T @ (xb @ w - yb))
        record(epoch)

    trace = TrainingTrace(np.asarray(ep), np.asarray(losses), np.asarray(pmfs))
    return LinearModel(w), trace


@dataclass(frozen=True)
class DemoVerdict:
    prediction: float
    rounded: int
    per_state_pmf: np.ndarray
    hallucinates: bool
    delta: float


def hallucination_demo(task: LatentCoinTask, delta: float) -> DemoVerdict:
    """Evaluate the task-level optimal prediction against each state's exact pmf.

    The prediction is the prior-weighted mean count (the quadratic-loss
    optimum when the input does not reveal the state), rounded half-to-even;
    the verdict is true iff its pmf under every state is <= delta.
    """
    if not 0.0 < delta <= 1.0:
        raise InputError(f"delta must lie in (0, 1], got {delta}")
    prediction = float(np.dot(task.state_probs,
                              [task.subset_mean(i) for i in range(task.n_states)]))
    rounded = int(np.rint(prediction))
    pmf_vals = []
    for i in range(task.n_states):
        pmf = task.state_pmf(i)
        pmf_vals.append(float(pmf[rounded]) if 0 <= rounded < pmf.size else 0.0)
    pmf_vals = np.asarray(pmf_vals)
    return DemoVerdict(prediction, rounded, pmf_vals, bool(np.all(pmf_vals <= delta)),
                       float(delta))


def mirrored_demo_task(n_per_state: int = 20, p: float = 0.05,
                       state_probs=(0.5, 0.5), jitter: float = 1e-6) -> LatentCoinTask:
    """Two hidden states over mirrored coin blocks (head rates ~p and ~1-p).

    Coin probabilities are jittered by multiples of `jitter` to keep them
    pairwise distinct; mirrored pairs keep the two subset means summing to
    exactly n_per_state, so the optimal prediction is n_per_state / 2.
    """
    j = np.arange(n_per_state)
    low = p + j * jitter
    high = (1.0 - p) - j * jitter
    coins = CoinSet(np.concatenate([low, high]))
    states = [
        (tuple(range(n_per_state)), state_probs[0]),
        (tuple(range(n_per_state, 2 * n_per_state)), state_probs[1]),
    ]
    return LatentCoinTask(coins, states, shared_input=True)


# -- CSV persistence -----------------------------------------------------------

def save_dataset_csv(path, dataset: FlipDataset) -> None:
    n_bits = dataset.encodings.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"bit_{i}" for i in range(n_bits)] + ["count", "state"])
        for enc, cnt, st in zip(dataset.encodings, dataset.counts, dataset.states):
            writer.writerow([*map(int, enc), int(cnt), int(st)])


def load_dataset_csv(path) -> FlipDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_bits = sum(1 for h in header if h.startswith("bit_"))
        rows = [list(map(int, row)) for row in reader]
    arr = np.asarray(rows, dtype=np.int64)
    return FlipDataset(arr[:, :n_bits].astype(np.uint8), arr[:, n_bits], arr[:, n_bits + 1])


def save_trace_csv(path, trace: TrainingTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "mean_conditional_pmf"])
        for e, loss, pmf in zip(trace.epochs, trace.train_loss, trace.mean_conditional_pmf):
            writer.writerow([int(e), repr(float(loss)), repr(float(pmf))])
