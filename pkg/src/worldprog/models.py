"""Linear models over hashed fingerprints: a rule prior and a transition filter.

The prior is multinomial logistic regression from the state fingerprint to
the rule that fired. The transition filter is binary logistic regression on
``[fp(s) ; fp(s') - fp(s)]``. Both are trained with seeded mini-batch
gradient descent on the L2-regularised mean cross-entropy.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import DEFAULT_BITS, DEFAULT_RADIUS, sparse_state_fingerprint, state_matrix
from .graphs import State
from .induction import ActionLibrary, Observation
from .rewrite import enumerate_applications

MODEL_MAGIC = "WPMODEL"
MODEL_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    step: float = 0.1
    l2: float = 1e-4
    batch: int = 32
    seed: int = 0


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def policy_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``l2/2 * |W|^2``; returns ``(loss, dW, db)``."""
    n = len(y)
    P = softmax(X @ W.T + b)
    loss = -np.mean(np.log(P[np.arange(n), y] + 1e-300)) + 0.5 * l2 * np.sum(W * W)
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= n
    return loss, G.T @ X + l2 * W, G.sum(axis=0)


def transition_loss_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean binary cross-entropy plus ``l2/2 * |w|^2``; returns ``(loss, dw, db)``."""
    z = X @ w + b
    # log(1 + exp(-z)) for positives, log(1 + exp(z)) for negatives
    loss = np.mean(np.logaddexp(0.0, np.where(y == 1, -z, z))) + 0.5 * l2 * np.dot(w, w)
    g = (sigmoid(z) - y) / len(y)
    return loss, X.T @ g + l2 * w, float(g.sum())


def _minibatch_descent(params, loss_grad, X, y, cfg: TrainConfig):
    rng = np.random.default_rng(cfg.seed)
    n = len(y)
    history = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            loss, *grads = loss_grad(*params, X[idx], y[idx], cfg.l2)
            total += loss * len(idx)
            params = [p - cfg.step * g for p, g in zip(params, grads)]
        history.append(total / n)
    return params, history


# --------------------------------------------------------------------------
# policy
# --------------------------------------------------------------------------


@dataclass
class PolicyModel:
    weights: np.ndarray  # |A| x B
    bias: np.ndarray  # |A|
    radius: int = DEFAULT_RADIUS
    n_bits: int = DEFAULT_BITS
    library_hash: str = ""
    loss_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.weights.shape != (len(self.bias), self.n_bits):
            raise ModelError(f"weights {self.weights.shape} do not match |A|={len(self.bias)}, B={self.n_bits}")

    @property
    def n_rules(self) -> int:
        return len(self.bias)

    def scores(self, state: State) -> np.ndarray:
        fp = sparse_state_fingerprint(state, self.radius, self.n_bits)
        if not fp:
            return self.bias.copy()
        idx = np.fromiter(fp.keys(), dtype=np.int64, count=len(fp))
        cnt = np.fromiter(fp.values(), dtype=np.float64, count=len(fp))
        return self.weights[:, idx] @ cnt + self.bias

    @classmethod
    def zeros(cls, n_rules: int, radius: int = DEFAULT_RADIUS, n_bits: int = DEFAULT_BITS, library_hash: str = ""):
        return cls(np.zeros((n_rules, n_bits)), np.zeros(n_rules), radius, n_bits, library_hash)


def train_policy(
    library: ActionLibrary,
    states: list[State],
    labels: list[int],
    cfg: TrainConfig | None = None,
    radius: int = DEFAULT_RADIUS,
    n_bits: int = DEFAULT_BITS,
) -> PolicyModel:
    """Fit the rule prior on ``(state, rule ordinal)`` pairs."""
    cfg = cfg or TrainConfig()
    n_rules = len(library)
    if n_rules < 2:
        raise ModelError("policy needs at least two rules")
    if not states or len(states) != len(labels):
        raise ModelError("states and labels must be non-empty and of equal length")
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 0 or y.max() >= n_rules:
        raise ModelError("label outside the library's ordinal range")
    X = state_matrix(states, radius, n_bits)
    params = [np.zeros((n_rules, n_bits)), np.zeros(n_rules)]
    (W, b), history = _minibatch_descent(params, policy_loss_grad, X, y, cfg)
    model = PolicyModel(W, b, radius, n_bits, library.hash_id)
    model.loss_history = history
    return model


def policy_distribution(model: PolicyModel, state: State) -> np.ndarray:
    return softmax(model.scores(state))


def topk_from_probs(probs, mass: float = 0.99, k_max: int = 50) -> list[tuple[int, float]]:
    """Shortest probability-descending prefix reaching ``mass``, capped at ``k_max``."""
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must lie in (0, 1)")
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    out = []
    total = 0.0
    for i in order[:k_max]:
        out.append((i, float(probs[i])))
        total += float(probs[i])
        if total >= mass:
            break
    return out


def policy_topk(model: PolicyModel, state: State, mass: float = 0.99, k_max: int = 50) -> list[tuple[int, float]]:
    return topk_from_probs(policy_distribution(model, state), mass, k_max)


# --------------------------------------------------------------------------
# transition filter
# --------------------------------------------------------------------------


@dataclass
class TransitionDataset:
    pairs: list[tuple[State, State]]
    labels: list[int]

    @property
    def n_positive(self) -> int:
        return sum(self.labels)

    @property
    def n_negative(self) -> int:
        return len(self.labels) - self.n_positive


def make_transition_dataset(
    library: ActionLibrary,
    observations: list[Observation],
    neg_per_pos: int = 4,
    seed: int = 0,
    cap: int = 64,
) -> TransitionDataset:
    """Observed pairs as positives, plus rule applications that disagree with them.

    For each observation ``neg_per_pos`` rules are drawn uniformly from the
    library; each applicable draw contributes one successor, drawn uniformly
    among the rule's applications whose successor is not the observed one.
    """
    if len(library) == 0:
        raise ModelError("library is empty")
    rng = random.Random(seed)
    pairs: list[tuple[State, State]] = []
    labels: list[int] = []
    for obs in observations:
        pairs.append((obs.before, obs.after))
        labels.append(1)
        cache: dict[int, list[State]] = {}
        target = obs.after.key()
        for _ in range(neg_per_pos):
            r = rng.randrange(len(library))
            if r not in cache:
                cache[r] = [s for _, s in enumerate_applications(library[r], obs.before, cap) if s.key() != target]
            cands = cache[r]
            if cands:
                pairs.append((obs.before, cands[rng.randrange(len(cands))]))
                labels.append(0)
    return TransitionDataset(pairs, labels)


@dataclass
class TransitionModel:
    weights: np.ndarray  # 2B: state part then difference part
    bias: float = 0.0
    radius: int = DEFAULT_RADIUS
    n_bits: int = DEFAULT_BITS
    tau: float = 0.5
    library_hash: str = ""
    loss_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.weights.shape != (2 * self.n_bits,):
            raise ModelError(f"weights {self.weights.shape} do not match 2B={2 * self.n_bits}")
        if not 0.0 < self.tau < 1.0:
            raise ModelError("tau must lie in (0, 1)")

    @classmethod
    def zeros(cls, radius: int = DEFAULT_RADIUS, n_bits: int = DEFAULT_BITS, tau: float = 0.5, library_hash: str = ""):
        return cls(np.zeros(2 * n_bits), 0.0, radius, n_bits, tau, library_hash)

    def _dot(self, w: np.ndarray, s: State) -> float:
        fp = sparse_state_fingerprint(s, self.radius, self.n_bits)
        return float(sum(w[b] * c for b, c in fp.items()))

    def logit(self, s: State, s2: State) -> float:
        B = self.n_bits
        ws, wd = self.weights[:B], self.weights[B:]
        return self.bias + self._dot(ws - wd, s) + self._dot(wd, s2)

    def score_many(self, s: State, successors: list[State]) -> list[float]:
        B = self.n_bits
        ws, wd = self.weights[:B], self.weights[B:]
        base = self.bias + self._dot(ws - wd, s)
        return [float(sigmoid(base + self._dot(wd, s2))) for s2 in successors]


def transition_features(pairs, radius: int, n_bits: int) -> np.ndarray:
    before = state_matrix([p[0] for p in pairs], radius, n_bits)
    after = state_matrix([p[1] for p in pairs], radius, n_bits)
    return np.hstack([before, after - before])


def train_transition(
    dataset: TransitionDataset,
    cfg: TrainConfig | None = None,
    radius: int = DEFAULT_RADIUS,
    n_bits: int = DEFAULT_BITS,
    tau: float = 0.5,
    library_hash: str = "",
) -> TransitionModel:
    cfg = cfg or TrainConfig()
    if dataset.n_positive == 0 or dataset.n_negative == 0:
        raise ModelError("transition dataset needs both positive and negative examples")
    X = transition_features(dataset.pairs, radius, n_bits)
    y = np.asarray(dataset.labels, dtype=np.float64)
    params = [np.zeros(2 * n_bits), 0.0]
    (w, b), history = _minibatch_descent(params, transition_loss_grad, X, y, cfg)
    model = TransitionModel(w, float(b), radius, n_bits, tau, library_hash)
    model.loss_history = history
    return model


def score_transition(model: TransitionModel, s: State, s2: State) -> float:
    return float(sigmoid(model.logit(s, s2)))


# --------------------------------------------------------------------------
# model files
# --------------------------------------------------------------------------


def _write(path: Path, header: dict, arrays: list[np.ndarray]) -> None:
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}"]
    lines += [f"{k} {v}" for k, v in header.items()]
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read(path: Path) -> tuple[dict, bytes]:
    data = Path(path).read_bytes()
    header: dict[str, str] = {}
    pos = 0
    first = True
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ModelError(f"{path}: truncated header")
        line = data[pos:nl].decode("utf-8")
        pos = nl + 1
        if first:
            magic, _, version = line.partition(" ")
            if magic != MODEL_MAGIC or version != str(MODEL_VERSION):
                raise ModelError(f"{path}:1: not a version-{MODEL_VERSION} model file")
            first = False
            continue
        if line == "end":
            break
        k, _, v = line.partition(" ")
        header[k] = v
    return header, data[pos:]


def save_policy(model: PolicyModel, path) -> None:
    header = {
        "kind": "policy",
        "radius": model.radius,
        "bits": model.n_bits,
        "classes": model.n_rules,
        "library": model.library_hash or "-",
    }
    _write(Path(path), header, [model.weights.ravel(), model.bias])


def load_policy(path) -> PolicyModel:
    header, blob = _read(path)
    if header.get("kind") != "policy":
        raise ModelError(f"{path}: not a policy model")
    a, bits = int(header["classes"]), int(header["bits"])
    arr = np.frombuffer(blob, dtype="<f8")
    if len(arr) != a * bits + a:
        raise ModelError(f"{path}: expected {a * bits + a} weights, found {len(arr)}")
    lib = header.get("library", "-")
    return PolicyModel(arr[: a * bits].reshape(a, bits).copy(), arr[a * bits:].copy(), int(header["radius"]), bits,
                       "" if lib == "-" else lib)


def save_transition(model: TransitionModel, path) -> None:
    header = {
        "kind": "transition",
        "radius": model.radius,
        "bits": model.n_bits,
        "tau": repr(model.tau),
        "library": model.library_hash or "-",
    }
    _write(Path(path), header, [model.weights, np.array([model.bias])])


def load_transition(path) -> TransitionModel:
    header, blob = _read(path)
    if header.get("kind") != "transition":
        raise ModelError(f"{path}: not a transition model")
    bits = int(header["bits"])
    arr = np.frombuffer(blob, dtype="<f8")
    if len(arr) != 2 * bits + 1:
        raise ModelError(f"{path}: expected {2 * bits + 1} weights, found {len(arr)}")
    lib = header.get("library", "-")
    return TransitionModel(arr[: 2 * bits].copy(), float(arr[2 * bits]), int(header["radius"]), bits,
                           float(header["tau"]), "" if lib == "-" else lib)
