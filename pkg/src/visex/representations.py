"""Class representations from sentence embeddings.

Two families: the plain average of a class's kept sentences, and a weighted
average whose per-sentence weights come from a small scoring network. The
weights are a softmax over the network's scalar scores within each class,
so they are positive and sum to one; the weighted vector keeps the leading
1/m factor of the defining formula (cosine-based objectives are invariant
to it; a switch drops it for consumers that are not).

The scoring network is trained in two sequential phases:
  init phase    minimize sum_c max(0, epsilon - cos(a_c, mean_c))
  margin phase  minimize sum over unordered pairs max(0, cos(a_c, a_c') - tau)
Both losses are hinges, so gradients vanish exactly where the constraint is
satisfied. All gradients here are hand-derived and checked against central
finite differences in the test suite.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .errors import ValidationError
from .fileio import iter_jsonl, write_jsonl
from .filtering import FilteredDocument
from .mlp import MLP, make_optimizer

logger = logging.getLogger(__name__)

REPR_KINDS = ("average", "weighted", "external")

DEFAULT_HIDDEN = (256, 256)


@dataclass(frozen=True)
class Representation:
    class_id: str
    vector: np.ndarray  # (d,) float64
    kind: str

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise ValidationError(f"representation for {self.class_id!r} must be a vector")
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"non-finite representation for class {self.class_id!r}")
        if self.kind not in REPR_KINDS:
            raise ValidationError(f"unknown representation kind {self.kind!r}")
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @property
    def dimension(self) -> int:
        return int(self.vector.shape[0])


class WeightNet:
    """Scalar-output scoring network over sentence embeddings.

    Initialized with small zero-mean weights and zero biases so the initial
    weights are near-uniform and the weighted vector starts close to the
    plain mean.
    """

    INIT_SCALE = 1e-2

    def __init__(self, input_dim: int, hidden: tuple[int, ...] = DEFAULT_HIDDEN,
                 rng: np.random.Generator | int | None = None):
        if input_dim <= 0:
            raise ValidationError(f"input_dim must be positive, got {input_dim}")
        widths = (input_dim, *hidden, 1)
        self.mlp = MLP(widths, rng=rng, weight_scale=self.INIT_SCALE)

    @property
    def input_dim(self) -> int:
        return self.mlp.widths[0]

    @property
    def widths(self) -> tuple[int, ...]:
        return self.mlp.widths

    def scores(self, embeddings: np.ndarray) -> np.ndarray:
        """Raw scalar scores, one per row of `embeddings`."""
        mat = np.asarray(embeddings, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != self.input_dim:
            raise ValidationError(
                f"embedding width {mat.shape[-1] if mat.ndim else '?'} does not match "
                f"network input width {self.input_dim}"
            )
        return self.mlp.forward(mat)[:, 0]

    def copy(self) -> "WeightNet":
        dup = object.__new__(WeightNet)
        dup.mlp = self.mlp.copy()
        return dup

    def to_dict(self) -> dict:
        return self.mlp.to_dict()

    @classmethod
    def from_dict(cls, payload: dict) -> "WeightNet":
        net = object.__new__(cls)
        net.mlp = MLP.from_dict(payload)
        if net.mlp.widths[-1] != 1:
            raise ValidationError("weight network must have scalar output")
        return net


@dataclass
class ReprTrainConfig:
    epsilon: float = 0.9
    tau: float = 0.95
    lr: float = 2e-4
    epochs_init: int = 500
    epochs_margin: int = 500
    pair_batch: int = 256
    seed: int = 0
    optimizer: str = "adam"
    include_count_factor: bool = True

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not 0.0 < self.tau < 1.0:
            raise ValidationError(f"tau must be in (0, 1), got {self.tau}")
        if self.lr <= 0:
            raise ValidationError(f"step size must be positive, got {self.lr}")
        if self.epochs_init < 0 or self.epochs_margin < 0:
            raise ValidationError("epoch counts must be non-negative")
        if self.pair_batch < 1:
            raise ValidationError(f"pair batch size must be >= 1, got {self.pair_batch}")


# ---------------------------------------------------------------------------
# Core math
# ---------------------------------------------------------------------------

def softmax(scores: np.ndarray) -> np.ndarray:
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0 at a zero vector (with a degeneracy warning)."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine of a zero vector is defined as 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def cosine_with_grads(u: np.ndarray, v: np.ndarray
                      ) -> tuple[float, np.ndarray, np.ndarray]:
    """cos(u, v) and its gradients w.r.t. u and v (zero at degenerate inputs)."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine of a zero vector is defined as 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0, np.zeros_like(u), np.zeros_like(v)
    c = float(np.dot(u, v) / (nu * nv))
    du = v / (nu * nv) - c * u / (nu * nu)
    dv = u / (nu * nv) - c * v / (nv * nv)
    return c, du, dv


def class_matrices(corpus: Corpus, filtered: dict[str, FilteredDocument]
                   ) -> dict[str, np.ndarray]:
    """Kept-sentence embedding matrix per class, rows in kept order."""
    by_id = corpus.sentences_by_id()
    out: dict[str, np.ndarray] = {}
    for class_id in sorted(filtered):
        ids = filtered[class_id].sentence_ids()
        if not ids:
            raise ValidationError(f"no kept sentences for class {class_id!r}")
        out[class_id] = np.stack([by_id[sid].embedding for sid in ids])
    return out


class WeightedClassForward:
    """One class's weighted vector with everything needed for the backward pass."""

    __slots__ = ("matrix", "activations", "lam", "factor", "vector")

    def __init__(self, net: WeightNet, matrix: np.ndarray, include_count_factor: bool):
        scores, self.activations = net.mlp.forward_cache(matrix)
        self.matrix = matrix
        self.lam = softmax(scores[:, 0])
        self.factor = 1.0 / matrix.shape[0] if include_count_factor else 1.0
        self.vector = self.factor * (self.lam @ matrix)

    def backward(self, net: WeightNet, dvector: np.ndarray,
                 grads: list[np.ndarray]) -> None:
        """Accumulate d(loss)/d(psi) into `grads` given d(loss)/d(vector)."""
        g = self.factor * (self.matrix @ dvector)        # d loss / d lambda_j
        dz = self.lam * (g - float(self.lam @ g))        # softmax jacobian
        _, net_grads = net.mlp.backward(self.activations, dz[:, None])
        for acc, part in zip(grads, net_grads):
            acc += part


# ---------------------------------------------------------------------------
# Representation builders
# ---------------------------------------------------------------------------

def average_repr(filtered_doc: FilteredDocument, corpus: Corpus) -> Representation:
    """Plain mean of the kept sentences' embeddings."""
    ids = filtered_doc.sentence_ids()
    if not ids:
        raise ValidationError(f"no kept sentences for class {filtered_doc.class_id!r}")
    by_id = corpus.sentences_by_id()
    matrix = np.stack([by_id[sid].embedding for sid in ids])
    return Representation(filtered_doc.class_id, matrix.mean(axis=0), "average")


def lambda_weights(net: WeightNet, filtered_doc: FilteredDocument,
                   corpus: Corpus) -> dict[str, float]:
    """Per-sentence softmax weights within one class's kept set."""
    ids = filtered_doc.sentence_ids()
    if not ids:
        raise ValidationError(f"no kept sentences for class {filtered_doc.class_id!r}")
    by_id = corpus.sentences_by_id()
    matrix = np.stack([by_id[sid].embedding for sid in ids])
    lam = softmax(net.scores(matrix))
    return {sid: float(w) for sid, w in zip(ids, lam)}


def weighted_repr(net: WeightNet, filtered_doc: FilteredDocument, corpus: Corpus,
                  include_count_factor: bool = True) -> Representation:
    """Softmax-weighted combination of kept sentences (leading 1/m kept by default)."""
    ids = filtered_doc.sentence_ids()
    if not ids:
        raise ValidationError(f"no kept sentences for class {filtered_doc.class_id!r}")
    by_id = corpus.sentences_by_id()
    matrix = np.stack([by_id[sid].embedding for sid in ids])
    fwd = WeightedClassForward(net, matrix, include_count_factor)
    return Representation(filtered_doc.class_id, fwd.vector, "weighted")


def build_representations(corpus: Corpus, filtered: dict[str, FilteredDocument],
                          kind: str, net: WeightNet | None = None,
                          include_count_factor: bool = True
                          ) -> dict[str, Representation]:
    """All per-class representations of one kind.

    `weighted_direct` uses the same computation as `weighted`; its network is
    trained jointly with the ranking loss instead of the two-phase objectives.
    """
    if kind == "average":
        return {c: average_repr(filtered[c], corpus) for c in sorted(filtered)}
    if kind in ("weighted", "weighted_direct"):
        if net is None:
            raise ValidationError("weight network required")
        return {c: weighted_repr(net, filtered[c], corpus, include_count_factor)
                for c in sorted(filtered)}
    raise ValidationError(f"unknown representation kind {kind!r}")


# ---------------------------------------------------------------------------
# Training phases
# ---------------------------------------------------------------------------

@dataclass
class ReprTrainLog:
    phase: str
    losses: list[float] = field(default_factory=list)
    stopped_at_zero: bool = False


def _init_loss_and_grads(net: WeightNet, matrices: dict[str, np.ndarray],
                         means: dict[str, np.ndarray], epsilon: float,
                         include_count_factor: bool,
                         want_grads: bool = True
                         ) -> tuple[float, list[np.ndarray] | None]:
    loss = 0.0
    grads = net.mlp.zero_like_grads() if want_grads else None
    for class_id, matrix in matrices.items():
        fwd = WeightedClassForward(net, matrix, include_count_factor)
        c, dcos_da, _ = cosine_with_grads(fwd.vector, means[class_id])
        if c < epsilon:
            loss += epsilon - c
            if want_grads:
                fwd.backward(net, -dcos_da, grads)
    return loss, grads


def train_weightnet_init(net: WeightNet, corpus: Corpus,
                         filtered: dict[str, FilteredDocument],
                         config: ReprTrainConfig
                         ) -> tuple[WeightNet, ReprTrainLog]:
    """Phase one: pull each weighted vector toward its class mean.

    Full-batch descent on the hinge sum; stops early once the loss hits zero
    (every class already satisfies the epsilon constraint, so every gradient
    is exactly zero from then on).
    """
    matrices = class_matrices(corpus, filtered)
    means = {c: m.mean(axis=0) for c, m in matrices.items()}
    opt = make_optimizer(config.optimizer, config.lr)
    log = ReprTrainLog(phase="init")
    for _ in range(config.epochs_init):
        loss, grads = _init_loss_and_grads(net, matrices, means, config.epsilon,
                                           config.include_count_factor)
        if not np.isfinite(loss):
            raise ValidationError(f"non-finite init-phase loss: {loss}")
        log.losses.append(loss)
        if loss == 0.0:
            log.stopped_at_zero = True
            break
        opt.step(net.mlp.params, grads)
    return net, log


def _margin_loss_and_grads(net: WeightNet, matrices: dict[str, np.ndarray],
                           pairs: list[tuple[str, str]], tau: float,
                           include_count_factor: bool,
                           want_grads: bool = True
                           ) -> tuple[float, list[np.ndarray] | None]:
    forwards = {c: WeightedClassForward(net, matrices[c], include_count_factor)
                for c in {c for pair in pairs for c in pair}}
    loss = 0.0
    grads = net.mlp.zero_like_grads() if want_grads else None
    dvecs: dict[str, np.ndarray] = {}
    for left, right in pairs:
        c, du, dv = cosine_with_grads(forwards[left].vector, forwards[right].vector)
        if c > tau:
            loss += c - tau
            if want_grads:
                dvecs[left] = dvecs.get(left, 0.0) + du
                dvecs[right] = dvecs.get(right, 0.0) + dv
    if want_grads:
        for class_id, dvec in dvecs.items():
            forwards[class_id].backward(net, dvec, grads)
    return loss, grads


def all_pairs(class_ids: list[str]) -> list[tuple[str, str]]:
    """Unordered class pairs in a deterministic order."""
    ordered = sorted(class_ids)
    return [(a, b) for i, a in enumerate(ordered) for b in ordered[i + 1:]]


def train_weightnet_margin(net: WeightNet, corpus: Corpus,
                           filtered: dict[str, FilteredDocument],
                           config: ReprTrainConfig
                           ) -> tuple[WeightNet, ReprTrainLog]:
    """Phase two: push over-similar class pairs below the tau threshold.

    Pairs whose cosine is already <= tau contribute nothing — neither loss
    nor gradient — so well-separated classes are untouched. Runs full-batch
    when the pair count fits in `pair_batch`, otherwise samples a seeded
    pair batch per step. Stops early on a zero full-batch loss.
    """
    matrices = class_matrices(corpus, filtered)
    pairs = all_pairs(list(matrices))
    if not pairs:
        return net, ReprTrainLog(phase="margin", stopped_at_zero=True)
    opt = make_optimizer(config.optimizer, config.lr)
    rng = np.random.default_rng(config.seed)
    log = ReprTrainLog(phase="margin")
    full_batch = len(pairs) <= config.pair_batch
    for _ in range(config.epochs_margin):
        if full_batch:
            batch = pairs
        else:
            idx = rng.choice(len(pairs), size=config.pair_batch, replace=False)
            batch = [pairs[i] for i in sorted(idx)]
        loss, grads = _margin_loss_and_grads(net, matrices, batch, config.tau,
                                             config.include_count_factor)
        if not np.isfinite(loss):
            raise ValidationError(f"non-finite margin-phase loss: {loss}")
        log.losses.append(loss)
        if full_batch and loss == 0.0:
            log.stopped_at_zero = True
            break
        if loss > 0.0:
            opt.step(net.mlp.params, grads)
    return net, log


def train_weightnet(corpus: Corpus, filtered: dict[str, FilteredDocument],
                    config: ReprTrainConfig,
                    hidden: tuple[int, ...] = DEFAULT_HIDDEN
                    ) -> tuple[WeightNet, list[ReprTrainLog]]:
    """Both phases in sequence on a freshly initialized network."""
    dims = {m.shape[1] for m in class_matrices(corpus, filtered).values()}
    net = WeightNet(dims.pop(), hidden=hidden,
                    rng=np.random.default_rng(config.seed))
    net, init_log = train_weightnet_init(net, corpus, filtered, config)
    net, margin_log = train_weightnet_margin(net, corpus, filtered, config)
    return net, [init_log, margin_log]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_representations(reprs: dict[str, Representation],
                         path: str | os.PathLike) -> None:
    def rows():
        for class_id in sorted(reprs):
            rep = reprs[class_id]
            yield {"class_id": rep.class_id, "kind": rep.kind,
                   "vector": [float(x) for x in rep.vector]}

    write_jsonl(path, rows())


def load_representations(path: str | os.PathLike) -> dict[str, Representation]:
    out: dict[str, Representation] = {}
    dim: int | None = None
    for lineno, row in iter_jsonl(path):
        try:
            class_id = row["class_id"]
            kind = row.get("kind", "external")
            vec = np.asarray(row["vector"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad representation record at line {lineno}: {exc}")
        if class_id in out:
            raise ValidationError(f"duplicate class_id {class_id!r} at line {lineno}")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise ValidationError(
                f"dimension mismatch at line {lineno}: expected {dim}, got {vec.shape[0]}"
            )
        out[class_id] = Representation(class_id, vec, kind)
    if not out:
        raise ValidationError(f"no representations in {path}")
    return out


def ingest_external_representations(path: str | os.PathLike
                                    ) -> dict[str, Representation]:
    """Load vectors produced outside this toolkit; tagged kind=external."""
    loaded = load_representations(path)
    return {c: Representation(r.class_id, r.vector, "external")
            for c, r in loaded.items()}


def save_weightnet(net: WeightNet, path: str | os.PathLike) -> None:
    from .fileio import atomic_write_json

    atomic_write_json(path, net.to_dict())


def load_weightnet(path: str | os.PathLike) -> WeightNet:
    from .fileio import read_json

    return WeightNet.from_dict(read_json(path))
