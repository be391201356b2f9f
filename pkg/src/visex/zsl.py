"""Margin-ranking alignment between image features and class representations.

A bilinear scorer s(x, a) = f(x)^T M g(a), where f and g are either identity
maps (plain variant) or two-hidden-layer MLPs (starred variant). Training
minimizes the hinge ranking loss

    sum_n sum_{c != y_n} max{0, margin - s(x_n, a_{y_n}) + s(x_n, a_c)}

over seen-class images; prediction takes the candidate with the highest
score, breaking exact ties toward the lexicographically smallest class_id.
A joint mode treats the class vectors as functions of the sentence-weighting
network and optimizes that network under this same loss. All gradients are
hand-derived and finite-difference-checked in the test suite.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import ClassSplit, ImageRecord
from .errors import ValidationError
from .fileio import atomic_write_json, read_json
from .mlp import MLP, make_optimizer
from .representations import Representation, WeightedClassForward, WeightNet

logger = logging.getLogger(__name__)


class DeviseModel:
    """f, g, and the bilinear matrix M; f/g may be None (identity)."""

    def __init__(self, f: MLP | None, g: MLP | None, M: np.ndarray,
                 margin: float = 0.2):
        if margin < 0:
            raise ValidationError(f"margin must be non-negative, got {margin}")
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2:
            raise ValidationError("M must be a matrix")
        if f is not None and f.widths[-1] != M.shape[0]:
            raise ValidationError(
                f"f output width {f.widths[-1]} does not match M rows {M.shape[0]}"
            )
        if g is not None and g.widths[-1] != M.shape[1]:
            raise ValidationError(
                f"g output width {g.widths[-1]} does not match M columns {M.shape[1]}"
            )
        self.f = f
        self.g = g
        self.M = M
        self.margin = float(margin)

    @classmethod
    def create(cls, d_v: int, d: int, star: bool = True, margin: float = 0.2,
               latent: int | None = None, hidden: int | None = None,
               rng: np.random.Generator | int | None = None) -> "DeviseModel":
        """Fresh model; star=True builds two-hidden-layer f and g, star=False identity."""
        if d_v <= 0 or d <= 0:
            raise ValidationError("feature dimensions must be positive")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        if star:
            k = latent if latent is not None else min(512, d_v)
            h = hidden if hidden is not None else k
            f = MLP((d_v, h, h, k), rng=rng)
            g = MLP((d, h, h, k), rng=rng)
            M = rng.standard_normal((k, k)) / np.sqrt(k)
        else:
            f = None
            g = None
            M = rng.standard_normal((d_v, d)) / np.sqrt(d_v)
        return cls(f, g, M, margin=margin)

    @property
    def input_dim_images(self) -> int:
        return self.f.widths[0] if self.f is not None else self.M.shape[0]

    @property
    def input_dim_repr(self) -> int:
        return self.g.widths[0] if self.g is not None else self.M.shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        if self.f is not None:
            out.extend(self.f.params)
        if self.g is not None:
            out.extend(self.g.params)
        out.append(self.M)
        return out

    def pack(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def unpack(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for p in self.params:
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != flat.size:
            raise ValidationError(f"parameter vector length {flat.size}, expected {offset}")

    def copy(self) -> "DeviseModel":
        return DeviseModel(
            self.f.copy() if self.f is not None else None,
            self.g.copy() if self.g is not None else None,
            self.M.copy(), margin=self.margin,
        )

    def to_dict(self) -> dict:
        return {
            "f": self.f.to_dict() if self.f is not None else None,
            "g": self.g.to_dict() if self.g is not None else None,
            "M": {"shape": list(self.M.shape),
                  "values": [float(x) for x in self.M.ravel()]},
            "margin": self.margin,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DeviseModel":
        f = MLP.from_dict(payload["f"]) if payload.get("f") else None
        g = MLP.from_dict(payload["g"]) if payload.get("g") else None
        m_raw = payload["M"]
        M = np.asarray(m_raw["values"], dtype=np.float64).reshape(m_raw["shape"])
        return cls(f, g, M, margin=payload.get("margin", 0.2))


@dataclass
class ZslTrainConfig:
    margin: float = 0.2
    lr: float = 2e-4
    epochs: int = 100
    batch_size: int = 64
    negatives: int | str = "all"
    seed: int = 0
    optimizer: str = "adam"
    joint: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError(f"step size must be positive, got {self.lr}")
        if self.margin < 0:
            raise ValidationError(f"margin must be non-negative, got {self.margin}")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        if isinstance(self.negatives, str):
            if self.negatives != "all":
                raise ValidationError(
                    f"negatives must be a positive integer or 'all', got {self.negatives!r}"
                )
        elif self.negatives < 1:
            raise ValidationError("negatives must be >= 1")


@dataclass
class ZslTrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    final_loss: float = float("nan")
    seed: int = 0
    joint: bool = False


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def _check_image_dim(model: DeviseModel, X: np.ndarray) -> None:
    if X.shape[-1] != model.input_dim_images:
        raise ValidationError(
            f"image feature width {X.shape[-1]} does not match model input "
            f"{model.input_dim_images}"
        )


def _check_repr_dim(model: DeviseModel, A: np.ndarray) -> None:
    if A.shape[-1] != model.input_dim_repr:
        raise ValidationError(
            f"representation width {A.shape[-1]} does not match model input "
            f"{model.input_dim_repr}"
        )


def score(model: DeviseModel, x: np.ndarray, a: Representation | np.ndarray) -> float:
    """Bilinear alignment score for one image and one class vector."""
    x = np.asarray(x, dtype=np.float64)
    vec = a.vector if isinstance(a, Representation) else np.asarray(a, dtype=np.float64)
    _check_image_dim(model, x)
    _check_repr_dim(model, vec)
    fx = model.f.forward(x[None, :])[0] if model.f is not None else x
    ga = model.g.forward(vec[None, :])[0] if model.g is not None else vec
    return float(fx @ model.M @ ga)


def score_matrix(model: DeviseModel, X: np.ndarray, A: np.ndarray) -> np.ndarray:
    """(n_images, n_classes) score table."""
    _check_image_dim(model, X)
    _check_repr_dim(model, A)
    F = model.f.forward(X) if model.f is not None else X
    G = model.g.forward(A) if model.g is not None else A
    return F @ model.M @ G.T


# ---------------------------------------------------------------------------
# Loss and gradients
# ---------------------------------------------------------------------------

def _hinge_terms(S: np.ndarray, y_idx: np.ndarray, margin: float,
                 neg_mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and dL/dS for the ranking hinge with the given negative mask."""
    rows = np.arange(S.shape[0])
    true_scores = S[rows, y_idx][:, None]
    slack = margin - true_scores + S
    slack[rows, y_idx] = 0.0
    active = (slack > 0.0) & neg_mask
    loss = float(slack[active].sum())
    dS = np.zeros_like(S)
    dS[active] = 1.0
    dS[rows, y_idx] -= active.sum(axis=1)
    return loss, dS


def _negative_mask(n: int, n_classes: int, y_idx: np.ndarray,
                   negatives: int | str, rng: np.random.Generator) -> np.ndarray:
    mask = np.ones((n, n_classes), dtype=bool)
    rows = np.arange(n)
    mask[rows, y_idx] = False
    if negatives == "all" or negatives >= n_classes - 1:
        return mask
    sampled = np.zeros_like(mask)
    for i in range(n):
        pool = np.flatnonzero(mask[i])
        pick = rng.choice(pool, size=negatives, replace=False)
        sampled[i, pick] = True
    return sampled


def devise_loss(model: DeviseModel, batch: list[tuple[np.ndarray, str]],
                representations: dict[str, Representation],
                negatives: int | str = "all",
                rng: np.random.Generator | None = None) -> float:
    """Hinge ranking loss over a batch of (features, label) pairs."""
    if not batch:
        raise ValidationError("empty batch")
    missing = sorted({y for _, y in batch if y not in representations})
    if missing:
        raise ValidationError(f"missing representation for label(s): {', '.join(missing)}")
    class_ids = sorted(representations)
    index = {c: i for i, c in enumerate(class_ids)}
    X = np.stack([np.asarray(x, dtype=np.float64) for x, _ in batch])
    A = np.stack([representations[c].vector for c in class_ids])
    y_idx = np.asarray([index[y] for _, y in batch])
    S = score_matrix(model, X, A)
    if rng is None:
        rng = np.random.default_rng(0)
    neg_mask = _negative_mask(len(batch), len(class_ids), y_idx, negatives, rng)
    loss, _ = _hinge_terms(S, y_idx, model.margin, neg_mask)
    return loss


class _BatchGrads:
    """Gradients of the batch loss for every parameter group."""

    def __init__(self, model: DeviseModel, loss: float,
                 f_grads: list[np.ndarray] | None, g_grads: list[np.ndarray] | None,
                 dM: np.ndarray, dA: np.ndarray):
        self.loss = loss
        self.dA = dA  # (n_classes, d) — flows into the weight net in joint mode
        self.flat: list[np.ndarray] = []
        if model.f is not None:
            self.flat.extend(f_grads)
        if model.g is not None:
            self.flat.extend(g_grads)
        self.flat.append(dM)


def _loss_and_grads(model: DeviseModel, X: np.ndarray, y_idx: np.ndarray,
                    A: np.ndarray, neg_mask: np.ndarray) -> _BatchGrads:
    if model.f is not None:
        F, f_acts = model.f.forward_cache(X)
    else:
        F, f_acts = X, None
    if model.g is not None:
        G, g_acts = model.g.forward_cache(A)
    else:
        G, g_acts = A, None

    S = F @ model.M @ G.T
    loss, dS = _hinge_terms(S, y_idx, model.margin, neg_mask)

    dF = dS @ G @ model.M.T
    dM = F.T @ dS @ G
    dG = dS.T @ F @ model.M

    f_grads = g_grads = None
    if model.f is not None:
        _, f_grads = model.f.backward(f_acts, dF)
    if model.g is not None:
        dA, g_grads = model.g.backward(g_acts, dG)
    else:
        dA = dG
    return _BatchGrads(model, loss, f_grads, g_grads, dM, dA)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _train_arrays(images: list[ImageRecord], split: ClassSplit
                  ) -> tuple[np.ndarray, list[str]]:
    if not images:
        raise ValidationError("empty seen-class training set")
    unseen_used = sorted({im.class_id for im in images} & set(split.unseen))
    if unseen_used:
        raise ValidationError(
            f"training images include unseen class(es): {', '.join(unseen_used)}"
        )
    unknown = sorted({im.class_id for im in images} - set(split.seen))
    if unknown:
        raise ValidationError(
            f"training images include class(es) outside the split: {', '.join(unknown)}"
        )
    X = np.stack([im.features for im in images])
    labels = [im.class_id for im in images]
    return X, labels


def train_devise(model: DeviseModel, images: list[ImageRecord],
                 representations: dict[str, Representation] | None,
                 split: ClassSplit, config: ZslTrainConfig,
                 joint_net: WeightNet | None = None,
                 class_matrices: dict[str, np.ndarray] | None = None,
                 include_count_factor: bool = True
                 ) -> tuple[DeviseModel, ZslTrainLog]:
    """Seeded mini-batch optimization of the ranking loss over seen classes.

    Standard mode scores fixed class vectors from `representations`. Joint
    mode (config.joint) recomputes each class vector from `joint_net` every
    step and propagates the loss gradient through the softmax weighting into
    the net's parameters; it needs `class_matrices` (kept-sentence embeddings
    per class) instead of fixed representations.
    """
    X_all, labels = _train_arrays(images, split)
    model.margin = config.margin

    if config.joint:
        if joint_net is None or class_matrices is None:
            raise ValidationError("joint mode requires a weight network and "
                                  "per-class sentence matrices")
        class_ids = sorted(class_matrices)
    else:
        if representations is None:
            raise ValidationError("representations required")
        missing = sorted(set(labels) - set(representations))
        if missing:
            raise ValidationError(
                f"missing representation for label(s): {', '.join(missing)}"
            )
        class_ids = sorted(representations)
        A_fixed = np.stack([representations[c].vector for c in class_ids])

    index = {c: i for i, c in enumerate(class_ids)}
    missing_train = sorted(set(labels) - set(class_ids))
    if missing_train:
        raise ValidationError(
            f"missing representation for label(s): {', '.join(missing_train)}"
        )
    y_all = np.asarray([index[c] for c in labels])

    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config.optimizer, config.lr)
    joint_opt = make_optimizer(config.optimizer, config.lr) if config.joint else None
    log = ZslTrainLog(seed=config.seed, joint=config.joint)
    n = X_all.shape[0]

    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            take = order[start:start + config.batch_size]
            X, y_idx = X_all[take], y_all[take]

            if config.joint:
                forwards = {c: WeightedClassForward(joint_net, class_matrices[c],
                                                    include_count_factor)
                            for c in class_ids}
                A = np.stack([forwards[c].vector for c in class_ids])
            else:
                A = A_fixed

            neg_mask = _negative_mask(len(take), len(class_ids), y_idx,
                                      config.negatives, rng)
            grads = _loss_and_grads(model, X, y_idx, A, neg_mask)
            if not np.isfinite(grads.loss):
                raise ValidationError(f"non-finite training loss: {grads.loss}")
            epoch_loss += grads.loss
            if grads.loss > 0.0:
                opt.step(model.params, grads.flat)
                if config.joint:
                    psi_grads = joint_net.mlp.zero_like_grads()
                    for i, c in enumerate(class_ids):
                        if np.any(grads.dA[i]):
                            forwards[c].backward(joint_net, grads.dA[i], psi_grads)
                    joint_opt.step(joint_net.mlp.params, psi_grads)
        log.epoch_losses.append(epoch_loss / n)
        if log.epoch_losses[-1] == 0.0:
            break
    log.final_loss = log.epoch_losses[-1] if log.epoch_losses else 0.0
    return model, log


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict(model: DeviseModel, x: np.ndarray, candidates: list[str] | set[str],
            representations: dict[str, Representation]) -> str:
    """Highest-scoring candidate; exact ties go to the smallest class_id."""
    ordered = sorted(candidates)
    if not ordered:
        raise ValidationError("empty candidate set")
    missing = [c for c in ordered if c not in representations]
    if missing:
        raise ValidationError(f"missing representation for label(s): {', '.join(missing)}")
    X = np.asarray(x, dtype=np.float64)[None, :]
    A = np.stack([representations[c].vector for c in ordered])
    scores = score_matrix(model, X, A)[0]
    return ordered[int(np.argmax(scores))]


def predict_batch(model: DeviseModel, X: np.ndarray,
                  candidates: list[str] | set[str],
                  representations: dict[str, Representation]) -> list[str]:
    ordered = sorted(candidates)
    if not ordered:
        raise ValidationError("empty candidate set")
    missing = [c for c in ordered if c not in representations]
    if missing:
        raise ValidationError(f"missing representation for label(s): {', '.join(missing)}")
    A = np.stack([representations[c].vector for c in ordered])
    S = score_matrix(model, np.asarray(X, dtype=np.float64), A)
    return [ordered[int(i)] for i in np.argmax(S, axis=1)]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_model(model: DeviseModel, path: str | os.PathLike,
               config: ZslTrainConfig | None = None) -> None:
    payload = model.to_dict()
    if config is not None:
        payload["config"] = {
            "margin": config.margin, "lr": config.lr, "epochs": config.epochs,
            "batch_size": config.batch_size, "negatives": config.negatives,
            "seed": config.seed, "optimizer": config.optimizer,
            "joint": config.joint,
        }
    atomic_write_json(path, payload)


def load_model(path: str | os.PathLike) -> DeviseModel:
    return DeviseModel.from_dict(read_json(path))
