"""Incremental four-class learners with calibrated confidence.

Two families share one interface (`predict`, `predict_batch`, `update`):

* linear heads, one per class (one-vs-rest), trained either by a logistic
  SGD step on z = w.x + b or by the classic mistake-driven perceptron rule;
* naive Bayes with multinomial, Bernoulli, or Gaussian likelihoods kept as
  incrementally updated sufficient statistics.

Updates never mutate: they return a new model, so a prediction snapshot can
be shared freely while the coordinator swaps in retrained replacements.
`interpolate` blends old and updated parameters with a retention fraction so
continual updates adapt without erasing what the model already knows.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from netcascade.capture import TrafficClass
from netcascade.features import FEATURE_NAMES, ScalerParams, WindowConfig

CLASSES: tuple[TrafficClass, ...] = (
    TrafficClass.IOT_BENIGN,
    TrafficClass.IOT_MALICIOUS,
    TrafficClass.TRAD_BENIGN,
    TrafficClass.TRAD_MALICIOUS,
)
N_CLASSES = len(CLASSES)
_CLASS_INDEX = {cls: i for i, cls in enumerate(CLASSES)}

LAPLACE_ALPHA = 1.0
VARIANCE_FLOOR = 1e-9


@dataclass(frozen=True)
class Prediction:
    """A label plus its confidence: the max of the per-class probabilities."""

    label: TrafficClass
    confidence: float
    per_class: tuple[float, float, float, float]


class OnlineModel(Protocol):
    """What the cascade needs from a model."""

    def predict(self, x: np.ndarray) -> Prediction: ...

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def update(self, x: np.ndarray, y: TrafficClass) -> "OnlineModel": ...


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _prediction_from_probs(probs: np.ndarray) -> Prediction:
    idx = int(np.argmax(probs))  # argmax takes the smallest index on ties
    return Prediction(
        label=CLASSES[idx],
        confidence=float(probs[idx]),
        per_class=tuple(float(p) for p in probs),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LinearModel:
    """One-vs-rest linear classifier: 4 weight rows and biases over D features.

    kind "logistic": probabilities are softmax(z / temperature); one update is
    a single SGD step on the per-head binary log loss, whose gradient is
    (sigma(z_c) - t_c) * x.

    kind "perceptron": decision is argmax z_c with z >= 0 the positive side of
    each head; probabilities are softmax of the margins (a calibration choice,
    the rule itself has none).  An update touches only heads whose sign is
    wrong: W[c] +- x, b[c] +- 1.

    `temperature` rescales scores before the softmax and only affects reported
    confidence, never the training step or the argmax.
    """

    kind: str
    weights: np.ndarray
    bias: np.ndarray
    learning_rate: float = 0.01
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("logistic", "perceptron"):
            raise ValueError(f"unknown linear model kind {self.kind!r}")
        if self.weights.shape != (N_CLASSES, self.weights.shape[1]) or self.bias.shape != (N_CLASSES,):
            raise ValueError("weights must be (4, D) and bias (4,)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def zeros(cls, dim: int, kind: str = "logistic", learning_rate: float = 0.01) -> "LinearModel":
        return cls(
            kind=kind,
            weights=np.zeros((N_CLASSES, dim)),
            bias=np.zeros(N_CLASSES),
            learning_rate=learning_rate,
        )

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def _scores(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights.T + self.bias

    def predict(self, x: np.ndarray) -> Prediction:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a {self.dim}-vector, got shape {x.shape}")
        probs = _softmax(self._scores(x) / self.temperature)
        return _prediction_from_probs(probs)

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Labels (class indices) and confidences for each row of X."""
        probs = _softmax(self._scores(np.asarray(X, dtype=float)) / self.temperature)
        return probs.argmax(axis=1), probs.max(axis=1)

    def update(self, x: np.ndarray, y: TrafficClass) -> "LinearModel":
        x = np.asarray(x, dtype=float)
        targets = np.zeros(N_CLASSES)
        targets[_CLASS_INDEX[y]] = 1.0
        z = self._scores(x)
        if self.kind == "logistic":
            grad = _sigmoid(z) - targets
            new_w = self.weights - self.learning_rate * np.outer(grad, x)
            new_b = self.bias - self.learning_rate * grad
        else:
            signs = np.where(targets > 0, 1.0, -1.0)
            predicted = np.where(z >= 0, 1.0, -1.0)
            wrong = predicted != signs
            step = signs * wrong
            new_w = self.weights + step[:, None] * x[None, :]
            new_b = self.bias + step
        return replace(self, weights=new_w, bias=new_b)


@dataclass(frozen=True)
class BayesModel:
    """Naive Bayes over the four classes, stored as sufficient statistics.

    multinomial: per-class feature totals; likelihoods are Laplace-smoothed
    theta = (F + 1) / (sum F + D) and scores are log-prior + x . log theta.

    bernoulli: per-class on-counts of x > 0; smoothed P(x_d=1 | c) =
    (on + 1) / (N_c + 2).

    gaussian: per-class running mean and M2 (Welford), so the streamed
    variance matches a batch pass; the density is the normal likelihood with
    the variance floored at `var_floor`.

    A model with no training samples predicts the uniform distribution, which
    guarantees escalation past any threshold above 1/4.
    """

    kind: str
    class_counts: np.ndarray
    totals: np.ndarray | None = None
    means: np.ndarray | None = None
    m2: np.ndarray | None = None
    alpha: float = LAPLACE_ALPHA
    var_floor: float = VARIANCE_FLOOR
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("multinomial", "bernoulli", "gaussian"):
            raise ValueError(f"unknown Bayes model kind {self.kind!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def create(cls, dim: int, kind: str) -> "BayesModel":
        counts = np.zeros(N_CLASSES)
        if kind == "gaussian":
            return cls(kind=kind, class_counts=counts, means=np.zeros((N_CLASSES, dim)), m2=np.zeros((N_CLASSES, dim)))
        return cls(kind=kind, class_counts=counts, totals=np.zeros((N_CLASSES, dim)))

    @property
    def dim(self) -> int:
        arr = self.totals if self.totals is not None else self.means
        assert arr is not None
        return arr.shape[1]

    def _log_scores(self, X: np.ndarray) -> np.ndarray:
        total = self.class_counts.sum()
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.class_counts / total)
        if self.kind == "multinomial":
            if np.any(X < 0):
                raise ValueError("multinomial features must be non-negative")
            assert self.totals is not None
            smoothed = self.totals + self.alpha
            theta = smoothed / smoothed.sum(axis=1, keepdims=True)
            return log_prior + X @ np.log(theta).T
        if self.kind == "bernoulli":
            assert self.totals is not None
            on = (X > 0).astype(float)
            p = (self.totals + self.alpha) / (self.class_counts[:, None] + 2 * self.alpha)
            return log_prior + on @ np.log(p).T + (1 - on) @ np.log(1 - p).T
        assert self.means is not None and self.m2 is not None
        seen = np.maximum(self.class_counts, 1.0)
        var = np.maximum(self.m2 / seen[:, None], self.var_floor)
        # log N(x; mu, var) summed over dimensions, per class.
        diff = X[:, None, :] - self.means[None, :, :]
        log_density = -0.5 * (np.log(2 * np.pi * var)[None, :, :] + diff**2 / var[None, :, :])
        return log_prior + log_density.sum(axis=2)

    def _probs(self, X: np.ndarray) -> np.ndarray:
        if self.class_counts.sum() == 0:
            return np.full((X.shape[0], N_CLASSES), 1.0 / N_CLASSES)
        scores = self._log_scores(X) / self.temperature
        finite_max = np.max(np.where(np.isfinite(scores), scores, -np.inf), axis=1, keepdims=True)
        exp = np.exp(scores - finite_max)
        exp[~np.isfinite(exp)] = 0.0
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, x: np.ndarray) -> Prediction:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a {self.dim}-vector, got shape {x.shape}")
        return _prediction_from_probs(self._probs(x[None, :])[0])

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        probs = self._probs(np.asarray(X, dtype=float))
        return probs.argmax(axis=1), probs.max(axis=1)

    def update(self, x: np.ndarray, y: TrafficClass) -> "BayesModel":
        x = np.asarray(x, dtype=float)
        c = _CLASS_INDEX[y]
        counts = self.class_counts.copy()
        counts[c] += 1.0
        if self.kind == "multinomial":
            if np.any(x < 0):
                raise ValueError("multinomial features must be non-negative")
            assert self.totals is not None
            totals = self.totals.copy()
            totals[c] += x
            return replace(self, class_counts=counts, totals=totals)
        if self.kind == "bernoulli":
            assert self.totals is not None
            totals = self.totals.copy()
            totals[c] += (x > 0).astype(float)
            return replace(self, class_counts=counts, totals=totals)
        assert self.means is not None and self.m2 is not None
        means = self.means.copy()
        m2 = self.m2.copy()
        delta = x - means[c]
        means[c] += delta / counts[c]
        m2[c] += delta * (x - means[c])
        return replace(self, class_counts=counts, means=means, m2=m2)


Model = LinearModel | BayesModel


def interpolate(old: Model, updated: Model, alpha: float) -> Model:
    """Blend parameters: new = alpha * old + (1 - alpha) * updated.

    `alpha` is the retention fraction of the OLD parameters: alpha = 1 keeps
    the old model unchanged (adaptation fully inhibited), alpha = 0 takes the
    update wholesale.  Applies uniformly to linear weights/biases and to
    Bayes sufficient-statistic arrays.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be within [0, 1]")
    if old is updated:
        return old  # fixed point, also the path mutable test doubles take
    if type(old) is not type(updated) or old.kind != updated.kind:
        raise ValueError("cannot interpolate models of different kinds")

    def blend(a: np.ndarray | None, b: np.ndarray | None) -> np.ndarray | None:
        if a is None or b is None:
            if a is not b:
                raise ValueError("model parameter layouts differ")
            return None
        if a.shape != b.shape:
            raise ValueError(f"parameter shapes differ: {a.shape} vs {b.shape}")
        if alpha == 1.0:
            return a.copy()
        if alpha == 0.0:
            return b.copy()
        return alpha * a + (1.0 - alpha) * b

    if isinstance(old, LinearModel):
        assert isinstance(updated, LinearModel)
        return replace(
            old,
            weights=blend(old.weights, updated.weights),
            bias=blend(old.bias, updated.bias),
        )
    assert isinstance(updated, BayesModel)
    return replace(
        old,
        class_counts=blend(old.class_counts, updated.class_counts),
        totals=blend(old.totals, updated.totals),
        means=blend(old.means, updated.means),
        m2=blend(old.m2, updated.m2),
    )


# ---------------------------------------------------------------------------
# Core-sample selection
# ---------------------------------------------------------------------------

def _kmeans(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns per-sample distances
    to the nearest centroid."""
    n = X.shape[0]
    k = min(k, n)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    dist = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = dist.sum()
        if total <= 0:
            centers[j:] = X[rng.integers(n, size=k - j)]
            break
        centers[j] = X[rng.choice(n, p=dist / total)]
        dist = np.minimum(dist, ((X - centers[j]) ** 2).sum(axis=1))
    assign = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        for j in range(k):
            members = X[new_assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                centers[j] = X[int(d2.min(axis=1).argmax())]  # reseed empty cluster
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
    d2 = ((X - centers[assign]) ** 2).sum(axis=1)
    return np.sqrt(d2)


def kmeans_select(
    by_class: Mapping[TrafficClass, np.ndarray],
    per_class_n: int | Mapping[TrafficClass, int],
    k: int = 8,
    seed: int = 0,
    max_iter: int = 100,
) -> dict[TrafficClass, np.ndarray]:
    """Pick each class's most central samples.

    Features are z-scored per class, clustered with K-Means, and samples are
    ranked by distance to their nearest centroid; the `per_class_n` closest
    row indices are returned per class.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    selected: dict[TrafficClass, np.ndarray] = {}
    for cls in sorted(by_class, key=lambda c: _CLASS_INDEX[c]):
        X = np.asarray(by_class[cls], dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError(f"class {cls.value} has no samples")
        want = per_class_n if isinstance(per_class_n, int) else per_class_n[cls]
        if not 1 <= want <= X.shape[0]:
            raise ValueError(
                f"class {cls.value}: requested {want} of {X.shape[0]} samples"
            )
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        rng = np.random.default_rng(seed + _CLASS_INDEX[cls])
        distances = _kmeans((X - mean) / std, k, rng, max_iter)
        order = np.argsort(distances, kind="stable")
        selected[cls] = np.sort(order[:want])
    return selected


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    correct_predictions: int
    wrong_predictions: int
    error_rate: float
    confusion: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                cls.value: {"precision": p, "recall": r, "f1": f}
                for cls, p, r, f in zip(CLASSES, self.precision, self.recall, self.f1)
            },
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
            "correct_predictions": self.correct_predictions,
            "wrong_predictions": self.wrong_predictions,
            "error_rate": self.error_rate,
            "confusion": [list(row) for row in self.confusion],
        }

    def format_table(self) -> str:
        lines = [f"accuracy     {self.accuracy:.4f}"]
        for cls, p, r, f in zip(CLASSES, self.precision, self.recall, self.f1):
            lines.append(f"{cls.value:<15} pre {p:.4f}  rec {r:.4f}  f1 {f:.4f}")
        lines.append(
            f"macro           pre {self.macro_precision:.4f}  rec {self.macro_recall:.4f}  f1 {self.macro_f1:.4f}"
        )
        lines.append(
            f"CP {self.correct_predictions}  WP {self.wrong_predictions}  error rate {self.error_rate:.4f}"
        )
        return "\n".join(lines)


def metrics_from_counts(correct: int, wrong: int) -> float:
    """Error rate WP / (CP + WP); 0 when nothing was evaluated."""
    total = correct + wrong
    return wrong / total if total else 0.0


def evaluate(model: OnlineModel, X: np.ndarray, y: Sequence[TrafficClass]) -> EvalReport:
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("evaluation needs at least one sample")
    truth = np.array([_CLASS_INDEX[label] for label in y])
    predicted, _ = model.predict_batch(X)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    for t, p in zip(truth, predicted):
        confusion[t, p] += 1
    correct = int(np.trace(confusion))
    total = int(confusion.sum())
    precision = []
    recall = []
    f1 = []
    for c in range(N_CLASSES):
        col = confusion[:, c].sum()
        row = confusion[c, :].sum()
        p = confusion[c, c] / col if col else 0.0
        r = confusion[c, c] / row if row else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
    return EvalReport(
        accuracy=correct / total,
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        macro_precision=sum(precision) / N_CLASSES,
        macro_recall=sum(recall) / N_CLASSES,
        macro_f1=sum(f1) / N_CLASSES,
        correct_predictions=correct,
        wrong_predictions=total - correct,
        error_rate=metrics_from_counts(correct, total - correct),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

FORMAT_NAME = "netcascade-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelBundle:
    """A trained model plus everything needed to reproduce its inputs."""

    model: Model
    scaler: ScalerParams
    window: WindowConfig
    feature_names: tuple[str, ...] = FEATURE_NAMES

    @property
    def config_hash(self) -> str:
        payload = json.dumps(
            {"features": list(self.feature_names), "window": self.window.to_dict()},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _model_to_dict(model: Model) -> dict:
    if isinstance(model, LinearModel):
        return {
            "family": "linear",
            "kind": model.kind,
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
            "learning_rate": model.learning_rate,
            "temperature": model.temperature,
        }
    data = {
        "family": "bayes",
        "kind": model.kind,
        "class_counts": model.class_counts.tolist(),
        "alpha": model.alpha,
        "var_floor": model.var_floor,
        "temperature": model.temperature,
    }
    if model.totals is not None:
        data["totals"] = model.totals.tolist()
    if model.means is not None:
        data["means"] = model.means.tolist()
        data["m2"] = model.m2.tolist()
    return data


def _model_from_dict(data: Mapping) -> Model:
    if data["family"] == "linear":
        return LinearModel(
            kind=data["kind"],
            weights=np.asarray(data["weights"], dtype=float),
            bias=np.asarray(data["bias"], dtype=float),
            learning_rate=data["learning_rate"],
            temperature=data.get("temperature", 1.0),
        )
    if data["family"] == "bayes":
        return BayesModel(
            kind=data["kind"],
            class_counts=np.asarray(data["class_counts"], dtype=float),
            totals=np.asarray(data["totals"], dtype=float) if "totals" in data else None,
            means=np.asarray(data["means"], dtype=float) if "means" in data else None,
            m2=np.asarray(data["m2"], dtype=float) if "m2" in data else None,
            alpha=data["alpha"],
            var_floor=data["var_floor"],
            temperature=data.get("temperature", 1.0),
        )
    raise ValueError(f"unknown model family {data.get('family')!r}")


def save_bundle(path: str | Path, bundle: ModelBundle) -> None:
    document = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "classes": [cls.value for cls in CLASSES],
        "dim": bundle.model.dim,
        "model": _model_to_dict(bundle.model),
        "scaler": bundle.scaler.to_dict(),
        "window": bundle.window.to_dict(),
        "feature_names": list(bundle.feature_names),
        "config_hash": bundle.config_hash,
    }
    Path(path).write_text(json.dumps(document, indent=1, sort_keys=True), encoding="utf-8")


def load_bundle(path: str | Path, expected_dim: int | None = None) -> ModelBundle:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != FORMAT_NAME or data.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: not a version-{FORMAT_VERSION} {FORMAT_NAME} file")
    if data["classes"] != [cls.value for cls in CLASSES]:
        raise ValueError(f"{path}: class list mismatch")
    model = _model_from_dict(data["model"])
    if model.dim != data["dim"]:
        raise ValueError(f"{path}: declared dim {data['dim']} != stored dim {model.dim}")
    if expected_dim is not None and model.dim != expected_dim:
        raise ValueError(f"{path}: model dim {model.dim} does not match expected {expected_dim}")
    bundle = ModelBundle(
        model=model,
        scaler=ScalerParams.from_dict(data["scaler"]),
        window=WindowConfig.from_dict(data["window"]),
        feature_names=tuple(data["feature_names"]),
    )
    if len(bundle.feature_names) != model.dim:
        raise ValueError(f"{path}: {len(bundle.feature_names)} feature names for dim {model.dim}")
    if data.get("config_hash") != bundle.config_hash:
        raise ValueError(f"{path}: configuration hash mismatch")
    return bundle
