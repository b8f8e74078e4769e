"""nu-parameterised One-Class SVM with an RBF kernel and a pairwise SMO solver.

The dual being solved, with ``m`` training rows and ``C = 1 / (nu * m)``::

    minimize    1/2 * sum_ij a_i a_j k(x_i, x_j)
    subject to  0 <= a_i <= C,  sum_i a_i = 1

and the decision function is ``f(x) = sum_i a_i k(x_i, x) - rho``; rows with
``f(x) < 0`` are anomalies.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConvergenceFailure, DeserializationError, DimensionError, IncompatibleModel,
                     InvalidParameter)

MODEL_FORMAT = "flowvote.ocsvm"
MODEL_VERSION = 1

TAU = 1e-12


@dataclass(frozen=True)
class KernelParams:
    gamma: float
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise InvalidParameter(f"unsupported kernel {self.kind!r}")
        if not self.gamma > 0 or not math.isfinite(self.gamma):
            raise InvalidParameter(f"gamma must be a positive real, got {self.gamma!r}")


@dataclass(frozen=True)
class TrainParams:
    nu: float = 0.035
    gamma: float | str = "scale"
    tol: float = 1e-4
    max_iter: int = 100_000
    cache_mb: float = 256.0

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise InvalidParameter(f"nu must lie in (0, 1], got {self.nu!r}")
        if not self.tol > 0:
            raise InvalidParameter("tol must be positive")
        if self.max_iter < 1:
            raise InvalidParameter("max_iter must be positive")
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                raise InvalidParameter(f"gamma must be a number or 'scale', got {self.gamma!r}")
        else:
            KernelParams(float(self.gamma))


def rbf_kernel(x, y, gamma: float) -> float:
    """``exp(-gamma * ||x - y||^2)`` for two feature rows."""
    if not gamma > 0:
        raise InvalidParameter(f"gamma must be positive, got {gamma!r}")
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(f"rows of shape {x.shape} and {y.shape} are not comparable")
    d = x - y
    return float(np.exp(-gamma * float(d @ d)))


def rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix between the rows of ``a`` and the rows of ``b``."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension {a.shape[1]} vs {b.shape[1]}")
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def scale_gamma(x: np.ndarray) -> float:
    """``1 / (d * mean per-feature variance)``; 1.0 if the data has no spread."""
    var = float(np.var(x, axis=0).mean()) if len(x) else 0.0
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


@dataclass(frozen=True, eq=False)
class OcsvmModel:
    support_vectors: np.ndarray = field(repr=False)
    alphas: np.ndarray = field(repr=False)
    rho: float
    kernel: KernelParams
    nu: float
    m: int
    columns: tuple[str, ...] = ()
    converged: bool = True
    n_iter: int = 0
    objective: float = float("nan")
    kkt_gap: float = 0.0

    @property
    def n_support(self) -> int:
        return len(self.alphas)

    @property
    def upper_bound(self) -> float:
        return 1.0 / (self.nu * self.m)

    def decision_function(self, x) -> np.ndarray | float:
        return decision_function(self, x)

    def predict(self, x) -> np.ndarray:
        return predict(self, x)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kernel": {"kind": self.kernel.kind, "gamma": self.kernel.gamma},
            "nu": self.nu,
            "m": self.m,
            "rho": self.rho,
            "columns": list(self.columns),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "objective": self.objective,
            "kkt_gap": self.kkt_gap,
            "support": [{"row": sv.tolist(), "alpha": float(a)}
                        for sv, a in zip(self.support_vectors, self.alphas)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OcsvmModel":
        if doc.get("format") != MODEL_FORMAT:
            raise DeserializationError("not a One-Class SVM model document")
        if doc.get("version") != MODEL_VERSION:
            raise IncompatibleModel(f"OCSVM model version {doc.get('version')!r} unsupported")
        try:
            support = doc["support"]
            sv = np.array([s["row"] for s in support], dtype=float)
            return cls(
                support_vectors=sv.reshape(len(support), -1),
                alphas=np.array([s["alpha"] for s in support], dtype=float),
                rho=float(doc["rho"]),
                kernel=KernelParams(float(doc["kernel"]["gamma"]), doc["kernel"]["kind"]),
                nu=float(doc["nu"]),
                m=int(doc["m"]),
                columns=tuple(doc.get("columns", ())),
                converged=bool(doc.get("converged", True)),
                n_iter=int(doc.get("n_iter", 0)),
                objective=float(doc.get("objective", float("nan"))),
                kkt_gap=float(doc.get("kkt_gap", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DeserializationError(f"malformed OCSVM model ({exc})") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "OcsvmModel":
        try:
            doc = json.loads(Path(path).read_text())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise DeserializationError(f"{path}: {exc}") from None
        return cls.from_dict(doc)


class _KernelRows:
    """LRU cache of full kernel rows ``k(x_i, .)`` over the training set."""

    def __init__(self, x: np.ndarray, gamma: float, capacity: int):
        self.x = x
        self.sq = (x * x).sum(1)
        self.gamma = gamma
        self.capacity = max(capacity, 2)
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def __getitem__(self, i: int) -> np.ndarray:
        row = self._rows.get(i)
        if row is not None:
            self._rows.move_to_end(i)
            return row
        d = self.sq[i] + self.sq - 2.0 * (self.x @ self.x[i])
        row = np.exp(-self.gamma * np.maximum(d, 0.0))
        row[i] = 1.0
        self._rows[i] = row
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return row


def _as_array(train) -> tuple[np.ndarray, tuple[str, ...]]:
    values = getattr(train, "values", train)
    columns = tuple(getattr(train, "columns", ()))
    x = np.ascontiguousarray(values, dtype=float)
    if x.ndim != 2:
        raise DimensionError("training data must be a 2-D matrix")
    return x, columns


def train_ocsvm(train, params: TrainParams | None = None) -> OcsvmModel:
    """Solve the One-Class SVM dual by pairwise coordinate ascent (SMO).

    Each step picks the maximal-violating index ``i`` and a partner ``j``
    by second-order gain, then moves mass between ``a_i`` and ``a_j`` so
    that ``sum(a) == 1`` holds throughout. Stops when the KKT gap
    ``max_{a_i<C} -g_i - min_{a_j>0} -g_j`` drops below ``tol``.
    """
    params = params or TrainParams()
    x, columns = _as_array(train)
    m = len(x)
    if m < 2:
        raise InvalidParameter("need at least two training rows")
    gamma = scale_gamma(x) if params.gamma == "scale" else float(params.gamma)
    kernel = KernelParams(gamma)
    rows = _KernelRows(x, gamma, int(params.cache_mb * 2**20 // (8 * m)))

    C = 1.0 / (params.nu * m)
    alpha = np.zeros(m)
    n_full = min(int(math.floor(params.nu * m)), m)
    alpha[:n_full] = C
    if n_full < m:
        alpha[n_full] = 1.0 - n_full * C
    init = np.flatnonzero(alpha)
    grad = alpha[init] @ rbf_gram(x[init], x, gamma)

    snap = 1e-12 * C
    converged = False
    n_iter = 0
    gap = math.inf
    while n_iter < params.max_iter:
        up = alpha < C
        low = alpha > 0
        neg = -grad
        i = int(np.argmax(np.where(up, neg, -np.inf)))
        g_max = neg[i]
        g_min = np.min(np.where(low, neg, np.inf))
        gap = g_max - g_min
        if gap < params.tol:
            converged = True
            break
        ki = rows[i]
        b = g_max - neg
        cand = low & (b > 0)
        a = np.maximum(2.0 - 2.0 * ki, TAU)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))
        kj = rows[j]
        step = b[j] / a[j]
        step = min(step, C - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        if C - alpha[i] < snap:
            alpha[i] = C
        if alpha[j] < snap:
            alpha[j] = 0.0
        grad += step * (ki - kj)
        n_iter += 1

    if not converged:
        if gap < 10 * params.tol:
            warnings.warn(f"OCSVM solver stopped after {n_iter} iterations with KKT gap {gap:.3g}",
                          RuntimeWarning, stacklevel=2)
        else:
            raise ConvergenceFailure(
                f"no convergence in {params.max_iter} iterations (KKT gap {gap:.3g})", gap=gap)

    sv = np.flatnonzero(alpha > 0)
    # Fresh gradient over support vectors only, to shed accumulated drift.
    k_sv = rbf_gram(x[sv], x, gamma)
    grad = alpha[sv] @ k_sv
    free = sv[(alpha[sv] > snap) & (alpha[sv] < C - snap)]
    rho = float(grad[free].mean()) if len(free) else float(np.median(grad[sv]))
    objective = 0.5 * float(alpha @ grad)
    return OcsvmModel(
        support_vectors=x[sv].copy(), alphas=alpha[sv].copy(), rho=rho, kernel=kernel,
        nu=params.nu, m=m, columns=columns, converged=converged, n_iter=n_iter,
        objective=objective, kkt_gap=float(gap),
    )


def _sqdist_rows(block: np.ndarray, sv: np.ndarray) -> np.ndarray:
    # Coordinate-wise accumulation: each entry depends only on its own pair of
    # rows, so results do not change with batch size (a BLAS product would).
    out = np.zeros((len(block), len(sv)))
    for k in range(sv.shape[1]):
        d = block[:, k, None] - sv[None, :, k]
        out += d * d
    return out


def decision_function(model: OcsvmModel, x, chunk: int = 4096):
    """``sum_i a_i k(sv_i, x) - rho``; scalar for one row, array for a matrix.

    A row's value is bit-identical whether it is scored alone or in a batch.
    """
    values = np.asarray(getattr(x, "values", x), dtype=float)
    single = values.ndim == 1
    values = np.atleast_2d(values)
    sv = model.support_vectors
    if values.shape[1] != sv.shape[1]:
        raise DimensionError(f"model expects {sv.shape[1]} features, got {values.shape[1]}")
    chunk = max(1, min(chunk, 2**22 // max(len(sv), 1)))
    out = np.empty(len(values))
    for start in range(0, len(values), chunk):
        k = np.exp(-model.kernel.gamma * _sqdist_rows(values[start:start + chunk], sv))
        out[start:start + chunk] = (k * model.alphas).sum(axis=1)
    out -= model.rho
    return float(out[0]) if single else out


def predict(model: OcsvmModel, x) -> np.ndarray:
    """Boolean anomaly flags: ``True`` where the decision value is below 0."""
    scores = np.atleast_1d(decision_function(model, x))
    return scores < 0
