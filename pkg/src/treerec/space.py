"""Representation values, distance functions, and composition functions.

Representations are dense float64 numpy arrays.  Two shapes are supported:

* ``VectorShape(dim)``: a flat embedding vector of length ``dim``.
* ``CodeShape(length, vocab)``: a ``length x vocab`` matrix encoding a
  discrete code position by position (row-major), where a hard code has
  one-hot rows and a relaxed code has arbitrary real rows.

Distances: ``cosine`` (1 - dot/(|r||s|), computed on flattened values),
``l1`` (sum of absolute differences) and ``squared_l2`` (sum of squared
differences).  Only l1 and squared_l2 separate points (zero distance iff
equal); cosine is scale-invariant, so colinear representations coincide
under it, and a zero-norm operand is rejected rather than mapped to NaN.
Compositions: elementwise addition, a learned/fixed linear form
``L @ r + R @ s`` that mixes positions but never vocabulary columns, and an
exact-lookup table keyed on bit-identical operand pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class ShapeMismatchError(ValueError):
    """Operands do not conform to the declared or expected shape."""


class ZeroNormError(ValueError):
    """Cosine distance requested for a zero-norm operand."""


class CompositionLookupError(KeyError):
    """Table composition queried with an operand pair it never registered."""


@dataclass(frozen=True)
class VectorShape:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def array_shape(self) -> tuple[int, ...]:
        return (self.dim,)


@dataclass(frozen=True)
class CodeShape:
    length: int
    vocab: int

    def __post_init__(self):
        if self.length < 1 or self.vocab < 1:
            raise ValueError("length and vocab must be positive")

    def array_shape(self) -> tuple[int, ...]:
        return (self.length, self.vocab)


Shape = Union[VectorShape, CodeShape]


def as_representation(values, shape: Shape | None = None) -> np.ndarray:
    """Coerce ``values`` to a float64 array, checking finiteness and shape."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("representation values must be finite")
    if shape is not None and arr.shape != shape.array_shape():
        raise ShapeMismatchError(
            f"expected array of shape {shape.array_shape()}, got {arr.shape}"
        )
    return arr


def shape_of(arr: np.ndarray) -> Shape:
    if arr.ndim == 1:
        return VectorShape(arr.shape[0])
    if arr.ndim == 2:
        return CodeShape(arr.shape[0], arr.shape[1])
    raise ShapeMismatchError(f"representations are 1- or 2-d, got ndim={arr.ndim}")


def is_hard_code(arr: np.ndarray) -> bool:
    """True when every row is exactly one-hot (entries 0.0 or 1.0)."""
    if arr.ndim != 2:
        return False
    onehot = np.isin(arr, (0.0, 1.0)).all()
    return bool(onehot and (arr.sum(axis=1) == 1.0).all())


DISTANCE_KINDS = ("cosine", "l1", "squared_l2")


@dataclass(frozen=True)
class DistanceSpec:
    """Which distance to apply between two equal-shape representations."""

    kind: str

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}; "
                             f"expected one of {DISTANCE_KINDS}")


@dataclass(frozen=True)
class AdditiveComposition:
    """Elementwise sum; requires equal operand shapes."""

    kind = "additive"


@dataclass(frozen=True)
class LinearComposition:
    """Combines operands as ``left_weights @ r + right_weights @ s``.

    For vectors the weights are dim x dim; for code matrices they are
    length x length and act along the position axis only, so tokens can be
    moved between positions but vocabulary columns never mix.  Constructed
    without weights it is a placeholder whose matrices are estimated during
    fitting (see FitConfig.learn_composition).
    """

    left_weights: np.ndarray | None = None
    right_weights: np.ndarray | None = None
    kind = "linear"

    def __post_init__(self):
        if (self.left_weights is None) != (self.right_weights is None):
            raise ValueError("provide both weight matrices or neither")
        if self.left_weights is not None:
            lw = as_representation(self.left_weights)
            rw = as_representation(self.right_weights)
            if lw.ndim != 2 or lw.shape[0] != lw.shape[1] or lw.shape != rw.shape:
                raise ShapeMismatchError("weights must be equal-size square matrices")
            object.__setattr__(self, "left_weights", lw)
            object.__setattr__(self, "right_weights", rw)

    @property
    def has_weights(self) -> bool:
        return self.left_weights is not None


def _table_key(r: np.ndarray, s: np.ndarray):
    return (r.shape, r.tobytes(), s.shape, s.tobytes())


@dataclass(frozen=True)
class TableComposition:
    """Exact-lookup composition keyed on bit-identical operand pairs.

    Exists to demonstrate that an unrestricted composition function can
    reproduce any injectively-derived dataset perfectly; it is test/diagnostic
    machinery, not an optimizable operation.
    """

    _memo: dict = field(default_factory=dict, repr=False)
    kind = "table"

    def register(self, r: np.ndarray, s: np.ndarray, out: np.ndarray):
        self._memo[_table_key(r, s)] = np.array(out, dtype=np.float64)

    def lookup(self, r: np.ndarray, s: np.ndarray) -> np.ndarray:
        try:
            return self._memo[_table_key(r, s)]
        except KeyError:
            raise CompositionLookupError(
                "operand pair was never registered with this table"
            ) from None

    def __len__(self) -> int:
        return len(self._memo)


CompositionSpec = Union[AdditiveComposition, LinearComposition, TableComposition]


def _check_equal_shapes(r: np.ndarray, s: np.ndarray):
    if r.shape != s.shape:
        raise ShapeMismatchError(f"operand shapes differ: {r.shape} vs {s.shape}")


def distance(spec: DistanceSpec, r: np.ndarray, s: np.ndarray) -> float:
    _check_equal_shapes(r, s)
    if spec.kind == "l1":
        return float(np.abs(r - s).sum())
    if spec.kind == "squared_l2":
        d = r - s
        return float((d * d).sum())
    # cosine
    rf, sf = r.ravel(), s.ravel()
    nr = float(np.linalg.norm(rf))
    ns = float(np.linalg.norm(sf))
    if nr == 0.0 or ns == 0.0:
        raise ZeroNormError("cosine distance is undefined for a zero-norm operand")
    if np.array_equal(rf, sf):
        return 0.0
    return max(0.0, 1.0 - float(rf @ sf) / (nr * ns))


def distance_subgradient(spec: DistanceSpec, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Subgradient of ``distance(spec, r, s)`` with respect to ``r``.

    l1 uses sign(r - s) with 0 at exact ties, so an optimizer sits still on
    coordinates it has matched exactly.
    """
    _check_equal_shapes(r, s)
    if spec.kind == "l1":
        return np.sign(r - s)
    if spec.kind == "squared_l2":
        return 2.0 * (r - s)
    rf, sf = r.ravel(), s.ravel()
    nr = float(np.linalg.norm(rf))
    ns = float(np.linalg.norm(sf))
    if nr == 0.0 or ns == 0.0:
        raise ZeroNormError("cosine distance is undefined for a zero-norm operand")
    dot = float(rf @ sf)
    grad = (dot / (nr**3 * ns)) * rf - sf / (nr * ns)
    return grad.reshape(r.shape)


def compose(spec: CompositionSpec, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    if isinstance(spec, AdditiveComposition):
        _check_equal_shapes(r, s)
        return r + s
    if isinstance(spec, LinearComposition):
        if not spec.has_weights:
            raise ValueError("linear composition has no weights yet; "
                             "fit with learn_composition=True or supply matrices")
        _check_equal_shapes(r, s)
        if spec.left_weights.shape[1] != r.shape[0]:
            raise ShapeMismatchError(
                f"weights act on leading axis of size {spec.left_weights.shape[1]}, "
                f"operands have leading axis {r.shape[0]}"
            )
        return spec.left_weights @ r + spec.right_weights @ s
    if isinstance(spec, TableComposition):
        return spec.lookup(r, s)
    raise TypeError(f"unknown composition spec {spec!r}")


def _outer_like(g: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Gradient of (W @ v) w.r.t. W given upstream g: g v^T for vectors,
    # g @ v^T for position-by-vocab matrices.
    if g.ndim == 1:
        return np.outer(g, v)
    return g @ v.T


def composition_gradients(spec: CompositionSpec, r: np.ndarray, s: np.ndarray,
                          upstream: np.ndarray):
    """Analytic adjoints of ``compose`` for the differentiable kinds.

    Returns ``(grad_r, grad_s)`` for additive composition and
    ``(grad_r, grad_s, grad_left_weights, grad_right_weights)`` for linear.
    """
    if isinstance(spec, AdditiveComposition):
        _check_equal_shapes(r, s)
        return upstream, upstream
    if isinstance(spec, LinearComposition):
        if not spec.has_weights:
            raise ValueError("linear composition has no weights yet")
        grad_r = spec.left_weights.T @ upstream
        grad_s = spec.right_weights.T @ upstream
        return grad_r, grad_s, _outer_like(upstream, r), _outer_like(upstream, s)
    raise TypeError(f"composition kind {getattr(spec, 'kind', spec)!r} has no gradient")
