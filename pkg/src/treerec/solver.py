"""Fitting explicitly compositional approximations to observed representations.

Given records of (representation, derivation) pairs, the solver assigns one
parameter vector to every primitive symbol and evaluates derivations
bottom-up: a leaf produces its parameter, an internal node composes its
children's values.  The parameters (and, optionally, the weight matrices of a
linear composition) are chosen to minimize the summed distance between each
record's stored representation and its composed prediction.  The per-record
distance at the optimum is that record's tree reconstruction error; the
dataset score is the mean.

``fit`` minimizes with full-batch Adam; ``closed_form_fit`` solves the
additive / squared-L2 case exactly through the normal equations and serves as
an independent oracle for the iterative path.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .derivation import Derivation, Leaf, Node, Symbol, dataset_primitives, format_derivation
from .space import (
    AdditiveComposition,
    CompositionSpec,
    DistanceSpec,
    LinearComposition,
    Shape,
    as_representation,
    compose,
    distance,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
EARLY_STOP_WINDOW = 50
_SEED_MASK = (1 << 64) - 1
_MAX_COSINE_RESCUES = 10


class MissingPrimitiveError(KeyError):
    """A derivation leaf has no entry in the primitive table."""

    def __init__(self, symbol: Symbol):
        super().__init__(f"no parameter entry for primitive {symbol.name!r}")
        self.symbol = symbol


class DivergenceError(RuntimeError):
    """The objective became non-finite during optimization."""

    def __init__(self, step: int, message: str | None = None):
        super().__init__(message or f"objective became non-finite at step {step}")
        self.step = step


@dataclass(frozen=True)
class Record:
    id: str
    representation: np.ndarray
    derivation: Derivation


@dataclass(frozen=True)
class Dataset:
    """Non-empty list of records sharing one representation shape."""

    records: tuple[Record, ...]
    shape: Shape

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if not records:
            raise ValueError("dataset must contain at least one record")
        seen: set[str] = set()
        for rec in records:
            if rec.id in seen:
                raise ValueError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            as_representation(rec.representation, self.shape)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def primitives(self) -> tuple[Symbol, ...]:
        return dataset_primitives([r.derivation for r in self.records])

    @staticmethod
    def build(rows: Iterable[tuple[str, object, Derivation]], shape: Shape) -> "Dataset":
        records = tuple(
            Record(rid, as_representation(rep, shape), deriv) for rid, rep, deriv in rows
        )
        return Dataset(records, shape)


@dataclass(frozen=True)
class PrimitiveTable:
    """Learned parameter value per primitive, plus optional linear weights."""

    entries: dict[Symbol, np.ndarray]
    composition_params: LinearComposition | None = None


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings for ``fit``.

    The optimizer itself is inherent to nothing in the data: defaults here
    (Adam, lr 0.01, 1000 steps) are chosen for robustness across the cosine /
    l1 / squared-L2 objectives without per-dataset tuning.  ``restarts``
    defaults to 1, or 5 when the composition weights are learned.
    """

    distance: DistanceSpec
    composition: CompositionSpec = AdditiveComposition()
    learn_composition: bool = False
    steps: int = 1000
    learning_rate: float = 0.01
    seed: int = 0
    init_scale: float = 0.01
    convergence_tol: float = 1e-8
    restarts: int | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be non-negative")
        if self.restarts is not None and self.restarts < 1:
            raise ValueError("restarts must be positive")
        if self.learn_composition and not isinstance(self.composition, LinearComposition):
            raise ValueError("only linear composition weights can be learned")

    @property
    def effective_restarts(self) -> int:
        if self.restarts is not None:
            return self.restarts
        return 5 if self.learn_composition else 1


@dataclass(frozen=True)
class TreReport:
    """Result of a fit: per-record errors, their mean, and the learned table."""

    per_datum: dict[str, float]
    aggregate: float
    table: PrimitiveTable
    objective_trace: tuple[tuple[int, float], ...]
    converged: bool
    diagnostics: tuple[str, ...] = ()

    @property
    def steps_run(self) -> int:
        return self.objective_trace[-1][0]

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1][1]


def eval_compositional(table: PrimitiveTable, comp: CompositionSpec,
                       d: Derivation) -> np.ndarray:
    """Bottom-up evaluation: leaves read the table, nodes compose children."""
    if isinstance(d, Leaf):
        try:
            return table.entries[d.symbol]
        except KeyError:
            raise MissingPrimitiveError(d.symbol) from None
    left = eval_compositional(table, comp, d.left)
    right = eval_compositional(table, comp, d.right)
    return compose(comp, left, right)


def _effective_composition(config: FitConfig, table: PrimitiveTable) -> CompositionSpec:
    comp = config.composition
    if isinstance(comp, LinearComposition) and not comp.has_weights:
        if table.composition_params is None:
            raise ValueError("linear composition weights are neither in the "
                             "config nor in the table")
        return table.composition_params
    return comp


def tre_datum(table: PrimitiveTable, config: FitConfig, record: Record) -> float:
    """Distance between the stored representation and the composed prediction."""
    comp = _effective_composition(config, table)
    predicted = eval_compositional(table, comp, record.derivation)
    return distance(config.distance, record.representation, predicted)


def objective(table: PrimitiveTable, config: FitConfig, dataset: Dataset) -> float:
    """Sum (not mean) of per-record errors at the current table."""
    return math.fsum(tre_datum(table, config, rec) for rec in dataset.records)


# -- internal optimization machinery -----------------------------------------


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & _SEED_MASK, *keys]))


def _symbol_key(name: str) -> int:
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class _Compiled:
    """Postorder program for one derivation.

    ``instr[p] >= 0`` loads parameter row ``instr[p]``; ``instr[p] == -1``
    composes the two most recent unconsumed values.  ``left/right`` hold the
    operand positions for node instructions.
    """

    instr: list[int]
    left: list[int]
    right: list[int]


def _compile_derivation(d: Derivation, sym_index: dict[Symbol, int]) -> _Compiled:
    instr: list[int] = []
    left: list[int] = []
    right: list[int] = []
    stack: list[int] = []

    def walk(t: Derivation):
        if isinstance(t, Leaf):
            instr.append(sym_index[t.symbol])
            left.append(-1)
            right.append(-1)
            stack.append(len(instr) - 1)
            return
        walk(t.left)
        walk(t.right)
        r = stack.pop()
        l = stack.pop()
        instr.append(-1)
        left.append(l)
        right.append(r)
        stack.append(len(instr) - 1)

    walk(d)
    return _Compiled(instr, left, right)


class _ZeroPrediction(Exception):
    def __init__(self, record_indices):
        self.record_indices = list(record_indices)


def _forward_record(prog: _Compiled, params: np.ndarray,
                    weights: tuple[np.ndarray, np.ndarray] | None) -> list[np.ndarray]:
    values: list[np.ndarray] = [None] * len(prog.instr)  # type: ignore[list-item]
    for p, ins in enumerate(prog.instr):
        if ins >= 0:
            values[p] = params[ins]
        elif weights is None:
            values[p] = values[prog.left[p]] + values[prog.right[p]]
        else:
            lw, rw = weights
            values[p] = lw @ values[prog.left[p]] + rw @ values[prog.right[p]]
    return values


def _backward_record(prog: _Compiled, values: list[np.ndarray], upstream: np.ndarray,
                     weights: tuple[np.ndarray, np.ndarray] | None,
                     grad_params: np.ndarray,
                     grad_weights: tuple[np.ndarray, np.ndarray] | None):
    grads: list[np.ndarray] = [None] * len(prog.instr)  # type: ignore[list-item]
    grads[-1] = upstream
    for p in range(len(prog.instr) - 1, -1, -1):
        g = grads[p]
        ins = prog.instr[p]
        if ins >= 0:
            grad_params[ins] += g
            continue
        l, r = prog.left[p], prog.right[p]
        if weights is None:
            grads[l] = g
            grads[r] = g
        else:
            lw, rw = weights
            grads[l] = lw.T @ g
            grads[r] = rw.T @ g
            if grad_weights is not None:
                gl, gr = grad_weights
                lv, rv = values[l], values[r]
                if g.ndim == 1:
                    gl += np.outer(g, lv)
                    gr += np.outer(g, rv)
                else:
                    gl += g @ lv.T
                    gr += g @ rv.T


def _loss_and_dpred(kind: str, preds: np.ndarray, targets: np.ndarray):
    """Objective and its gradient w.r.t. predictions, vectorized over records."""
    if kind == "squared_l2":
        resid = preds - targets
        return float((resid * resid).sum()), 2.0 * resid
    if kind == "l1":
        resid = preds - targets
        return float(np.abs(resid).sum()), np.sign(resid)
    # cosine
    n = preds.shape[0]
    pf = preds.reshape(n, -1)
    tf = targets.reshape(n, -1)
    pn = np.linalg.norm(pf, axis=1)
    tn = np.linalg.norm(tf, axis=1)
    zero = np.nonzero(pn == 0.0)[0]
    if zero.size:
        raise _ZeroPrediction(zero)
    dots = (pf * tf).sum(axis=1)
    loss = float(np.maximum(1.0 - dots / (pn * tn), 0.0).sum())
    dpred = (dots / (pn**3 * tn))[:, None] * pf - tf / (pn * tn)[:, None]
    return loss, dpred.reshape(preds.shape)


class _Adam:
    def __init__(self, shape: tuple[int, ...], learning_rate: float):
        self.lr = learning_rate
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray):
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad
        mhat = self.m / (1.0 - ADAM_BETA1**self.t)
        vhat = self.v / (1.0 - ADAM_BETA2**self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + ADAM_EPS)

    def reset_rows(self, rows: Sequence[int]):
        self.m[list(rows)] = 0.0
        self.v[list(rows)] = 0.0


@dataclass
class _Problem:
    dataset: Dataset
    config: FitConfig
    symbols: tuple[Symbol, ...]
    sym_index: dict[Symbol, int]
    targets: np.ndarray                 # (n, *shape)
    programs: list[_Compiled] | None    # None on the additive fast path
    counts: np.ndarray | None           # (n, P) leaf counts, additive only
    record_symbol_rows: list[list[int]]


def _build_problem(dataset: Dataset, config: FitConfig) -> _Problem:
    symbols = dataset.primitives()
    sym_index = {s: i for i, s in enumerate(symbols)}
    targets = np.stack([r.representation for r in dataset.records])
    record_rows = [
        sorted({sym_index[s] for s in _leaf_symbols(r.derivation)})
        for r in dataset.records
    ]
    if isinstance(config.composition, AdditiveComposition):
        counts = np.zeros((len(dataset), len(symbols)))
        for i, rec in enumerate(dataset.records):
            for s in _leaf_symbols(rec.derivation):
                counts[i, sym_index[s]] += 1.0
        return _Problem(dataset, config, symbols, sym_index, targets, None,
                        counts, record_rows)
    programs = [_compile_derivation(r.derivation, sym_index) for r in dataset.records]
    return _Problem(dataset, config, symbols, sym_index, targets, programs,
                    None, record_rows)


def _leaf_symbols(d: Derivation):
    stack = [d]
    while stack:
        t = stack.pop()
        if isinstance(t, Leaf):
            yield t.symbol
        else:
            stack.append(t.left)
            stack.append(t.right)


def _problem_forward(problem: _Problem, params: np.ndarray,
                     weights: tuple[np.ndarray, np.ndarray] | None):
    """Predictions (n, *shape) plus per-record cached node values."""
    if problem.counts is not None:
        return np.tensordot(problem.counts, params, axes=1), None
    values = [_forward_record(prog, params, weights) for prog in problem.programs]
    preds = np.stack([v[-1] for v in values])
    return preds, values


def _problem_backward(problem: _Problem, params: np.ndarray,
                      weights: tuple[np.ndarray, np.ndarray] | None,
                      values, dpred: np.ndarray,
                      learn_weights: bool):
    grad_params = np.zeros_like(params)
    grad_weights = None
    if weights is not None and learn_weights:
        grad_weights = (np.zeros_like(weights[0]), np.zeros_like(weights[1]))
    if problem.counts is not None:
        grad_params += np.tensordot(problem.counts.T, dpred, axes=1)
        return grad_params, grad_weights
    for i, prog in enumerate(problem.programs):
        _backward_record(prog, values[i], dpred[i], weights, grad_params, grad_weights)
    return grad_params, grad_weights


def _init_params(problem: _Problem, seed: int, restart: int, scale: float) -> np.ndarray:
    shape = problem.dataset.shape.array_shape()
    params = np.empty((len(problem.symbols),) + shape)
    for i, sym in enumerate(problem.symbols):
        rng = _rng(seed, 0, restart, _symbol_key(sym.name))
        params[i] = rng.normal(0.0, scale, shape)
    return params


def _init_weights(problem: _Problem, seed: int, restart: int, scale: float):
    side = problem.dataset.shape.array_shape()[0]
    eye = np.eye(side)
    lw = eye + _rng(seed, 1, restart, 0).normal(0.0, scale, (side, side))
    rw = eye + _rng(seed, 1, restart, 1).normal(0.0, scale, (side, side))
    return lw, rw


def _table_from(problem: _Problem, params: np.ndarray,
                weights: tuple[np.ndarray, np.ndarray] | None,
                learned: bool) -> PrimitiveTable:
    entries = {sym: params[i].copy() for i, sym in enumerate(problem.symbols)}
    comp_params = None
    if weights is not None and learned:
        comp_params = LinearComposition(weights[0].copy(), weights[1].copy())
    return PrimitiveTable(entries, comp_params)


def _aggregate(per_datum: dict[str, float]) -> float:
    return math.fsum(per_datum.values()) / len(per_datum)


def fit(dataset: Dataset, config: FitConfig) -> TreReport:
    """Minimize the summed reconstruction error with full-batch Adam.

    Parameters are initialized i.i.d. Gaussian(0, init_scale^2) keyed by
    (seed, restart, symbol name), so results do not depend on record order.
    Learned linear weights start at the identity plus the same-scale noise.
    Runs at most ``config.steps`` updates per restart, stopping early once the
    best objective seen stops improving (relatively) by ``convergence_tol``
    over a 50-step window, and keeps the restart with the lowest final
    objective.  Gradients accumulate in record-index order, so runs are
    bit-reproducible given (dataset order, config).
    """
    if isinstance(config.composition, LinearComposition):
        if not config.learn_composition and not config.composition.has_weights:
            raise ValueError("linear composition needs weight matrices unless "
                             "learn_composition=True")
    elif not isinstance(config.composition, AdditiveComposition):
        raise ValueError(
            f"cannot optimize through composition kind "
            f"{getattr(config.composition, 'kind', config.composition)!r}"
        )
    if config.distance.kind == "cosine":
        for rec in dataset.records:
            if float(np.linalg.norm(rec.representation)) == 0.0:
                raise ValueError(f"cosine distance is undefined for zero-norm "
                                 f"representation in record {rec.id!r}")

    problem = _build_problem(dataset, config)
    fixed_weights = None
    if isinstance(config.composition, LinearComposition) and config.composition.has_weights:
        side = dataset.shape.array_shape()[0]
        if config.composition.left_weights.shape[0] != side:
            raise ValueError("composition weights do not match the dataset shape")
        fixed_weights = (config.composition.left_weights, config.composition.right_weights)

    best = None
    for restart in range(config.effective_restarts):
        outcome = _fit_once(problem, config, restart, fixed_weights)
        if best is None or outcome[0] < best[0]:
            best = outcome

    _, params, weights, trace, converged, diagnostics = best
    table = _table_from(problem, params, weights, config.learn_composition)
    per_datum = {rec.id: tre_datum(table, config, rec) for rec in dataset.records}
    return TreReport(
        per_datum=per_datum,
        aggregate=_aggregate(per_datum),
        table=table,
        objective_trace=tuple(trace),
        converged=converged,
        diagnostics=tuple(diagnostics),
    )


def _fit_once(problem: _Problem, config: FitConfig, restart: int,
              fixed_weights: tuple[np.ndarray, np.ndarray] | None):
    params = _init_params(problem, config.seed, restart, config.init_scale)
    learn = config.learn_composition
    if learn:
        weights = _init_weights(problem, config.seed, restart, config.init_scale)
    else:
        weights = fixed_weights

    opt_params = _Adam(params.shape, config.learning_rate)
    opt_weights = None
    if learn:
        opt_weights = (_Adam(weights[0].shape, config.learning_rate),
                       _Adam(weights[1].shape, config.learning_rate))
        weights = (weights[0].copy(), weights[1].copy())

    trace: list[tuple[int, float]] = []
    best_so_far: list[float] = []
    diagnostics: list[str] = []
    converged = False
    rescues = 0

    step = 0
    while True:
        try:
            preds, values = _problem_forward(problem, params, weights)
            obj, dpred = _loss_and_dpred(config.distance.kind, preds, problem.targets)
        except _ZeroPrediction as zp:
            rescues += 1
            if rescues > _MAX_COSINE_RESCUES:
                raise DivergenceError(
                    step, f"cosine predictions collapsed to zero norm at step {step} "
                          f"and re-initialization did not recover")
            rows = sorted({row for i in zp.record_indices
                           for row in problem.record_symbol_rows[i]})
            for row in rows:
                rng = _rng(config.seed, 2, restart, rescues, row)
                params[row] = rng.normal(0.0, config.init_scale,
                                         params.shape[1:])
            opt_params.reset_rows(rows)
            names = ", ".join(problem.symbols[r].name for r in rows)
            diagnostics.append(
                f"step {step}: zero-norm cosine prediction; re-initialized "
                f"entries [{names}]")
            continue

        if not np.isfinite(obj):
            raise DivergenceError(step)
        trace.append((step, obj))
        best_so_far.append(obj if not best_so_far else min(best_so_far[-1], obj))

        if step >= config.steps:
            break
        if len(best_so_far) > EARLY_STOP_WINDOW:
            prev = best_so_far[-1 - EARLY_STOP_WINDOW]
            improvement = prev - best_so_far[-1]
            if improvement / max(prev, 1e-30) < config.convergence_tol:
                converged = True
                break

        grad_params, grad_weights = _problem_backward(
            problem, params, weights, values, dpred, learn)
        opt_params.step(params, grad_params)
        if learn:
            lw, rw = weights
            opt_weights[0].step(lw, grad_weights[0])
            opt_weights[1].step(rw, grad_weights[1])
        step += 1

    final_obj = trace[-1][1]
    return final_obj, params, weights, trace, converged, diagnostics


def closed_form_fit(dataset: Dataset,
                    distance_spec: DistanceSpec = DistanceSpec("squared_l2"),
                    composition: CompositionSpec = AdditiveComposition()) -> TreReport:
    """Exact optimum for additive composition under squared-L2 distance.

    Each prediction is the leaf-count-weighted sum of primitive entries, so
    the objective is linear least squares in the entries; the normal equations
    are solved exactly, with the minimum-norm solution on rank deficiency.
    """
    if distance_spec.kind != "squared_l2":
        raise ValueError("closed_form_fit requires squared_l2 distance")
    if not isinstance(composition, AdditiveComposition):
        raise ValueError("closed_form_fit requires additive composition")

    symbols = dataset.primitives()
    sym_index = {s: i for i, s in enumerate(symbols)}
    n, p = len(dataset), len(symbols)
    counts = np.zeros((n, p))
    for i, rec in enumerate(dataset.records):
        for s in _leaf_symbols(rec.derivation):
            counts[i, sym_index[s]] += 1.0
    flat_targets = np.stack([r.representation.ravel() for r in dataset.records])
    solution, *_ = np.linalg.lstsq(counts, flat_targets, rcond=None)

    resid = counts @ solution - flat_targets
    per_datum = {rec.id: float((resid[i] * resid[i]).sum())
                 for i, rec in enumerate(dataset.records)}
    shape = dataset.shape.array_shape()
    entries = {sym: solution[i].reshape(shape).copy() for i, sym in enumerate(symbols)}
    total = math.fsum(per_datum.values())
    return TreReport(
        per_datum=per_datum,
        aggregate=_aggregate(per_datum),
        table=PrimitiveTable(entries),
        objective_trace=((0, total),),
        converged=True,
    )


def gradient_check(dataset: Dataset, config: FitConfig, trials: int = 100,
                   step_size: float = 1e-5, kink_tol: float = 1e-4) -> float:
    """Worst relative error of analytic objective gradients vs central
    finite differences, over ``trials`` random evaluation points.

    For the l1 objective, points whose residuals sit within ``kink_tol`` of a
    sign tie are redrawn, since the subgradient is not a derivative there.
    The numeric side goes through ``objective`` (recursive evaluation), the
    analytic side through the optimizer's backward pass, so the two paths are
    independent.
    """
    problem = _build_problem(dataset, config)
    shape = dataset.shape.array_shape()
    learn = config.learn_composition
    is_linear = isinstance(config.composition, LinearComposition)
    worst = 0.0

    for trial in range(trials):
        params = weights = None
        for attempt in range(64):
            rng = _rng(config.seed, 3, trial, attempt)
            params = rng.normal(0.0, 1.0, (len(problem.symbols),) + shape)
            if is_linear:
                if config.composition.has_weights and not learn:
                    weights = (config.composition.left_weights,
                               config.composition.right_weights)
                else:
                    side = shape[0]
                    weights = (np.eye(side) + 0.5 * rng.normal(0.0, 1.0, (side, side)),
                               np.eye(side) + 0.5 * rng.normal(0.0, 1.0, (side, side)))
            preds, values = _problem_forward(problem, params, weights)
            if config.distance.kind == "l1":
                if np.abs(preds - problem.targets).min() <= kink_tol:
                    continue
            if config.distance.kind == "cosine":
                norms = np.linalg.norm(preds.reshape(len(problem.dataset), -1), axis=1)
                if norms.min() <= 1e-3:
                    continue
            break

        _, dpred = _loss_and_dpred(config.distance.kind, preds, problem.targets)
        grad_params, grad_weights = _problem_backward(
            problem, params, weights, values, dpred, learn)

        def numeric_objective(p, w):
            table = PrimitiveTable(
                {sym: p[i] for i, sym in enumerate(problem.symbols)},
                LinearComposition(w[0], w[1]) if (is_linear and w is not None) else None,
            )
            return objective(table, config, dataset)

        blocks = [(params, grad_params)]
        if learn:
            blocks.append((weights[0], grad_weights[0]))
            blocks.append((weights[1], grad_weights[1]))
        for block, analytic in blocks:
            flat = block.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step_size
                hi = numeric_objective(params, weights)
                flat[k] = orig - step_size
                lo = numeric_objective(params, weights)
                flat[k] = orig
                numeric = (hi - lo) / (2.0 * step_size)
                a = analytic.ravel()[k]
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
                worst = max(worst, err)
    return worst


def trivial_composition_table(dataset: Dataset):
    """Lookup table and composition that reproduce the dataset exactly.

    Requires the dataset to be derivation-closed (every sub-derivation of a
    record's derivation is itself a record) and the derivation-to-
    representation mapping to be consistent.  Demonstrates that with an
    unrestricted composition function, reconstruction error can always be
    driven to zero.
    """
    from .space import TableComposition

    rep_of: dict[Derivation, np.ndarray] = {}
    for rec in dataset.records:
        prev = rep_of.get(rec.derivation)
        if prev is not None and not np.array_equal(prev, rec.representation):
            raise ValueError(
                f"derivation {format_derivation(rec.derivation)!r} maps to two "
                f"different representations; lookup composition needs an "
                f"injective derivation oracle")
        rep_of[rec.derivation] = rec.representation

    entries: dict[Symbol, np.ndarray] = {}
    table_comp = TableComposition()
    for deriv, rep in rep_of.items():
        if isinstance(deriv, Leaf):
            entries[deriv.symbol] = rep
            continue
        for child in (deriv.left, deriv.right):
            if child not in rep_of:
                raise ValueError(
                    f"dataset is not derivation-closed: sub-derivation "
                    f"{format_derivation(child)!r} has no record")
        table_comp.register(rep_of[deriv.left], rep_of[deriv.right], rep)
    return PrimitiveTable(entries), table_comp


def homomorphism_residuals(dataset: Dataset, comp: CompositionSpec,
                           distance_spec: DistanceSpec) -> dict[str, float]:
    """Direct check of the composition property on the stored representations.

    For every record whose derivation combines two sub-derivations that are
    themselves records, returns the distance between the record's stored
    representation and the composition of the children's stored
    representations.  All-zero residuals mean the representations already
    compose exactly; ties to zero reconstruction error.  When several records
    share a derivation, the first by record order supplies its representation.
    """
    rep_of: dict[Derivation, np.ndarray] = {}
    for rec in dataset.records:
        rep_of.setdefault(rec.derivation, rec.representation)
    out: dict[str, float] = {}
    for rec in dataset.records:
        d = rec.derivation
        if isinstance(d, Node) and d.left in rep_of and d.right in rep_of:
            composed = compose(comp, rep_of[d.left], rep_of[d.right])
            out[rec.id] = distance(distance_spec, rec.representation, composed)
    return out
