"""Keeping the gas constants current: recursive least squares with
exponential forgetting against ground-truth vehicle counts, plus a
non-negative batch solver that serves as the calibration oracle.

The forgetting factor encodes that the constants are time-variant; one
knob (lambda) trades tracking speed against noise. Weights are projected
onto w >= 0 after every update because a gas cannot contribute negative
traffic.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import NoOverlapError, RankDeficientError
from .estimator import EnvCorrectionParams, WeightVector, gas_features
from .types import SPECIES, GasVector, NodeSample

__all__ = [
    "CalibState",
    "FitReport",
    "features",
    "rls_update",
    "nnls",
    "batch_fit",
    "evaluate",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]


#: Covariance limiting: trace(P) is held below this multiple of delta per
#: dimension, bounding the windup that exponential forgetting causes under
#: poor excitation.
TRACE_CAP_FACTOR = 100.0


@dataclass(frozen=True)
class CalibState:
    """Recursive least-squares state.

    ``w`` is the weight array (canonical species order in the 4-gas
    domain; the math is dimension generic). ``P`` is the symmetric
    positive-definite covariance, ``lam`` the forgetting factor in (0, 1],
    ``delta`` the initial covariance scale used both at start and on
    numeric reset. ``clamp_events`` counts negative-weight projections,
    ``resets`` counts covariance reinitializations after a loss of
    positive-definiteness.
    """

    w: np.ndarray
    P: np.ndarray
    lam: float = 0.99
    delta: float = 100.0
    n_updates: int = 0
    clamp_events: int = 0
    resets: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lambda must be in (0, 1]")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")

    @classmethod
    def fresh(cls, dim: int = len(SPECIES), lam: float = 0.99,
              delta: float = 100.0) -> "CalibState":
        """Zero weights, P = delta * I."""
        return cls(w=np.zeros(dim), P=delta * np.eye(dim), lam=lam, delta=delta)

    def weight_vector(self) -> WeightVector:
        """Immutable 4-species snapshot handed to the estimator.

        The non-negativity projection lives here, at the exposure
        boundary: the recursion itself stays unconstrained (see
        rls_update), and whatever it exposes is clamped at zero.
        """
        return WeightVector.from_array(np.maximum(self.w, 0.0))


@dataclass(frozen=True)
class FitReport:
    """Fit quality over aligned minute buckets."""

    mae: float
    rmse: float
    pearson_r: float
    n: int


def features(sample: NodeSample, baseline: GasVector,
             params: EnvCorrectionParams) -> np.ndarray:
    """Regression features for one sample; w . features == node_estimate."""
    return gas_features(sample, baseline, params)


def rls_update(state: CalibState, x, y: float) -> CalibState:
    """One exponentially-forgetting RLS step against truth value ``y``.

        k = P x / (lambda + x' P x)
        w <- w + k (y - w' x)
        P <- (P - k x' P) / lambda

    P is re-symmetrized each step. The recursion itself is deliberately
    unconstrained: projecting the recursion state onto w >= 0 looks
    harmless but is unstable under rank-deficient features (the clamp
    introduces a persistent prediction bias whose innovation feedback
    re-excites the clamped weights, exponentially). The projection is
    applied where weights leave the filter (CalibState.weight_vector),
    and ``clamp_events`` counts updates that left some component
    negative, i.e. where the projection is active.

    Two further stabilizers guard the textbook law. An all-zero feature
    vector carries no information (it would not touch the batch normal
    equations either), so it is a no-op rather than a forgetting step.
    And because forgetting inflates unexcited directions by 1/lambda
    every step, trace(P) is capped by rescaling (covariance limiting) so
    persistently collinear features cannot wind P up without bound. A
    true numeric breakdown (non-finite entries or loss of positive
    definiteness) degrades to a covariance reset to delta * I, counted in
    ``resets``, with the current weights kept.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != state.w.shape:
        raise ValueError(f"feature shape {x.shape} != weight shape {state.w.shape}")
    if not np.all(np.isfinite(x)) or not math.isfinite(y):
        raise ValueError("rls_update requires finite inputs")
    if not np.any(x):
        return replace(state, n_updates=state.n_updates + 1)

    Px = state.P @ x
    k = Px / (state.lam + x @ Px)
    w_new = state.w + k * (y - state.w @ x)
    P_new = (state.P - np.outer(k, Px)) / state.lam
    P_new = (P_new + P_new.T) / 2.0

    resets = state.resets
    clamps = state.clamp_events
    breakdown = not (np.all(np.isfinite(P_new)) and np.all(np.isfinite(w_new)))
    if not breakdown:
        trace_cap = TRACE_CAP_FACTOR * state.delta * len(x)
        trace = float(np.trace(P_new))
        if trace > trace_cap:
            P_new *= trace_cap / trace
        try:
            np.linalg.cholesky(P_new)
        except np.linalg.LinAlgError:
            breakdown = True
    if breakdown:
        P_new = state.delta * np.eye(len(x))
        w_new = state.w.copy()
        resets += 1
    else:
        clamps += int(np.count_nonzero(w_new < 0))

    return replace(state, w=w_new, P=P_new, n_updates=state.n_updates + 1,
                   clamp_events=clamps, resets=resets)


def nnls(A: np.ndarray, b: np.ndarray, tol: float = 1e-12,
         max_iter: int = 200_000) -> np.ndarray:
    """Least squares with w >= 0: ordinary solve, then projected gradient.

    Dimension generic. Raises RankDeficientError when the feature matrix
    has fewer independent columns than weights; termination is on the KKT
    residual (gradient ~ 0 on active weights, >= 0 on the boundary).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n, d = A.shape
    rank = int(np.linalg.matrix_rank(A)) if n else 0
    if n < d or rank < d:
        raise RankDeficientError(f"need rank {d} from {n} samples, got rank {rank}")

    w_ols, *_ = np.linalg.lstsq(A, b, rcond=None)
    w = np.maximum(w_ols, 0.0)

    AtA = A.T @ A
    Atb = A.T @ b
    lipschitz = float(np.linalg.eigvalsh(AtA)[-1])
    step = 1.0 / lipschitz
    scale = max(1.0, float(np.linalg.norm(Atb)))

    for _ in range(max_iter):
        grad = AtA @ w - Atb
        kkt = np.where(w > 0, np.abs(grad), np.minimum(grad, 0.0))
        if np.max(np.abs(kkt)) <= tol * scale:
            break
        w = np.maximum(w - step * grad, 0.0)
    return w


def batch_fit(samples: Sequence[Tuple]) -> WeightVector:
    """Non-negative least squares over (feature vector, truth) pairs.

    This is the offline oracle the online RLS is checked against. Needs at
    least 4 samples and a full-rank feature matrix.
    """
    if not samples:
        raise RankDeficientError("no samples")
    A = np.array([np.asarray(x, dtype=float) for x, _ in samples])
    b = np.array([float(y) for _, y in samples])
    if A.shape[1] != len(SPECIES):
        raise ValueError(f"expected {len(SPECIES)}-dim features, got {A.shape[1]}")
    return WeightVector.from_array(nnls(A, b))


def evaluate(pred: Mapping[int, float], truth: Mapping[int, float]) -> FitReport:
    """MAE, RMSE, and Pearson r over the shared minute buckets.

    Raises NoOverlapError when fewer than two buckets overlap (Pearson r
    is undefined below two). If either side is constant, r is NaN.
    """
    common = sorted(set(pred) & set(truth))
    if len(common) < 2:
        raise NoOverlapError(f"only {len(common)} shared minute(s)")
    p = np.array([pred[m] for m in common], dtype=float)
    t = np.array([truth[m] for m in common], dtype=float)
    err = p - t
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    if np.std(p) == 0.0 or np.std(t) == 0.0:
        r = float("nan")
    else:
        r = float(np.corrcoef(p, t)[0, 1])
        r = max(-1.0, min(1.0, r))
    return FitReport(mae=mae, rmse=rmse, pearson_r=r, n=len(common))


# --- checkpointing ----------------------------------------------------------

CHECKPOINT_HEADER = "airtraq-calibstate v1"


@dataclass
class Checkpoint:
    """Everything needed to resume calibration or estimate standalone:
    the RLS state, per-node baselines, correction params, and capacity."""

    state: CalibState
    baselines: Dict[str, GasVector] = field(default_factory=dict)
    env_params: EnvCorrectionParams = EnvCorrectionParams()
    capacity_veh_per_min: float = 40.0


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Versioned key-value text; floats via repr so values round-trip at
    full precision."""
    st = ckpt.state
    lines = [CHECKPOINT_HEADER]
    lines.append(f"lambda {st.lam!r}")
    lines.append(f"delta {st.delta!r}")
    lines.append(f"n_updates {st.n_updates}")
    lines.append(f"clamp_events {st.clamp_events}")
    lines.append(f"resets {st.resets}")
    for gas, w in zip(SPECIES, st.w):
        lines.append(f"w {gas.value} {float(w)!r}")
    dim = len(st.w)
    for i in range(dim):
        for j in range(dim):
            lines.append(f"P {i} {j} {float(st.P[i, j])!r}")
    p = ckpt.env_params
    for name in ("co_theta_lo", "co_theta_hi", "co_floor", "hc_rh_slope", "wind_kappa"):
        lines.append(f"env {name} {getattr(p, name)!r}")
    lines.append(f"capacity {ckpt.capacity_veh_per_min!r}")
    for node_id in sorted(ckpt.baselines):
        for gas in SPECIES:
            lines.append(f"baseline {node_id} {gas.value} "
                         f"{ckpt.baselines[node_id][gas]!r}")
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fp:
        lines = [ln.rstrip("\n") for ln in fp if ln.strip()]
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValueError(f"not a calibration checkpoint: {path}")

    scalars: Dict[str, str] = {}
    weights: Dict[str, float] = {}
    pmat: Dict[Tuple[int, int], float] = {}
    env: Dict[str, float] = {}
    baselines: Dict[str, Dict[str, float]] = {}
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "w":
            weights[parts[1]] = float(parts[2])
        elif parts[0] == "P":
            pmat[(int(parts[1]), int(parts[2]))] = float(parts[3])
        elif parts[0] == "env":
            env[parts[1]] = float(parts[2])
        elif parts[0] == "baseline":
            baselines.setdefault(parts[1], {})[parts[2]] = float(parts[3])
        else:
            scalars[parts[0]] = parts[1]

    dim = max(i for i, _ in pmat) + 1 if pmat else len(SPECIES)
    P = np.array([[pmat[(i, j)] for j in range(dim)] for i in range(dim)])
    w = np.array([weights[g.value] for g in SPECIES])
    state = CalibState(
        w=w, P=P,
        lam=float(scalars["lambda"]), delta=float(scalars["delta"]),
        n_updates=int(scalars["n_updates"]),
        clamp_events=int(scalars["clamp_events"]), resets=int(scalars["resets"]),
    )
    params = EnvCorrectionParams(**env) if env else EnvCorrectionParams()
    return Checkpoint(
        state=state,
        baselines={node: GasVector.from_mapping(vals)
                   for node, vals in baselines.items()},
        env_params=params,
        capacity_veh_per_min=float(scalars.get("capacity", 40.0)),
    )
