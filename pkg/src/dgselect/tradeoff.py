"""Risk–discrepancy trade-off curves on finite alphabets.

For a finite problem (inputs X, representations Z, labels Y, seen/unseen
distributions, a fixed classifier over Z and a loss table), the curve

    T(delta) = min over channels q(z|x) of KL(unseen joint ‖ seen joint)
               subject to seen-domain classification risk <= delta

is computed two independent ways: an exhaustive simplex-grid search
(:func:`tradeoff_bruteforce`, the oracle, guarded to tiny problems) and a
Lagrangian sweep (:func:`tradeoff_solver`) that traces the lower convex
envelope with multiplicative-weights updates and answers each delta by
interpolating the swept (risk, discrepancy) endpoints — an upper bound on the
true optimum.  :func:`check_theorem1` turns the expected monotonicity and
convexity of the curve into an executable report.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import rel_entr

from ._backend import kernels
from .errors import ConvergenceError, InputError

_PROB_ATOL = 1e-12

#: Free-parameter budget for the exhaustive grid (n_x * (n_z - 1)).
BRUTEFORCE_PARAM_LIMIT = 4
#: Hard cap on enumerated channels, to bound memory.
BRUTEFORCE_COMBO_LIMIT = 20_000_000

EG_STEP_SIZE = 0.1
EG_BUDGET = 50_000
EG_WINDOW = 100
EG_TOL = 1e-10


def _check_stochastic(name: str, m: np.ndarray):
    if (m < 0).any():
        raise InputError(f"{name} has negative entries")
    sums = m.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=_PROB_ATOL):
        worst = float(np.abs(sums - 1.0).max())
        raise InputError(f"{name} rows must sum to 1 (worst deviation {worst:.3e})")


@dataclass(frozen=True)
class Channel:
    """Row-stochastic matrix q(z|x): a stochastic representation map."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 2:
            raise InputError("channel must be a 2-d matrix")
        _check_stochastic("channel", q)
        object.__setattr__(self, "q", q)

    @staticmethod
    def uniform(n_x: int, n_z: int) -> "Channel":
        return Channel(np.full((n_x, n_z), 1.0 / n_z))


@dataclass(frozen=True)
class DiscreteDGProblem:
    """Finite-alphabet domain-generalization instance with a fixed classifier.

    ``label_s``/``label_u`` are the seen/unseen label conditionals p(y|x),
    ``classifier_g`` maps each z to a class index, and ``loss_l[pred, true]``
    is the (not necessarily zero-diagonal) loss table.
    """

    n_x: int
    n_z: int
    n_y: int
    p_s_x: np.ndarray
    p_u_x: np.ndarray
    label_s: np.ndarray
    label_u: np.ndarray
    classifier_g: np.ndarray
    loss_l: np.ndarray

    def __post_init__(self):
        p_s = np.asarray(self.p_s_x, dtype=np.float64)
        p_u = np.asarray(self.p_u_x, dtype=np.float64)
        ls = np.asarray(self.label_s, dtype=np.float64)
        lu = np.asarray(self.label_u, dtype=np.float64)
        g = np.asarray(self.classifier_g, dtype=np.int64)
        loss = np.asarray(self.loss_l, dtype=np.float64)

        if min(self.n_x, self.n_z, self.n_y) < 1:
            raise InputError("alphabet sizes must be positive")
        if p_s.shape != (self.n_x,) or p_u.shape != (self.n_x,):
            raise InputError("input marginals must have length n_x")
        if ls.shape != (self.n_x, self.n_y) or lu.shape != (self.n_x, self.n_y):
            raise InputError("label conditionals must be n_x × n_y")
        if g.shape != (self.n_z,):
            raise InputError("classifier must assign a class to each of the n_z symbols")
        if g.min() < 0 or g.max() >= self.n_y:
            raise InputError(f"classifier outputs must lie in [0, {self.n_y})")
        if loss.shape != (self.n_y, self.n_y):
            raise InputError("loss table must be n_y × n_y")
        if not np.isfinite(loss).all() or (loss < 0).any():
            raise InputError("loss table must be finite and non-negative")
        _check_stochastic("p_s_x", p_s[np.newaxis, :])
        _check_stochastic("p_u_x", p_u[np.newaxis, :])
        _check_stochastic("label_s", ls)
        _check_stochastic("label_u", lu)

        object.__setattr__(self, "p_s_x", p_s)
        object.__setattr__(self, "p_u_x", p_u)
        object.__setattr__(self, "label_s", ls)
        object.__setattr__(self, "label_u", lu)
        object.__setattr__(self, "classifier_g", g)
        object.__setattr__(self, "loss_l", loss)

    def risk_table(self) -> np.ndarray:
        """r[x, z]: expected loss of sending x to z, under the seen labels."""
        return self.label_s @ self.loss_l[self.classifier_g].T

    def min_risk(self) -> float:
        """Smallest achievable classification risk (per-row greedy channel)."""
        return float(self.p_s_x @ self.risk_table().min(axis=1))

    def to_json_dict(self) -> dict:
        return {
            "n_x": self.n_x,
            "n_z": self.n_z,
            "n_y": self.n_y,
            "p_s_x": self.p_s_x.tolist(),
            "p_u_x": self.p_u_x.tolist(),
            "label_s": self.label_s.tolist(),
            "label_u": self.label_u.tolist(),
            "classifier_g": self.classifier_g.tolist(),
            "loss_l": self.loss_l.tolist(),
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "DiscreteDGProblem":
        required = (
            "n_x", "n_z", "n_y", "p_s_x", "p_u_x",
            "label_s", "label_u", "classifier_g", "loss_l",
        )
        missing = [k for k in required if k not in doc]
        if missing:
            raise InputError(f"problem document missing fields: {', '.join(missing)}")
        return DiscreteDGProblem(**{k: doc[k] for k in required})


def load_problem(path: str) -> DiscreteDGProblem:
    """Read a problem definition from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"problem file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InputError(f"problem file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise InputError(f"problem file {path} must contain a JSON object")
    return DiscreteDGProblem.from_json_dict(doc)


@dataclass(frozen=True)
class TradeoffPoint:
    delta: float
    t_value: float  # math.inf marks an unattained / unbounded value
    achieving_channel: Optional[Channel]
    feasible: bool


@dataclass(frozen=True)
class TradeoffCurve:
    points: tuple[TradeoffPoint, ...]

    def __post_init__(self):
        pts = tuple(self.points)
        deltas = [p.delta for p in pts]
        if any(b <= a for a, b in zip(deltas, deltas[1:])):
            raise InputError("curve deltas must be strictly increasing")
        if any(np.isfinite(p.t_value) and p.t_value < 0 for p in pts):
            raise InputError("finite t_values must be non-negative")
        object.__setattr__(self, "points", pts)

    def finite_feasible(self) -> list[TradeoffPoint]:
        return [p for p in self.points if p.feasible and math.isfinite(p.t_value)]


def joint_yz(problem: DiscreteDGProblem, channel: Channel, domain: str) -> np.ndarray:
    """Joint label-representation table p(y, z) = Σ_x p(x) p(y|x) q(z|x)."""
    if domain == "seen":
        p_x, label = problem.p_s_x, problem.label_s
    elif domain == "unseen":
        p_x, label = problem.p_u_x, problem.label_u
    else:
        raise InputError(f"domain must be 'seen' or 'unseen', got {domain!r}")
    if channel.q.shape != (problem.n_x, problem.n_z):
        raise InputError(
            f"channel shape {channel.q.shape} does not match problem "
            f"({problem.n_x}, {problem.n_z})"
        )
    return np.einsum("x,xy,xz->yz", p_x, label, channel.q)


def classification_risk(problem: DiscreteDGProblem, channel: Channel) -> float:
    """Expected seen-domain loss of the fixed classifier through the channel."""
    if channel.q.shape != (problem.n_x, problem.n_z):
        raise InputError("channel shape does not match problem")
    return float(np.einsum("x,xz,xz->", problem.p_s_x, channel.q, problem.risk_table()))


def discrepancy_kl(problem: DiscreteDGProblem, channel: Channel) -> float:
    """KL(unseen joint ‖ seen joint); +inf when absolute continuity fails."""
    u = joint_yz(problem, channel, "unseen")
    s = joint_yz(problem, channel, "seen")
    value = float(rel_entr(u, s).sum())
    return max(value, 0.0)


def mix_channels(q1: Channel, q2: Channel, lam: float) -> Channel:
    """Entrywise convex combination lam·q1 + (1−lam)·q2."""
    if not (0.0 <= lam <= 1.0):
        raise InputError(f"mixing weight {lam} outside [0, 1]")
    if q1.q.shape != q2.q.shape:
        raise InputError("cannot mix channels of different shapes")
    return Channel(lam * q1.q + (1.0 - lam) * q2.q)


def _simplex_grid(n_cells: int, m: int) -> np.ndarray:
    """All probability vectors with entries k/m, in lexicographic order."""
    rows: list[list[int]] = []

    def rec(prefix: list[int], remaining: int, cells_left: int):
        if cells_left == 1:
            rows.append(prefix + [remaining])
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, cells_left - 1)

    rec([], m, n_cells)
    return np.asarray(rows, dtype=np.float64) / m


def _validate_deltas(deltas: Sequence[float]) -> np.ndarray:
    arr = np.asarray(list(deltas), dtype=np.float64)
    if arr.size == 0:
        raise InputError("no deltas requested")
    if not np.isfinite(arr).all():
        raise InputError("deltas must be finite")
    if (np.diff(arr) <= 0).any():
        raise InputError("deltas must be strictly increasing")
    return arr


def _grid_tables(problem: DiscreteDGProblem, grid: np.ndarray):
    """Per-row risk and joint-table contributions for every grid row."""
    r_s = problem.risk_table()
    row_risk = problem.p_s_x[:, np.newaxis] * (grid @ r_s.T).T  # (n_x, n_pts)
    contrib_u = np.einsum("x,xy,iz->xiyz", problem.p_u_x, problem.label_u, grid)
    contrib_s = np.einsum("x,xy,iz->xiyz", problem.p_s_x, problem.label_s, grid)
    return (
        np.ascontiguousarray(row_risk),
        np.ascontiguousarray(contrib_u),
        np.ascontiguousarray(contrib_s),
    )


def tradeoff_bruteforce(
    problem: DiscreteDGProblem,
    deltas: Sequence[float],
    grid_step: float,
    deterministic_only: bool = False,
) -> TradeoffCurve:
    """Exhaustive T(delta) on a per-row simplex grid (the oracle path).

    Guarded to problems with at most ``BRUTEFORCE_PARAM_LIMIT`` free channel
    parameters.  With ``deterministic_only`` the grid is restricted to one-hot
    rows, i.e. deterministic representation maps.
    """
    delta_arr = _validate_deltas(deltas)
    free_params = problem.n_x * (problem.n_z - 1)
    if free_params > BRUTEFORCE_PARAM_LIMIT:
        raise InputError(
            f"brute force supports at most {BRUTEFORCE_PARAM_LIMIT} free channel "
            f"parameters, problem has {free_params}"
        )
    if not (0.0 < grid_step <= 0.5):
        raise InputError(f"grid_step must lie in (0, 0.5], got {grid_step}")

    if deterministic_only:
        grid = np.eye(problem.n_z, dtype=np.float64)
    else:
        m = max(1, round(1.0 / grid_step))
        grid = _simplex_grid(problem.n_z, m)
    n_pts = grid.shape[0]
    total = n_pts**problem.n_x
    if total > BRUTEFORCE_COMBO_LIMIT:
        raise InputError(
            f"grid of {total} channels exceeds the enumeration cap "
            f"({BRUTEFORCE_COMBO_LIMIT}); use a coarser grid_step"
        )

    row_risk, contrib_u, contrib_s = _grid_tables(problem, grid)
    risks, kls = kernels.grid_curve_eval(row_risk, contrib_u, contrib_s)

    order = np.argsort(risks, kind="stable")
    risks_sorted = risks[order]
    # prefix minima: best discrepancy among all channels with risk <= r
    kls_sorted = kls[order]
    kls_prefix = np.minimum.accumulate(kls_sorted)
    is_new_min = np.empty(total, dtype=bool)
    is_new_min[0] = True
    is_new_min[1:] = kls_sorted[1:] < kls_prefix[:-1]
    argmin_prefix = order[np.maximum.accumulate(np.where(is_new_min, np.arange(total), 0))]

    points = []
    for delta in delta_arr:
        pos = np.searchsorted(risks_sorted, delta + 1e-12, side="right") - 1
        if pos < 0:
            points.append(TradeoffPoint(float(delta), math.inf, None, False))
            continue
        t_val = float(kls_prefix[pos])
        flat = int(argmin_prefix[pos])
        idx = np.unravel_index(flat, (n_pts,) * problem.n_x)
        q = grid[list(idx), :]
        points.append(TradeoffPoint(float(delta), t_val, Channel(q), True))
    return TradeoffCurve(tuple(points))


def minimize_scalarized(
    problem: DiscreteDGProblem,
    mu: float,
    start: Optional[Channel] = None,
    step_size: float = EG_STEP_SIZE,
    budget: int = EG_BUDGET,
    window: int = EG_WINDOW,
    tol: float = EG_TOL,
) -> tuple[Channel, float, float]:
    """Minimize discrepancy + mu·risk by multiplicative-weights updates.

    Starts from the uniform (strictly interior) channel unless given one.
    Returns the channel plus its exact risk and discrepancy.  Raises
    :class:`ConvergenceError` if the improvement window never closes.
    """
    if mu < 0:
        raise InputError(f"multiplier must be non-negative, got {mu}")
    q0 = start.q if start is not None else Channel.uniform(problem.n_x, problem.n_z).q
    q_best, _obj, iters, residual, converged = kernels.scalarized_solve(
        np.ascontiguousarray(q0),
        float(mu),
        problem.p_u_x,
        problem.p_s_x,
        problem.label_u,
        problem.label_s,
        np.ascontiguousarray(problem.risk_table()),
        step_size,
        budget,
        window,
        tol,
    )
    if not converged:
        raise ConvergenceError(
            f"scalarized solve (mu={mu:g}) did not converge within {iters} iterations; "
            f"residual improvement {residual:.3e}",
            residual=float(residual),
        )
    # renormalize away accumulated float drift before wrapping
    q = np.maximum(q_best, 0.0)
    q /= q.sum(axis=1, keepdims=True)
    channel = Channel(q)
    return channel, classification_risk(problem, channel), discrepancy_kl(problem, channel)


def _check_interior_feasibility(problem: DiscreteDGProblem):
    p_u_y = problem.p_u_x @ problem.label_u
    p_s_y = problem.p_s_x @ problem.label_s
    bad = (p_u_y > _PROB_ATOL) & (p_s_y <= 0.0)
    if bad.any():
        labels = np.nonzero(bad)[0].tolist()
        raise InputError(
            "no channel has finite discrepancy: unseen-domain labels "
            f"{labels} carry mass but have zero seen-domain probability"
        )


def tradeoff_solver(
    problem: DiscreteDGProblem,
    deltas: Sequence[float],
    mu_start: float = 1e-2,
    mu_ratio: float = 1.03,
    mu_cap: float = 1e9,
) -> TradeoffCurve:
    """Trace T(delta) by sweeping the multiplier of the scalarized objective.

    Envelope points come from warm-started multiplicative-weights solves at
    geometrically spaced multipliers; each requested delta is answered by the
    chord between its bracketing sweep points, whose mixture channel attains
    risk exactly delta.  Values are upper bounds on the true curve.
    """
    delta_arr = _validate_deltas(deltas)
    _check_interior_feasibility(problem)

    min_risk = problem.min_risk()
    feasible = delta_arr >= min_risk - 1e-9
    targets = delta_arr[feasible]

    # envelope as (risk, kl, channel), swept from mu = 0 downward in risk
    channel, risk, kl = minimize_scalarized(problem, 0.0)
    envelope: list[tuple[float, float, Channel]] = [(risk, kl, channel)]

    if targets.size and targets.min() < risk:
        target = float(targets.min())
        mu = mu_start
        warm = channel
        prev_risk = risk
        while True:
            warm, risk, kl = minimize_scalarized(problem, mu, start=warm)
            envelope.append((risk, kl, warm))
            if risk <= target or mu >= mu_cap:
                break
            if risk <= min_risk + 1e-9:
                break
            # stagnation: exponentially larger multipliers, no risk movement
            if abs(prev_risk - risk) < 1e-14 and mu > 1e3:
                break
            prev_risk = risk
            mu *= mu_ratio

    # reduce to "best discrepancy among swept channels with risk <= r":
    # non-increasing by construction, and still an upper bound on T everywhere
    envelope.sort(key=lambda e: e[0])
    cleaned: list[tuple[float, float, Channel]] = []
    best_kl = math.inf
    best_ch = envelope[0][2]
    for risk, kl, ch in envelope:
        if kl < best_kl:
            best_kl, best_ch = kl, ch
        if cleaned and risk - cleaned[-1][0] < 1e-12:
            cleaned[-1] = (cleaned[-1][0], best_kl, best_ch)
        else:
            cleaned.append((risk, best_kl, best_ch))

    risks = np.array([e[0] for e in cleaned])

    points = []
    for delta, ok in zip(delta_arr, feasible):
        if not ok:
            points.append(TradeoffPoint(float(delta), math.inf, None, False))
            continue
        pos = np.searchsorted(risks, delta, side="right") - 1
        if pos < 0:
            # feasible but below the swept range: report the safe upper bound
            points.append(TradeoffPoint(float(delta), math.inf, None, True))
            continue
        if pos == len(cleaned) - 1 or delta >= risks[-1]:
            r0, t0, ch0 = cleaned[-1]
            points.append(TradeoffPoint(float(delta), float(t0), ch0, True))
            continue
        r0, t0, ch0 = cleaned[pos]
        r1, t1, ch1 = cleaned[pos + 1]
        lam = (r1 - delta) / (r1 - r0)
        t_val = lam * t0 + (1.0 - lam) * t1
        mixed = mix_channels(ch0, ch1, lam)
        points.append(TradeoffPoint(float(delta), float(t_val), mixed, True))
    return TradeoffCurve(tuple(points))


@dataclass(frozen=True)
class TheoremReport:
    """Executable verdict on the expected curve shape."""

    monotone_pass: bool
    convex_pass: bool
    worst_monotone_violation: float
    worst_convexity_violation: float
    points_used: int

    @property
    def all_pass(self) -> bool:
        return self.monotone_pass and self.convex_pass


def check_theorem1(curve: TradeoffCurve, tol_mono: float, tol_convex: float) -> TheoremReport:
    """Check that finite feasible curve points are non-increasing and convex.

    Monotonicity: t_{i+1} <= t_i + tol_mono.  Convexity: successive secant
    slopes are non-decreasing within tol_convex.
    """
    pts = curve.finite_feasible()
    if len(pts) < 3:
        raise InputError(f"need at least 3 finite feasible points, got {len(pts)}")
    deltas = np.array([p.delta for p in pts])
    values = np.array([p.t_value for p in pts])

    increases = np.diff(values)
    worst_mono = float(increases.max())

    slopes = increases / np.diff(deltas)
    slope_drops = slopes[:-1] - slopes[1:]
    worst_convex = float(slope_drops.max()) if slope_drops.size else 0.0

    return TheoremReport(
        monotone_pass=bool(worst_mono <= tol_mono),
        convex_pass=bool(worst_convex <= tol_convex),
        worst_monotone_violation=worst_mono,
        worst_convexity_violation=worst_convex,
        points_used=len(pts),
    )


def write_curve_csv(curve: TradeoffCurve, path: str):
    """Write a curve as CSV with header delta,t_value,feasible."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "t_value", "feasible"])
        for p in curve.points:
            t = "inf" if math.isinf(p.t_value) else f"{p.t_value:.17g}"
            writer.writerow([f"{p.delta:.17g}", t, "true" if p.feasible else "false"])
