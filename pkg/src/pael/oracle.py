"""Brute-force reference implementations for cross-checking the solvers.

Nothing here calls the Newton path, the kernel code or the model's
vectorized predictions. Feasibility comes from plane geometry, duals and
``beta`` from refined grid search, least squares from the normal equations
and risks from per-point loops.
"""

import math
from dataclasses import dataclass

import numpy as np

from pael.errors import InvalidArgumentError, SingularityError

SIGMA2_FLOOR = 1e-8
_GEOM_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Coarse grid of ``points`` per dimension, then ``levels`` refinement passes.

    Each pass re-centers on the incumbent, spans ``span`` old steps to each
    side and shrinks the step by ``refine``.
    """

    points: int = 41
    levels: int = 6
    refine: int = 10
    span: int = 2
    bounds: tuple = None

    def __post_init__(self):
        if self.points < 3 or self.levels < 0 or self.refine < 2 or self.span < 1:
            raise InvalidArgumentError("grid needs points >= 3, levels >= 0, refine >= 2, span >= 1")


@dataclass(frozen=True)
class LambdaOracle:
    feasible: bool
    lam: np.ndarray = None
    value: float = None
    margin: float = 0.0
    reason: str = ""


# ---------------------------------------------------------------------------
# geometry


def _supported(w_row, g_values):
    w = [float(v) for v in np.asarray(w_row, dtype=float)]
    G = np.asarray(g_values, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    if G.shape[0] != len(w) or G.shape[1] > 2:
        raise InvalidArgumentError("grid oracle handles moment dimension 1 or 2 with one value per weight")
    if G.shape[1] == 1:
        G = np.column_stack([G[:, 0], np.zeros(G.shape[0])])
    keep = [j for j, v in enumerate(w) if v > 0]
    return [w[j] for j in keep], [(float(G[j, 0]), float(G[j, 1])) for j in keep], G.shape[1]


def _span(points):
    """Rank of the point set and an orthonormal basis of its span."""
    scale = max((math.hypot(a, b) for a, b in points), default=0.0)
    if scale == 0.0:
        return 0, []
    lead = max(points, key=lambda p: math.hypot(*p))
    u = (lead[0] / math.hypot(*lead), lead[1] / math.hypot(*lead))
    off = max(abs(a * u[1] - b * u[0]) for a, b in points)
    if off <= _GEOM_TOL * scale:
        return 1, [u]
    return 2, [u, (-u[1], u[0])]


def hull_verdict(w_row, g_values):
    """``(feasible, margin)``: whether zero is in the relative interior of the hull of supported moments.

    The margin is positive inside and shrinks to zero at the boundary:
    for planar hulls it is ``pi`` minus the largest angular gap between
    moment directions, for collinear ones the smaller one-sided extent
    relative to the largest.
    """
    _, pts, _ = _supported(w_row, g_values)
    rank, basis = _span(pts)
    if rank == 0:
        return True, math.inf
    if rank == 1:
        u = basis[0]
        t = [a * u[0] + b * u[1] for a, b in pts]
        top = max(abs(v) for v in t)
        margin = min(max(t), -min(t)) / top
        return margin > 0, margin
    # Zero moments do not move the hull's interior; only directions matter.
    scale = max(math.hypot(a, b) for a, b in pts)
    angles = sorted(math.atan2(b, a) for a, b in pts if math.hypot(a, b) > _GEOM_TOL * scale)
    gaps = [angles[i + 1] - angles[i] for i in range(len(angles) - 1)]
    gaps.append(angles[0] + 2.0 * math.pi - angles[-1])
    margin = math.pi - max(gaps)
    return margin > 0, margin


def _feasible_box(coords):
    """Bounding box of ``{t : 1 + t . c_j > 0}`` in reduced coordinates (assumed bounded)."""
    dim = len(coords[0])
    if dim == 1:
        lo = max((-1.0 / c[0] for c in coords if c[0] > 0), default=-math.inf)
        hi = min((-1.0 / c[0] for c in coords if c[0] < 0), default=math.inf)
        return [(lo, hi)]
    verts = []
    for a in range(len(coords)):
        for b in range(a + 1, len(coords)):
            (p, q), (r, s) = coords[a], coords[b]
            det = p * s - q * r
            if abs(det) <= _GEOM_TOL * (math.hypot(p, q) * math.hypot(r, s)):
                continue
            x = (-s + q) / det
            y = (-p + r) / det
            if all(1.0 + x * c0 + y * c1 >= -1e-9 for c0, c1 in coords):
                verts.append((x, y))
    xs = [v[0] for v in verts]
    ys = [v[1] for v in verts]
    return [(min(xs), max(xs)), (min(ys), max(ys))]


def _grid_values(weights, coords, axes):
    """Objective on the tensor grid spanned by ``axes``; infeasible points get ``-inf``."""
    mesh = np.meshgrid(*axes, indexing="ij")
    total = np.zeros(mesh[0].shape)
    feasible = np.ones(mesh[0].shape, dtype=bool)
    for wj, c in zip(weights, coords):
        arg = np.ones(mesh[0].shape)
        for m, cj in zip(mesh, c):
            arg = arg + m * cj
        feasible &= arg > 0
        total = total + wj * np.log(np.where(arg > 0, arg, 1.0))
    return mesh, np.where(feasible, total, -np.inf)


def grid_lambda(w_row, g_values, grid: GridSpec = GridSpec()) -> LambdaOracle:
    """Grid maximizer of ``sum_j w_j log(1 + lam @ g_j)``.

    The search runs in the span of the supported moments (directions
    orthogonal to it leave the objective unchanged), so the returned
    ``lam`` is the minimum-norm maximizer up to grid resolution.
    """
    weights, pts, dim = _supported(w_row, g_values)
    feasible, margin = hull_verdict(w_row, g_values)
    if not feasible:
        return LambdaOracle(False, margin=margin, reason="zero outside the relative interior of the moment hull")
    rank, basis = _span(pts)
    if rank == 0:
        return LambdaOracle(True, np.zeros(dim), 0.0, margin)
    coords = [tuple(p[0] * u[0] + p[1] * u[1] for u in basis) for p in pts]
    box = list(grid.bounds) if grid.bounds is not None else _feasible_box(coords)

    def evaluate(axes):
        mesh, vals = _grid_values(weights, coords, axes)
        flat = int(np.argmax(vals))
        return float(vals.flat[flat]), [float(m.flat[flat]) for m in mesh]

    best_v, best_t = evaluate([np.linspace(lo, hi, grid.points)[1:-1] for lo, hi in box])
    if not math.isfinite(best_v):
        return LambdaOracle(False, margin=margin, reason="no feasible grid point")
    if best_v < 0.0:
        # The origin is always feasible with value 0, so a coarse grid never sits below it.
        best_v, best_t = 0.0, [0.0] * len(box)
    steps = [(hi - lo) / (grid.points - 1) for lo, hi in box]
    best_v, best_t = _refine(evaluate, best_v, best_t, steps, grid)
    lam = np.zeros(2)
    for t, u in zip(best_t, basis):
        lam += t * np.asarray(u)
    return LambdaOracle(True, lam[:dim], best_v, margin)


def _refine(evaluate, best_v, best_t, steps, grid, maximize=True, max_moves=500):
    """Local passes around the incumbent.

    Each level shrinks the step by ``grid.refine``. Within a level, a pass
    whose best point lands on the edge of its window moves the window there
    at the same step, so a ridge is followed out of a poorly sampled corner.
    """
    sign = 1.0 if maximize else -1.0
    n = grid.span * grid.refine
    moves = 0
    for _ in range(grid.levels):
        h = [s / grid.refine for s in steps]
        while True:
            center = best_t
            v, t = evaluate([c + hi * np.arange(-n, n + 1) for c, hi in zip(center, h)])
            if not sign * (v - best_v) > 0:
                break
            best_v, best_t = v, t
            on_edge = any(abs(ti - ci) > (n - 0.5) * hi for ti, ci, hi in zip(t, center, h))
            moves += 1
            if not on_edge or moves >= max_moves:
                break
        steps = h
    return best_v, best_t


# ---------------------------------------------------------------------------
# predictions, residuals and the outer problem


def _phi(spec, x):
    x = [float(v) for v in np.atleast_1d(x)]
    out = [1.0]
    if spec.feature_map == "raw":
        out += x
    elif spec.feature_map == "polynomial":
        for p in range(1, spec.degree + 1):
            out += [v**p for v in x]
    else:
        omega, phase = spec._fourier
        for m in range(spec.order):
            out.append(math.cos(sum(float(omega[m, a]) * x[a] for a in range(len(x))) + float(phase[m])))
    return out


def naive_predict(spec, theta, x) -> float:
    """Single-point prediction written with scalar loops."""
    theta = [float(v) for v in theta]
    if spec.family == "linear-basis":
        return sum(t * f for t, f in zip(theta, _phi(spec, x)))
    x = [float(v) for v in np.atleast_1d(x)]
    h, d = spec.hidden, spec.input_dim
    total = theta[-1]
    for u in range(h):
        pre = theta[h * d + u] + sum(theta[u * d + a] * x[a] for a in range(d))
        total += theta[h * d + h + u] * math.tanh(pre)
    return total


def naive_risk(X, y, spec, theta) -> float:
    """Mean squared error accumulated one point at a time."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    total = 0.0
    for xi, yi in zip(X, np.asarray(y, dtype=float)):
        e = float(yi) - naive_predict(spec, theta, xi)
        total += e * e
    return total / len(y)


def _moments(r, mu, sigma2):
    return [(rj - mu, (rj - mu) ** 2 - sigma2) for rj in r]


OUTER_GRID = GridSpec(points=11, levels=4, refine=4, span=3)
INNER_GRID = GridSpec(points=15, levels=6, refine=5, span=1)
# Each infeasible row costs more than any achievable summed dual value.
_ROW_COST = 1e6
_MARGIN_FLOOR = 1e-4


def grid_beta_from_residuals(w, residuals, grid: GridSpec = OUTER_GRID, inner: GridSpec = INNER_GRID):
    """Grid minimizer of the summed row duals over ``(mu, sigma2)``.

    Points with more infeasible rows lose to points with fewer; ties break
    on the summed dual value. Returns ``(mu, sigma2, value, n_infeasible)``.
    """
    W = np.atleast_2d(np.asarray(w, dtype=float))
    r = [float(v) for v in residuals]
    k = len(r)
    if k == 1:
        mus = np.linspace(r[0] - 1.0, r[0] + 1.0, grid.points)
        mu = float(mus[int(np.argmin(np.abs(mus - r[0])))])
        return mu, SIGMA2_FLOOR, 0.0, 0
    spread = max(r) - min(r)
    bounds = grid.bounds or [(min(r), max(r)), (SIGMA2_FLOOR, max(spread**2, 10 * SIGMA2_FLOOR))]

    seen = {}

    def score(mu, s2):
        if s2 < SIGMA2_FLOOR:
            return math.inf
        key = (round(mu, 12), round(s2, 12))  # overlapping windows differ only in the last ulps
        if key not in seen:
            seen[key] = _score(mu, s2)
        return seen[key]

    def _score(mu, s2):
        g = _moments(r, mu, s2)
        total = 0.0
        for i in range(k):
            res = grid_lambda(W[i], g, inner)
            # A hull barely containing zero has a near-unbounded dual that no grid resolves.
            total += res.value if res.feasible and res.margin >= _MARGIN_FLOOR else _ROW_COST
        return total

    def evaluate(axes):
        best = (math.inf, None)
        for mu in axes[0]:
            for s2 in axes[1]:
                v = score(float(mu), float(s2))
                if v < best[0]:
                    best = (v, [float(mu), float(s2)])
        return best

    best_v, best_t = evaluate([np.linspace(lo, hi, grid.points) for lo, hi in bounds])
    steps = [(hi - lo) / (grid.points - 1) for lo, hi in bounds]
    best_v, best_t = _refine(evaluate, best_v, best_t, steps, grid, maximize=False)
    bad = int(best_v // _ROW_COST)
    return best_t[0], best_t[1], best_v - bad * _ROW_COST, bad


def grid_beta(w, thetas, datum, spec, grid: GridSpec = OUTER_GRID):
    """Grid ``beta`` from agent estimates and a held-out datum; residuals use scalar predictions."""
    x, y = datum
    r = [float(y) - naive_predict(spec, th, x) for th in thetas]
    mu, s2, _, _ = grid_beta_from_residuals(w, r, grid)
    return mu, s2


# ---------------------------------------------------------------------------
# centralized baseline


def design_matrix(spec, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.array([_phi(spec, xi) for xi in X])


def least_squares(X, y, spec) -> np.ndarray:
    """Solve the normal equations ``Phi^T Phi theta = Phi^T y``."""
    if spec.family != "linear-basis":
        raise InvalidArgumentError("least squares oracle needs the linear-basis family")
    Phi = design_matrix(spec, X)
    if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
        raise SingularityError("design matrix is rank deficient")
    gram = Phi.T @ Phi
    return np.linalg.solve(gram, Phi.T @ np.asarray(y, dtype=float))
