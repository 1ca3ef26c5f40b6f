"""Kernel-smoothed empirical likelihood solved by the principal each round.

For a held-out datum ``(x, y)`` and agent estimates ``theta_1..theta_k`` the
residuals ``r_j = y - h(x; theta_j)`` give moment vectors

    g_j(beta) = (r_j - mu, (r_j - mu)**2 - sigma2),   beta = (mu, sigma2).

Row ``i`` of the program keeps masses ``p_ij = w_ij / (1 + lam_i @ g_j)``
where ``lam_i`` maximizes the concave dual ``sum_j w_ij log(1 + lam @ g_j)``.
``beta`` minimizes the summed dual values (the profile), which is the same
as maximizing the smoothed log-likelihood ``sum_ij w_ij log p_ij``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from pael.errors import InfeasibleDualError, InvalidArgumentError, NumericError
from pael.model import predict, predict_many

SIGMA2_FLOOR = 1e-8
EPS_FEAS = 1e-10
STATIONARITY_TOL = 1e-9
DIVERGENCE_NORM = 1e8
MAX_NEWTON_ITER = 200
MAX_HALVINGS = 60
# Newton keeps iterating past STATIONARITY_TOL while progress is possible.
_NEWTON_TARGET = 1e-13
_ARMIJO = 1e-4
_FLAT_DECREMENT = 1e-18
_WHITEN_RCOND = 1e-14
_RECESSION_TOL = 1e-12
# Added to the profile for every row whose dual is unbounded at a trial beta.
INFEASIBLE_PENALTY = 1e6

CONVERGED = "converged"
UNBOUNDED = "unbounded"
STALLED = "stalled"
SINGLE_AGENT = "single-agent"


@dataclass(frozen=True)
class BetaParams:
    mu: float
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma2)):
            raise InvalidArgumentError("beta must be finite")
        if self.sigma2 < SIGMA2_FLOOR:
            raise InvalidArgumentError(f"sigma2 must be >= {SIGMA2_FLOOR}")


def moments_from_residuals(residuals, beta: BetaParams) -> np.ndarray:
    a = np.asarray(residuals, dtype=float) - beta.mu
    return np.column_stack([a, a * a - beta.sigma2])


def moment_function(datum, spec, theta, beta: BetaParams) -> np.ndarray:
    x, y = datum
    r = float(y) - predict(spec, theta, x)
    if not np.isfinite(r):
        raise NumericError("non-finite residual")
    return moments_from_residuals([r], beta)[0]


def agent_residuals(datum, spec, thetas) -> np.ndarray:
    """Held-out residual of every agent's estimate at one datum."""
    x, y = datum
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    r = np.array([float(y) - predict_many(spec, t, x)[0] for t in thetas])
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite residual")
    return r


def initial_beta(residuals) -> BetaParams:
    """Moment matching under uniform weights: ``(mean r, max(var r, 10 * floor))``.

    Uniform weights are strictly positive, so this point is feasible for
    every row whose weights have full support.
    """
    r = np.asarray(residuals, dtype=float)
    return BetaParams(r.mean(), max(r.var(), 10.0 * SIGMA2_FLOOR))


# ---------------------------------------------------------------------------
# inner problem: one dual vector per row


@dataclass(frozen=True)
class DualSolve:
    lam: np.ndarray
    status: tuple
    iterations: np.ndarray
    residual: np.ndarray


def _dual_value(w, G, lam):
    shift = G @ lam
    if np.any(shift <= EPS_FEAS - 1.0):
        return -np.inf
    return float(w @ np.log1p(shift))


def _whitening(w, G):
    """Map ``A`` with ``A @ M @ A = I`` on the range of ``M = sum_j w_j g_j g_j^T``."""
    M = (G * w[:, None]).T @ G
    evals, evecs = np.linalg.eigh(M)
    top = evals.max(initial=0.0)
    keep = evals > _WHITEN_RCOND * top if top > 0 else np.zeros_like(evals, dtype=bool)
    V = evecs[:, keep]
    return V / np.sqrt(evals[keep])


def _newton_row(w, G, max_iter):
    """Dual ascent for one row, run in whitened coordinates.

    Whitening makes the Hessian at zero the identity, so moment vectors
    that are nearly collinear (or spread over wildly different scales) do
    not stall the iteration in a flat direction.
    """
    A = _whitening(w, G)
    H = G @ A
    mu = np.zeros(A.shape[1])
    status = CONVERGED
    it = 0
    for it in range(max_iter + 1):
        denom = 1.0 + H @ mu
        q = w / denom
        residual = float(np.abs(q @ G).max(initial=0.0))
        if residual <= _NEWTON_TARGET:
            status = CONVERGED
            break
        if np.linalg.norm(mu) > DIVERGENCE_NORM:
            status = UNBOUNDED
            break
        if it == max_iter:
            status = STALLED
            break
        grad = q @ H
        neg_hess = (H * (q / denom)[:, None]).T @ H
        step = np.linalg.lstsq(neg_hess, grad, rcond=1e-12)[0]
        slope = float(grad @ step)
        along = H @ step
        if slope > 0 and np.all(along >= -_RECESSION_TOL * np.abs(along).max()):
            # No moment decreases along the step: the dual grows without bound.
            status = UNBOUNDED
            break
        full = mu + step
        shift = H @ full
        if np.all(shift > EPS_FEAS - 1.0):
            # Inside the quadratic region f changes below rounding; judge the
            # full step by the stationarity residual instead.
            if np.abs((w / (1.0 + shift)) @ G).max() <= 0.5 * residual:
                mu = full
                continue
        if slope <= _FLAT_DECREMENT:
            status = CONVERGED if residual <= STATIONARITY_TOL else STALLED
            break
        f0 = _dual_value(w, H, mu)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            trial = mu + t * step
            if _dual_value(w, H, trial) >= f0 + _ARMIJO * t * slope:
                break
            t *= 0.5
        else:
            status = CONVERGED if residual <= STATIONARITY_TOL else STALLED
            break
        mu = trial
    return A @ mu, status, it, residual


def solve_lambda_rows(W, G, max_iter: int = MAX_NEWTON_ITER) -> DualSolve:
    """Damped Newton ascent on every row's dual.

    ``W`` is ``(rows, m)`` with probability rows, ``G`` is ``(m, d)`` and is
    shared by all rows. Only moments with positive weight enter a row. A row
    is ``"unbounded"`` when the step is a recession direction or the iterate
    grows past ``DIVERGENCE_NORM``: zero is then outside the relative
    interior of the hull of its supported moments. ``"stalled"`` rows ran
    out of progress above ``STATIONARITY_TOL``.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != W.shape[1]:
        raise InvalidArgumentError(f"moments of shape {G.shape} do not match weights of shape {W.shape}")
    if not np.all(np.isfinite(G)):
        raise NumericError("non-finite moment values")
    rows, d = W.shape[0], G.shape[1]
    lam = np.zeros((rows, d))
    status = []
    iterations = np.zeros(rows, dtype=int)
    residual = np.zeros(rows)
    for r in range(rows):
        sup = W[r] > 0
        lam[r], st, iterations[r], residual[r] = _newton_row(W[r, sup], G[sup], max_iter)
        status.append(st)
    return DualSolve(lam, tuple(status), iterations, residual)


def solve_lambda_row(w_row, g_values):
    """Dual vector for a single row; returns ``(lam, status)``."""
    w_row = np.asarray(w_row, dtype=float)
    if w_row.ndim != 1 or np.any(w_row < 0) or abs(w_row.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError("w_row must be a probability vector")
    sol = solve_lambda_rows(w_row[None, :], g_values)
    return sol.lam[0], sol.status[0]


def dual_hessian(w_row, g_values, lam) -> np.ndarray:
    """Hessian of the row dual, ``-sum_j w_j g_j g_j^T / (1 + lam @ g_j)**2``."""
    G = np.asarray(g_values, dtype=float)
    c = np.asarray(w_row, dtype=float) / (1.0 + G @ np.asarray(lam, dtype=float)) ** 2
    return -(G * c[:, None]).T @ G


def aggregation_probabilities(w, lam, g) -> np.ndarray:
    """Closed-form masses ``w_ij / (1 + lam_i @ g_j)``."""
    W = np.atleast_2d(np.asarray(w, dtype=float))
    denom = 1.0 + np.atleast_2d(lam) @ np.asarray(g, dtype=float).T
    support = W > 0
    if np.any(support & ~(denom > EPS_FEAS)):
        raise InfeasibleDualError("dual variables leave the feasible region")
    return np.where(support, W / np.where(support, denom, 1.0), 0.0)


# ---------------------------------------------------------------------------
# outer problem over beta


@dataclass(frozen=True)
class BetaEvaluation:
    beta: BetaParams
    value: float
    moments: np.ndarray
    duals: DualSolve

    @property
    def degenerate_rows(self) -> tuple:
        return tuple(i for i, s in enumerate(self.duals.status) if s != CONVERGED)

    @property
    def penalized(self) -> bool:
        return bool(self.degenerate_rows)

    @property
    def lam(self) -> np.ndarray:
        """Dual vectors with the zero fallback applied to degenerate rows."""
        lam = self.duals.lam.copy()
        lam[list(self.degenerate_rows)] = 0.0
        return lam


def evaluate_beta(beta: BetaParams, w, residuals) -> BetaEvaluation:
    """Solve every row's dual at ``beta`` and return ``-sum_ij w_ij log(1 + lam_i @ g_j)``.

    Degenerate rows use ``lam_i = 0`` and so contribute nothing to ``value``;
    ``penalized`` tells the caller they were present.
    """
    W = np.asarray(w, dtype=float)
    G = moments_from_residuals(residuals, beta)
    duals = solve_lambda_rows(W, G)
    ok = np.array([s == CONVERGED for s in duals.status])
    value = 0.0
    for i in np.flatnonzero(ok):
        sup = W[i] > 0
        value -= _dual_value(W[i, sup], G[sup], duals.lam[i])
    return BetaEvaluation(beta, value, G, duals)


def outer_beta_objective(beta: BetaParams, w, thetas, datum, spec) -> float:
    """Profile value at ``beta``; zero when every row's weighted moments vanish, negative otherwise."""
    return evaluate_beta(beta, w, agent_residuals(datum, spec, thetas)).value


@dataclass(frozen=True)
class PrincipalSolution:
    lam: np.ndarray
    beta: BetaParams
    p_hat: np.ndarray
    loglik: float
    moments: np.ndarray
    residuals: np.ndarray
    row_status: tuple
    inner_iterations: np.ndarray
    outer_sweeps: int
    evaluations: int
    constraint_residuals: np.ndarray
    cause: str = "ok"

    @property
    def degenerate_rows(self) -> tuple:
        return tuple(i for i, s in enumerate(self.row_status) if s in (UNBOUNDED, STALLED))

    @property
    def degenerate(self) -> bool:
        return len(self.degenerate_rows) == len(self.row_status)


def smoothed_log_likelihood(w, p_hat) -> float:
    """``sum_ij w_ij log p_ij``; ``-inf`` when a supported mass is zero."""
    W = np.asarray(w, dtype=float)
    P = np.asarray(p_hat, dtype=float)
    support = W > 0
    if np.any(P[support] <= 0):
        return -np.inf
    return float(np.sum(W[support] * np.log(P[support])))


def likelihood_bound_check(solution: PrincipalSolution, w, g=None) -> bool:
    """Check ``loglik = sum w log w - sum w log(1 + lam g)`` and the upper bound it implies."""
    W = np.asarray(w, dtype=float)
    G = solution.moments if g is None else np.asarray(g, dtype=float)
    support = W > 0
    denom = 1.0 + solution.lam @ G.T
    if np.any(denom[support] <= 0) or not np.isfinite(solution.loglik):
        return False
    dual_sum = float(np.sum(W[support] * np.log(denom[support])))
    entropy = float(np.sum(W[support] * np.log(W[support])))
    identity = abs(solution.loglik - (entropy - dual_sum)) <= 1e-9
    bound = solution.loglik <= -dual_sum + 1e-12
    return bool(identity and bound)


def _assemble(W, beta, residuals, lam, status, iterations, sweeps, evaluations, cause):
    G = moments_from_residuals(residuals, beta)
    bad = [i for i, s in enumerate(status) if s in (UNBOUNDED, STALLED)]
    lam = lam.copy()
    lam[bad] = 0.0
    P = aggregation_probabilities(W, lam, G)
    constraint = np.abs(P @ G).max(axis=1)
    return PrincipalSolution(
        lam=lam,
        beta=beta,
        p_hat=P,
        loglik=smoothed_log_likelihood(W, P),
        moments=G,
        residuals=np.asarray(residuals, dtype=float),
        row_status=tuple(status),
        inner_iterations=np.asarray(iterations),
        outer_sweeps=sweeps,
        evaluations=evaluations,
        constraint_residuals=constraint,
        cause=cause,
    )


OUTER_METHODS = ("newton", "nelder-mead")
MAX_OUTER_NEWTON = 100
# Predicted profile gain below which the outer Newton iteration stops.
_OUTER_DECREMENT = 1e-14


def solve_principal(w, thetas, datum, spec, beta0: BetaParams = None, max_sweeps: int = 100,
                    sweep_tol: float = 1e-8, method: str = "newton"):
    """Exact row duals nested inside a minimization of the profile over ``beta``.

    ``method="newton"`` uses the analytic profile gradient and Hessian
    (envelope theorem plus implicit differentiation of the duals) and falls
    back to the simplex search when it cannot make progress. ``"nelder-mead"``
    runs only the simplex search on ``(mu, log(sigma2 - floor))``, restarted
    until a sweep improves the profile by at most ``sweep_tol``.

    If every row ends unbounded the solution falls back to ``lam = 0``,
    ``p_hat = w`` and uniform moment matching for ``beta``, with ``cause``
    naming why.
    """
    r = agent_residuals(datum, spec, thetas)
    return solve_principal_from_residuals(
        w, r, beta0=beta0, max_sweeps=max_sweeps, sweep_tol=sweep_tol, method=method
    )


class _Profile:
    """Penalized profile with an evaluation counter and a cache of the last point."""

    def __init__(self, W, r):
        self.W, self.r, self.k = W, r, r.shape[0]
        self.evaluations = 0

    def __call__(self, beta: BetaParams):
        self.evaluations += 1
        ev = evaluate_beta(beta, self.W, self.r)
        if not np.isfinite(ev.value):
            return ev, INFEASIBLE_PENALTY * (self.k + 1)
        return ev, -ev.value + INFEASIBLE_PENALTY * len(ev.degenerate_rows)


def profile_derivatives(ev: BetaEvaluation, W, residuals):
    """Gradient and Hessian of the summed converged-row duals with respect to ``(mu, sigma2)``."""
    r = np.asarray(residuals, dtype=float)
    grad = np.zeros(2)
    hess = np.zeros((2, 2))
    for i, status in enumerate(ev.duals.status):
        if status != CONVERGED:
            continue
        sup = W[i] > 0
        w, a, lam = W[i, sup], r[sup] - ev.beta.mu, ev.duals.lam[i]
        g = np.column_stack([a, a * a - ev.beta.sigma2])
        denom = 1.0 + g @ lam
        q = w / denom
        c = q / denom
        v = np.column_stack([-lam[0] - 2.0 * a * lam[1], np.full(a.shape, -lam[1])])
        f_ll = -(g * c[:, None]).T @ g
        # sum_j q_j J_j^T with J_j^T = [[-1, -2 a_j], [0, -1]]
        f_bl = np.array([[-q.sum(), -2.0 * (q @ a)], [0.0, -q.sum()]]) - (v * c[:, None]).T @ g
        f_bb = np.array([[2.0 * lam[1] * q.sum(), 0.0], [0.0, 0.0]]) - (v * c[:, None]).T @ v
        grad += q @ v
        hess += f_bb - f_bl @ np.linalg.pinv(f_ll, rcond=1e-12, hermitian=True) @ f_bl.T
    return grad, hess


def _two_point_beta(W, r):
    """With two agents the masses are pinned by the mean, so the profile is a sum of KL
    divergences minimized by the column means of ``w``."""
    wbar = W.mean(axis=0)
    mu = float(wbar @ r)
    return BetaParams(mu, max(float(wbar[0] * wbar[1] * (r[1] - r[0]) ** 2), SIGMA2_FLOOR))


def _newton_outer(profile, beta):
    ev, best = profile(beta)
    for it in range(1, MAX_OUTER_NEWTON + 1):
        grad, hess = profile_derivatives(ev, profile.W, profile.r)
        evals, evecs = np.linalg.eigh(hess)
        scale = np.abs(evals).max(initial=0.0)
        if not scale > 0 or not np.all(np.isfinite(grad)):
            return ev, best, it, False
        # Saddle-free step: flip negative curvature, floor tiny curvature.
        curv = np.maximum(np.abs(evals), 1e-12 * scale)
        step = -evecs @ ((evecs.T @ grad) / curv)
        decrement = -float(grad @ step)
        if decrement <= _OUTER_DECREMENT:
            return ev, best, it, True
        t = 1.0
        for _ in range(MAX_HALVINGS):
            mu, s2 = beta.mu + t * step[0], beta.sigma2 + t * step[1]
            if s2 >= SIGMA2_FLOOR:
                trial_ev, trial = profile(BetaParams(mu, s2))
                if trial <= best - _ARMIJO * t * decrement:
                    break
            t *= 0.5
        else:
            # No decrease available at floating-point resolution.
            return ev, best, it, decrement <= 100.0 * _OUTER_DECREMENT
        beta, ev, best = trial_ev.beta, trial_ev, trial
    return ev, best, MAX_OUTER_NEWTON, False


def _simplex_outer(profile, beta0, max_sweeps, sweep_tol):
    r = profile.r
    mu_scale = float(r.std()) or 1.0

    def to_beta(u):
        return BetaParams(beta0.mu + mu_scale * u[0], SIGMA2_FLOOR + np.exp(np.clip(u[1], -700.0, 700.0)))

    def objective(u):
        if not np.all(np.isfinite(u)):
            return INFEASIBLE_PENALTY * (profile.k + 1)
        return profile(to_beta(u))[1]

    u = np.array([0.0, np.log(max(beta0.sigma2 - SIGMA2_FLOOR, np.finfo(float).tiny))])
    best = objective(u)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        simplex = np.array([u, u + [0.1, 0.0], u + [0.0, 0.1]])
        res = minimize(
            objective,
            u,
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-14, "maxiter": 1000},
        )
        gain = best - res.fun if res.fun < best else 0.0
        if gain > 0:
            u, best = np.array(res.x), float(res.fun)
        if gain <= sweep_tol:
            break
    return profile(to_beta(u))[0], sweeps


def solve_principal_from_residuals(w, residuals, beta0=None, max_sweeps=100, sweep_tol=1e-8,
                                   method="newton") -> PrincipalSolution:
    W = np.atleast_2d(np.asarray(w, dtype=float))
    r = np.asarray(residuals, dtype=float)
    k = r.shape[0]
    if W.shape != (k, k):
        raise InvalidArgumentError(f"weights must be {k}x{k}, got {W.shape}")
    if method not in OUTER_METHODS:
        raise InvalidArgumentError(f"unknown outer method {method!r}")

    if k == 1:
        # p_11 = 1 forces both moments to vanish: mu = r_1, sigma2 as small as allowed.
        beta = BetaParams(r[0], SIGMA2_FLOOR)
        return _assemble(W, beta, r, np.zeros((1, 2)), (SINGLE_AGENT,), [0], 0, 0, "single-agent")

    beta0 = initial_beta(r) if beta0 is None else beta0
    profile = _Profile(W, r)
    sweeps = 0
    if np.ptp(r) == 0:
        final = profile(beta0)[0]
    elif method == "newton" and k == 2 and np.all(W > 0):
        final = profile(_two_point_beta(W, r))[0]
    else:
        done = False
        if method == "newton":
            start = beta0
            if profile(beta0)[0].degenerate_rows and r.var() > SIGMA2_FLOOR:
                # The 10x floor can push beta0 past the largest attainable
                # variance; the unpadded moment match is strictly feasible.
                start = BetaParams(r.mean(), r.var())
            final, _, sweeps, done = _newton_outer(profile, start)
            done = done and not final.degenerate_rows
        if not done:
            start = final.beta if method == "newton" else beta0
            final, extra = _simplex_outer(profile, start, max_sweeps, sweep_tol)
            sweeps += extra

    evaluations = profile.evaluations
    if len(final.degenerate_rows) == k:
        cause = "tied-residuals" if r.var() < 10.0 * SIGMA2_FLOOR else "all-rows-unbounded"
        fallback = initial_beta(r)
        start = evaluate_beta(fallback, W, r)
        return _assemble(
            W, fallback, r, np.zeros((k, 2)), start.duals.status, start.duals.iterations, sweeps, evaluations, cause
        )
    return _assemble(
        W, final.beta, r, final.duals.lam, final.duals.status, final.duals.iterations, sweeps, evaluations, "ok"
    )
