"""Data-driven learning of the optimal regulator from trajectory data.

Nothing in this module multiplies by A, B, or D. One off-policy
trajectory is collected under an arbitrary (not necessarily stabilizing)
gain plus exploration noise; integral data matrices are assembled for a
sweep of tracking offsets X_j; and value iteration runs entirely on the
j = 0 regression equation

    Dxx vecs(P) = Theta [vecs(H); vec(K); vec(M)],

whose blocks recover H = A'P + PA, the improved gain K = R^{-1}B'P, and
M = (D - S(X_j))' P with the Sylvester map S(X) = X E - A X. After
convergence the third blocks across the sweep yield D, S(X_j), and B,
which is enough to pose and solve the trace-optimal regulator-equation
problem from data alone.

Derivation of the regression equation: along dx/dt = A x + B u + D v the
shifted state xbar_j = x - X_j v obeys
dxbar/dt = A xbar + B u + (D - S(X_j)) v, so

    d/dt xbar'P xbar = xbar'H xbar + 2 u'R K xbar + 2 v'M xbar,

and integrating over [t_{l-1}, t_l] gives one row per interval with the
Kronecker identities a'Wb = (b (*) a)' vec(W) and vec(RK) =
(I_n (*) R) vec(K), where (*) is the Kronecker product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import NoSolutionError, RankDeficiencyError
from .matops import kron, lstsq, numerical_rank, unvec, unvecs, vec, vecs, vecv
from .regulator import RegulatorSolution, _check_weights
from .riccati import ViHistory, harmonic_steps, linear_balls, run_value_iteration
from .sysmodels import Exosystem, exploration_noise, simulate

__all__ = [
    "RegressionBundle",
    "LearnedController",
    "ModelRecovery",
    "collect_data",
    "assemble_regression",
    "check_rank",
    "vi_learn",
    "recover_model_artifacts",
    "solve_problem1_datadriven",
    "save_gains",
    "load_gains",
]


@dataclass
class RegressionBundle:
    """Integral data matrices for one tracking offset X_j.

    Rows are collection intervals; ``Ixx`` holds the integrated vecv of
    the shifted state, ``Gxu`` and ``Gxv`` the integrated Kronecker
    products with the input and exostate, ``Dxx`` the vecv differences
    at interval endpoints, and ``Theta`` the assembled regression matrix
    [Ixx | 2 Gxu (I_n (*) R) | 2 Gxv].
    """

    j: int
    Ixx: np.ndarray
    Gxu: np.ndarray
    Gxv: np.ndarray
    Dxx: np.ndarray
    Theta: np.ndarray

    def __post_init__(self):
        rows = self.Ixx.shape[0]
        for name in ("Gxu", "Gxv", "Dxx", "Theta"):
            if getattr(self, name).shape[0] != rows:
                raise ValueError(f"{name} row count differs from Ixx")
        if self.Theta.shape[1] != self.Ixx.shape[1] + self.Gxu.shape[1] + self.Gxv.shape[1]:
            raise ValueError("Theta column count must match the three blocks")

    @property
    def n(self):
        # invert ns = n(n+1)/2
        ns = self.Ixx.shape[1]
        n = int(round((np.sqrt(8 * ns + 1) - 1) / 2))
        if n * (n + 1) // 2 != ns:
            raise ValueError(f"Ixx has {ns} columns, not a triangular number")
        return n

    @property
    def m(self):
        return self.Gxu.shape[1] // self.n

    @property
    def q(self):
        return self.Gxv.shape[1] // self.n

    @property
    def rows(self):
        return self.Ixx.shape[0]

    @property
    def required_rank(self):
        return self.Ixx.shape[1] + self.Gxu.shape[1] + self.Gxv.shape[1]


@dataclass
class LearnedController:
    """Gains learned from data, with the run's diagnostics attached."""

    K: np.ndarray
    L: np.ndarray
    P: np.ndarray
    iterations: int
    resets: int
    rank: int
    rank_required: int
    history: ViHistory | None = field(default=None, repr=False)

    @property
    def rank_checked(self):
        return self.rank >= self.rank_required

    def feedback(self):
        """The control law u = -K x + L v as a simulate() callback."""
        return lambda x, v, t: -self.K @ x + self.L @ v


@dataclass
class ModelRecovery:
    """Matrices reconstructed from converged regression blocks.

    ``S_values[j - 1]`` is the recovered Sylvester image S(X_j) for
    j = 1..h+1 (S(X_0) = 0 by construction and is not stored).
    """

    D_hat: np.ndarray
    B_hat: np.ndarray
    S_values: list[np.ndarray]


def collect_data(model, exo, K0, noise, x0, v0=None, horizon=25.0, dt=1e-3,
                 interval=0.1):
    """Run the off-policy collection phase and log the fine-grid trajectory.

    The input is u = -K0 x + eta(t) with eta the exploration signal
    from ``noise`` (pass None for no exploration). K0 need not
    stabilize; a zero gain is the usual choice. ``interval`` is the
    regression interval the log will later be integrated over; it must
    be an integer multiple of dt and divide the horizon.
    """
    K0 = np.zeros((model.m, model.n)) if K0 is None else np.asarray(K0, dtype=float)
    if K0.shape != (model.m, model.n):
        raise ValueError(f"K0 must be {model.m}x{model.n}")
    _steps_per_interval(interval, dt)
    n_int = interval_count(horizon, interval)
    if n_int < 1:
        raise ValueError("horizon must cover at least one interval")
    if noise is not None and noise.channels != model.m:
        raise ValueError(f"noise must have {model.m} channels, got {noise.channels}")

    if noise is None:
        def controller(x, v, t):
            return -K0 @ x
    else:
        def controller(x, v, t):
            return -K0 @ x + exploration_noise(noise, t)

    exo_run = exo if v0 is None else Exosystem(E=exo.E, v0=v0)
    return simulate(model, exo_run, controller, x0, horizon, dt)


def interval_count(horizon, interval):
    """Number of whole regression intervals in the horizon."""
    count = int(round(horizon / interval))
    if abs(count * interval - horizon) > 1e-9 * max(1.0, horizon):
        count = int(np.floor(horizon / interval + 1e-12))
    return count


def _steps_per_interval(interval, dt):
    steps = int(round(interval / dt))
    if steps < 1 or abs(steps * dt - interval) > 1e-9 * max(1.0, interval):
        raise ValueError(f"interval = {interval} must be an integer multiple of dt = {dt}")
    return steps


def assemble_regression(log, basis, R, interval):
    """Integrate the data matrices for every offset in the basis sweep.

    For each X_j in X_0, X_1, X_1 + N_1, ..., X_1 + N_h the shifted
    state is xbar = x - X_j v. Within each interval the integrals use
    trapezoidal quadrature on the fine grid, except that the input
    factor of the xbar (*) u rows is taken as the held (zero-order)
    value on each fine step, matching how the input was actually
    applied; the xbar factor is still averaged. Endpoint vecv
    differences form Dxx exactly.

    Returns one :class:`RegressionBundle` per j, in sweep order.
    """
    R = np.asarray(R, dtype=float)
    dt = log.dt
    steps = _steps_per_interval(interval, dt)
    n_int = (len(log) - 1) // steps
    if n_int < 1:
        raise ValueError("log too short for a single interval")
    n_fine = n_int * steps

    x, u, v = log.x, log.u, log.v
    n = x.shape[1]
    m = u.shape[1]
    q = v.shape[1]
    if R.shape != (m, m):
        raise ValueError(f"R must be {m}x{m}")
    if basis.X1.shape != (n, q):
        raise ValueError(f"basis shape {basis.X1.shape} does not match log dims ({n}, {q})")
    scale_u = 2.0 * kron(np.eye(n), R)
    ends = np.arange(0, n_fine + 1, steps)
    u_held = u[:n_fine]

    def per_interval(step_values):
        return step_values[:n_fine].reshape(n_int, steps, -1).sum(axis=1)

    bundles = []
    for j, Xj in enumerate(basis.sequence()):
        xbar = x - v @ Xj.T
        vv = vecv(xbar)
        xbar_avg = (0.5 * dt) * (xbar[:-1] + xbar[1:])
        # held input: exact in u, trapezoidal in xbar
        xu = np.einsum("ka,kb->kab", xbar_avg[:n_fine], u_held).reshape(n_fine, n * m)
        xv = np.einsum("ka,kb->kab", xbar, v).reshape(len(log), n * q)
        Ixx = per_interval((0.5 * dt) * (vv[:-1] + vv[1:]))
        Gxu = per_interval(xu)
        Gxv = per_interval((0.5 * dt) * (xv[:-1] + xv[1:]))
        Dxx = vv[ends[1:]] - vv[ends[:-1]]
        Theta = np.hstack([Ixx, Gxu @ scale_u, 2.0 * Gxv])
        bundles.append(RegressionBundle(j=j, Ixx=Ixx, Gxu=Gxu, Gxv=Gxv, Dxx=Dxx, Theta=Theta))
    return bundles


def check_rank(bundle):
    """Rank of the raw data matrix [Ixx | Gxu | Gxv] vs the required count.

    Full column rank (n(n+1)/2 + (m+q)n, which is 87 for the docking
    scenario) makes the per-iteration regression uniquely solvable.
    Returns (ok, rank, required); diagnostic only.
    """
    raw = np.hstack([bundle.Ixx, bundle.Gxu, bundle.Gxv])
    required = bundle.required_rank
    rank = numerical_rank(raw) if bundle.rows else 0
    return rank >= required, rank, required


def vi_learn(bundle_j0, Q, R, P0=None, eps=1e-3, eps_schedule=None,
             ball_schedule=None, max_k=200000, p_ref=None):
    """Value iteration driven purely by the j = 0 regression equation.

    Each iterate solves Theta theta = Dxx vecs(P_k) by least squares;
    the H and K blocks of theta give the update
    P <- P + eps_k (H + Q - K'RK), with the same diminishing-step and
    ball-reset rules as the model-based iteration. The data matrices are
    fixed, so the least-squares operator is factored once up front.

    Returns (P, K, history) with K the regression gain at the stopping
    iterate.

    Raises
    ------
    RankDeficiencyError
        If the data matrix fails the rank condition.
    ConvergenceError
        If max_k passes without the increment test firing.
    """
    ok, rank, required = check_rank(bundle_j0)
    if not ok:
        raise RankDeficiencyError(
            f"data matrix rank {rank} < required {required}; "
            "extend the horizon or enrich the exploration signal",
            rank=rank, required=required,
        )
    n, m = bundle_j0.n, bundle_j0.m
    ns = n * (n + 1) // 2
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    if P0 is None:
        P0 = np.eye(n)
    if eps_schedule is None:
        eps_schedule = harmonic_steps()
    if ball_schedule is None:
        ball_schedule = linear_balls()

    # Theta is fixed across iterations, so solve once for the operator
    # mapping vecs(P) to the stacked unknowns.
    solve_op, _ = lstsq(bundle_j0.Theta, bundle_j0.Dxx)

    def residual_fn(P):
        theta = solve_op @ vecs(P)
        H = unvecs(theta[:ns])
        K = unvec(theta[ns : ns + m * n], m, n)
        return H + Q - K.T @ R @ K, K

    P, K, hist = run_value_iteration(residual_fn, P0, eps, eps_schedule,
                                     ball_schedule, max_k, p_ref=p_ref)
    return P, K, hist


def recover_model_artifacts(bundles, P_final, K_next_final, R):
    """Reconstruct D, B, and the Sylvester images S(X_j) from data.

    Re-solves each bundle's regression at the converged P. The third
    block of the j = 0 solution is vec(D'P) since S(X_0) = 0, giving
    D_hat; for j >= 1 it is vec((D - S(X_j))'P), giving S(X_j) by
    subtraction; and B_hat follows from inverting K = R^{-1}B'P.
    """
    P = np.asarray(P_final, dtype=float)
    n = P.shape[0]
    if numerical_rank(P) < n:
        raise NoSolutionError("P_final is singular; model recovery needs P invertible")
    if not bundles or bundles[0].j != 0:
        raise ValueError("bundles must start with the j = 0 bundle")
    m, q = bundles[0].m, bundles[0].q
    ns = n * (n + 1) // 2
    R = np.asarray(R, dtype=float)

    blocks = []
    rhs = vecs(P)
    for bundle in bundles:
        theta, _ = lstsq(bundle.Theta, bundle.Dxx @ rhs)
        blocks.append(unvec(theta[ns + m * n :], q, n))
    D_hat = np.linalg.solve(P, blocks[0].T)
    S_values = [D_hat - np.linalg.solve(P, Mj.T) for Mj in blocks[1:]]
    B_hat = np.linalg.solve(P, (R @ np.asarray(K_next_final, dtype=float)).T)
    return ModelRecovery(D_hat=D_hat, B_hat=B_hat, S_values=S_values)


def solve_problem1_datadriven(recovery, basis, Qbar=None, Rbar=None):
    """Trace-optimal regulator pair (X, U) from recovered quantities only.

    Every constraint-satisfying X is X_1 + sum_j alpha_j N_j, and by
    linearity of the Sylvester map S(X(alpha)) is known from the
    recovered sweep values. The dynamic regulator equation
    S(X) = B U + D then becomes one linear system in (alpha, vec U),
    solved jointly; any remaining freedom minimizes
    Tr(X'QbarX + U'RbarU) as a closed-form quadratic program.

    Raises
    ------
    RankDeficiencyError
        If B_hat is column-rank deficient (input directions missing).
    NoSolutionError
        If the recovered quantities admit no regulator solution.
    """
    D_hat, B_hat = recovery.D_hat, recovery.B_hat
    n, q = D_hat.shape
    m = B_hat.shape[1]
    h = basis.h
    if len(recovery.S_values) != h + 1:
        raise ValueError(f"recovery holds {len(recovery.S_values)} sweep values, expected {h + 1}")
    if numerical_rank(B_hat) < m:
        raise RankDeficiencyError(
            "B_hat is rank deficient; the input does not excite all directions",
            rank=numerical_rank(B_hat), required=m,
        )
    Qbar, Rbar = _check_weights(Qbar, Rbar, n, m)

    S1 = recovery.S_values[0]
    S_dirs = [recovery.S_values[j] - S1 for j in range(1, h + 1)]
    # columns: effect of alpha_j on vec(S(X)); then the -B U coupling
    M = np.hstack([
        np.column_stack([vec(Sd) for Sd in S_dirs]),
        -kron(np.eye(q), B_hat),
    ])
    rhs = vec(D_hat - S1)
    y0, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    residual = np.linalg.norm(M @ y0 - rhs)
    if residual > 1e-6 * (1.0 + np.linalg.norm(rhs)):
        raise NoSolutionError(
            f"recovered regulator system is inconsistent (residual {residual:.3e})",
            residual=float(residual),
        )

    nullspace = null_space(M)
    if nullspace.shape[1]:
        # trace cost in terms of y = (alpha, vec U): X = X1 + sum alpha_j N_j
        T = np.zeros((n * q + m * q, h + m * q))
        T[: n * q, :h] = np.column_stack([vec(N) for N in basis.basis])
        T[n * q :, h:] = np.eye(m * q)
        c = np.concatenate([vec(basis.X1), np.zeros(m * q)])
        W = np.zeros((n * q + m * q, n * q + m * q))
        W[: n * q, : n * q] = kron(np.eye(q), Qbar)
        W[n * q :, n * q :] = kron(np.eye(q), Rbar)
        G = nullspace.T @ T.T @ W @ T @ nullspace
        g = nullspace.T @ T.T @ (W @ (T @ y0 + c))
        a, *_ = np.linalg.lstsq(G, -g, rcond=None)
        y = y0 + nullspace @ a
    else:
        y = y0

    alpha = y[:h]
    U = unvec(y[h:], m, q)
    X = basis.X1 + sum(a_j * N for a_j, N in zip(alpha, basis.basis))
    S_X = S1 + sum(a_j * Sd for a_j, Sd in zip(alpha, S_dirs))
    return RegulatorSolution(
        X=X,
        U=U,
        residual_dyn=float(np.linalg.norm(S_X - B_hat @ U - D_hat)),
        # the kernel parametrization satisfies the output equation exactly
        residual_out=0.0,
        trace_cost=float(np.trace(X.T @ Qbar @ X) + np.trace(U.T @ Rbar @ U)),
    )


def save_gains(path, controller):
    """Write the learned gains and run diagnostics as JSON."""
    payload = {
        "K": np.asarray(controller.K).tolist(),
        "L": np.asarray(controller.L).tolist(),
        "P": np.asarray(controller.P).tolist(),
        "iterations": int(controller.iterations),
        "resets": int(controller.resets),
        "rank": int(controller.rank),
        "rank_required": int(controller.rank_required),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_gains(path):
    """Read a gains JSON back; matrices come back as arrays."""
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("K", "L", "P"):
        if key in payload:
            payload[key] = np.asarray(payload[key], dtype=float)
    return payload
