"""Benchmark problems I-V as black-box control problems.

Solvers only ever receive a :class:`~gnmppi.problem.ControlProblem`, i.e.
batch evaluation of the residual.  Every residual function here works
row-wise with elementwise numpy operations (no BLAS), so a row gives the same
bits whether it is evaluated alone or inside any batch.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from numpy.typing import NDArray

from gnmppi.exceptions import ConfigError
from gnmppi.problem import BlackBoxResidual, ControlProblem, KnownOptimum, ScaledSquaredNorm

Array = NDArray[np.float64]

SQRT2 = np.sqrt(2.0)
SQRT200 = np.sqrt(200.0)
SQRT10 = np.sqrt(10.0)


def make_rosenbrock(tol: float = 1e-3) -> ControlProblem:
    """Problem I: ``(1 - u1)^2 + 100 (u2 - u1^2)^2`` as ``1/2 ||R||^2``."""

    def residual(U: Array) -> Array:
        u1, u2 = U[:, 0], U[:, 1]
        return np.stack([SQRT2 * (1.0 - u1), SQRT200 * (u2 - u1 * u1)], axis=1)

    return ControlProblem(
        "I",
        BlackBoxResidual(residual, 2, 2, "rosenbrock"),
        ScaledSquaredNorm(0.5),
        u0=np.zeros(2),
        known_optimum=KnownOptimum(0.0, tol),
        metadata={"title": "Rosenbrock function"},
    )


def make_rastrigin(tol: float = 1e-3) -> ControlProblem:
    """Problem II: 2-D Rastrigin, split as ``||[u, sqrt(10) sin(pi u)]||^2``.

    Uses ``1 - cos(2 pi x) = 2 sin^2(pi x)``, so the split reproduces
    ``10 + u1^2 - 5 cos(2 pi u1) + u2^2 - 5 cos(2 pi u2)`` exactly.
    """

    def residual(U: Array) -> Array:
        u1, u2 = U[:, 0], U[:, 1]
        return np.stack(
            [u1, u2, SQRT10 * np.sin(np.pi * u1), SQRT10 * np.sin(np.pi * u2)], axis=1
        )

    return ControlProblem(
        "II",
        BlackBoxResidual(residual, 2, 4, "rastrigin"),
        ScaledSquaredNorm(1.0),
        u0=np.array([1.9, 1.7]),
        known_optimum=KnownOptimum(0.0, tol),
        metadata={"title": "Rastrigin function"},
    )


def make_heaviside(tol: float = 1e-3) -> ControlProblem:
    """Problem III: ``R(u) = 1`` for ``u >= 0`` else ``0``, ``Phi = R^2 / 2``."""

    def residual(U: Array) -> Array:
        return (U[:, :1] >= 0.0).astype(float)

    return ControlProblem(
        "III",
        BlackBoxResidual(residual, 1, 1, "heaviside"),
        ScaledSquaredNorm(0.5),
        u0=np.array([0.5]),
        known_optimum=KnownOptimum(0.0, tol),
        metadata={"title": "Heaviside function"},
    )


# --------------------------------------------------------------------------
# Problem IV: linear optimal control of a double integrator
# --------------------------------------------------------------------------


def _rowwise_matvec(M: Array, X: Array) -> Array:
    """``X @ M.T`` for small ``M``, computed with elementwise ops only."""
    out = np.zeros((X.shape[0], M.shape[0]))
    for i in range(M.shape[0]):
        acc = np.zeros(X.shape[0])
        for j in range(M.shape[1]):
            if M[i, j] != 0.0:
                acc = acc + M[i, j] * X[:, j]
        out[:, i] = acc
    return out


@dataclass(frozen=True)
class DoubleIntegratorSpec:
    """Discrete double integrator with quadratic stage and terminal cost.

    Stage cost ``x^T Q x + u^T R_w u`` for ``k = 0..N-1``, terminal cost
    ``x_N^T Q_N x_N``.
    """

    dt: float = 0.1
    N: int = 50
    Q: tuple = ((1.0, 0.0), (0.0, 1.0))
    Q_N: tuple = ((1.0, 0.0), (0.0, 1.0))
    R_w: float = 0.1
    x0: tuple = (1.0, 0.0)
    tol: float = 1e-3

    @property
    def A(self) -> Array:
        return np.array([[1.0, self.dt], [0.0, 1.0]])

    @property
    def B(self) -> Array:
        return np.array([0.0, self.dt])

    def __post_init__(self) -> None:
        for name in ("Q", "Q_N"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.shape != (2, 2) or not np.allclose(M, M.T):
                raise ConfigError(f"{name} must be a symmetric 2x2 matrix")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ConfigError(f"{name} must be positive definite")
        if self.R_w <= 0 or self.N < 1 or self.dt <= 0:
            raise ConfigError("R_w, N and dt must be positive")


def double_integrator_qp(spec: DoubleIntegratorSpec) -> tuple[Array, Array]:
    """Affine residual map ``R(U) = G U + h`` of the lifted QP.

    Used to compute the known optimum; solvers never see it.
    """
    A, B, N = spec.A, spec.B, spec.N
    LqT = np.linalg.cholesky(np.asarray(spec.Q, dtype=float)).T
    LnT = np.linalg.cholesky(np.asarray(spec.Q_N, dtype=float)).T
    Sx = np.zeros((N + 1, 2, 2))
    Su = np.zeros((N + 1, 2, N))
    Sx[0] = np.eye(2)
    for k in range(N):
        Sx[k + 1] = A @ Sx[k]
        Su[k + 1] = A @ Su[k]
        Su[k + 1][:, k] += B
    x0 = np.asarray(spec.x0, dtype=float)
    G_rows, h_rows = [], []
    for k in range(N):
        G_rows.append(SQRT2 * LqT @ Su[k])
        h_rows.append(SQRT2 * LqT @ Sx[k] @ x0)
    G_rows.append(SQRT2 * np.sqrt(spec.R_w) * np.eye(N))
    h_rows.append(np.zeros(N))
    G_rows.append(SQRT2 * LnT @ Su[N])
    h_rows.append(SQRT2 * LnT @ Sx[N] @ x0)
    return np.vstack(G_rows), np.concatenate(h_rows)


def make_double_integrator(spec: DoubleIntegratorSpec | None = None) -> ControlProblem:
    """Problem IV.  ``R(U)`` stacks ``sqrt(2) L_Q^T x_k``, ``sqrt(2 R_w) u_k``
    and ``sqrt(2) L_QN^T x_N`` so that ``1/2 ||R||^2`` is the quadratic cost."""
    spec = spec or DoubleIntegratorSpec()
    A, B, N = spec.A, spec.B, spec.N
    LqT = SQRT2 * np.linalg.cholesky(np.asarray(spec.Q, dtype=float)).T
    LnT = SQRT2 * np.linalg.cholesky(np.asarray(spec.Q_N, dtype=float)).T
    ru = np.sqrt(2.0 * spec.R_w)
    x0 = np.asarray(spec.x0, dtype=float)

    def residual(U: Array) -> Array:
        batch = U.shape[0]
        out = np.empty((batch, 2 * N + N + 2))
        x = np.tile(x0, (batch, 1))
        for k in range(N):
            out[:, 2 * k : 2 * k + 2] = _rowwise_matvec(LqT, x)
            x = _rowwise_matvec(A, x) + U[:, k : k + 1] * B[None, :]
        out[:, 2 * N : 3 * N] = ru * U
        out[:, 3 * N :] = _rowwise_matvec(LnT, x)
        return out

    G, h = double_integrator_qp(spec)
    U_opt = np.linalg.lstsq(G, -h, rcond=None)[0]
    optimum = 0.5 * float(np.sum((G @ U_opt + h) ** 2))
    return ControlProblem(
        "IV",
        BlackBoxResidual(residual, N, 3 * N + 2, "double_integrator"),
        ScaledSquaredNorm(0.5),
        u0=np.zeros(N),
        known_optimum=KnownOptimum(optimum, spec.tol),
        metadata={"title": "Double integrator", "spec": spec},
    )


# --------------------------------------------------------------------------
# Problem V: Furuta pendulum
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FurutaSpec:
    """Rotary (Furuta) pendulum with a uniform-rod pendulum link.

    State ``x = (theta, alpha, theta_dot, alpha_dot)``: arm angle, pendulum
    angle measured from upright, and their rates.  Input is arm torque
    ``gain * u``.  The tracking residual penalizes ``x_k - x_ref`` for
    ``k = 1..N`` (``q_terminal`` weights ``x_N``) and ``u_k`` with ``r_u``.
    """

    m_p: float = 0.3  # pendulum mass [kg]
    L_p: float = 1.0  # pendulum length [m]
    L_r: float = 0.3  # arm length [m]
    J_r: float = 0.05  # arm inertia about the motor axis [kg m^2]
    b_r: float = 0.002  # arm viscous damping
    b_p: float = 0.0005  # pendulum viscous damping
    g: float = 9.81
    gain: float = 1.0
    dt: float = 0.025
    substeps: int = 1
    N: int = 20
    x0: tuple = (0.0, 0.3, 0.0, 0.0)
    x_ref: tuple = (0.0, 0.0, 0.0, 0.0)
    q: tuple = (1.0, 1.0, 0.01, 0.01)
    q_terminal: tuple = (1.0, 1.0, 0.01, 0.01)
    r_u: float = 0.1
    u_scale: float = 1.0
    friction_enabled: bool = False
    friction_fraction: float = 0.05

    @property
    def u_friction(self) -> float:
        return self.friction_fraction * self.u_scale

    def __post_init__(self) -> None:
        for name in ("m_p", "L_p", "L_r", "J_r", "dt"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"Furuta parameter {name} must be positive")
        if self.N < 1 or self.substeps < 1:
            raise ConfigError("N and substeps must be >= 1")
        if len(self.x0) != 4 or len(self.x_ref) != 4:
            raise ConfigError("x0 and x_ref must have 4 entries")
        if min(self.q) < 0 or min(self.q_terminal) < 0 or self.r_u < 0:
            raise ConfigError("weights must be nonnegative")


def furuta_dynamics(spec: FurutaSpec, x: Array, tau: Array) -> Array:
    """Continuous-time state derivative for a batch of states ``(B, 4)``."""
    th_d, al_d = x[:, 2], x[:, 3]
    s, c = np.sin(x[:, 1]), np.cos(x[:, 1])
    l = 0.5 * spec.L_p
    I_p = spec.m_p * spec.L_p**2 / 3.0
    mLl = spec.m_p * spec.L_r * l
    m11 = spec.J_r + spec.m_p * spec.L_r**2 + I_p * s * s
    m12 = mLl * c
    m22 = I_p
    rhs1 = tau - spec.b_r * th_d - 2.0 * I_p * s * c * th_d * al_d + mLl * s * al_d * al_d
    rhs2 = -spec.b_p * al_d + I_p * s * c * th_d * th_d + spec.m_p * spec.g * l * s
    det = m11 * m22 - m12 * m12
    th_dd = (m22 * rhs1 - m12 * rhs2) / det
    al_dd = (m11 * rhs2 - m12 * rhs1) / det
    return np.stack([th_d, al_d, th_dd, al_dd], axis=1)


def furuta_rollout(spec: FurutaSpec, U: Array) -> Array:
    """States ``(B, N + 1, 4)`` from one RK4 step per interval (or ``substeps``)."""
    U = np.atleast_2d(U)
    batch = U.shape[0]
    h = spec.dt / spec.substeps
    X = np.empty((batch, spec.N + 1, 4))
    x = np.tile(np.asarray(spec.x0, dtype=float), (batch, 1))
    X[:, 0] = x
    applied = U
    if spec.friction_enabled:
        applied = np.where(np.abs(U) <= spec.u_friction, 0.0, U)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(spec.N):
            tau = spec.gain * applied[:, k]
            for _ in range(spec.substeps):
                k1 = furuta_dynamics(spec, x, tau)
                k2 = furuta_dynamics(spec, x + 0.5 * h * k1, tau)
                k3 = furuta_dynamics(spec, x + 0.5 * h * k2, tau)
                k4 = furuta_dynamics(spec, x + h * k3, tau)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            X[:, k + 1] = x
    return X


def make_furuta(spec: FurutaSpec | None = None) -> ControlProblem:
    """Problem V (V.i without friction, V.ii with the input dead zone)."""
    spec = spec or FurutaSpec()
    N = spec.N
    wq = np.sqrt(2.0 * np.asarray(spec.q, dtype=float))
    wn = np.sqrt(2.0 * np.asarray(spec.q_terminal, dtype=float))
    wu = np.sqrt(2.0 * spec.r_u)
    x_ref = np.asarray(spec.x_ref, dtype=float)

    def residual(U: Array) -> Array:
        X = furuta_rollout(spec, U)
        err = X[:, 1:] - x_ref
        with np.errstate(over="ignore", invalid="ignore"):
            track = np.concatenate([err[:, :-1] * wq, err[:, -1:] * wn], axis=1)
            return np.concatenate([track.reshape(U.shape[0], -1), wu * U], axis=1)

    name = "V.ii" if spec.friction_enabled else "V.i"
    return ControlProblem(
        name,
        BlackBoxResidual(residual, N, 4 * N + N, f"furuta_{name}"),
        ScaledSquaredNorm(0.5),
        u0=np.zeros(N),
        known_optimum=None,
        metadata={"title": "Furuta pendulum", "spec": spec},
    )


# --------------------------------------------------------------------------
# registry
# --------------------------------------------------------------------------

PROBLEM_IDS = ("I", "II", "III", "IV", "V.i", "V.ii")


def _spec_from(cls, params: dict, **forced):
    known = {f.name for f in fields(cls)}
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} parameters: {sorted(unknown)}")
    clean = {k: tuple(map(tuple, v)) if isinstance(v, list) and v and isinstance(v[0], list)
             else tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    return replace(cls(), **clean, **forced)


def make_problem(problem_id: str, params: dict | None = None) -> ControlProblem:
    """Build a benchmark problem by id with optional parameter overrides."""
    params = dict(params or {})
    if problem_id in ("I", "II", "III"):
        tol = params.pop("tol", 1e-3)
        if params:
            raise ConfigError(f"problem {problem_id} takes only 'tol', got {sorted(params)}")
        return {"I": make_rosenbrock, "II": make_rastrigin, "III": make_heaviside}[problem_id](tol)
    if problem_id == "IV":
        return make_double_integrator(_spec_from(DoubleIntegratorSpec, params))
    if problem_id in ("V.i", "V.ii"):
        params.pop("friction_enabled", None)
        return make_furuta(_spec_from(FurutaSpec, params, friction_enabled=problem_id == "V.ii"))
    raise ConfigError(f"unknown problem id {problem_id!r}; expected one of {PROBLEM_IDS}")
