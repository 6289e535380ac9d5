"""Rate-shifted Riccati design and decay certification.

To enforce a decay rate gamma, the state is rescaled by e^{gamma t}:
the rescaled modal system keeps the same structure with kernel decay
delta - gamma and a per-mode second-order form whose companion matrix
has every eigenvalue shifted by exactly +gamma.  A standard LQR design
on the truncated shifted system then yields a feedback whose closed
loop, mapped back, decays faster than gamma.

The quadratic state cost weights positions by lambda^{2 alpha}, so the
value function controls the weighted integral of |A^alpha y| and the
Rayleigh bounds of the solution matrix tie it to |A^{alpha-1/2} y_0|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    AlphaRangeError,
    DecayViolationError,
    DimensionMismatchError,
    GammaExceedsDeltaError,
    GammaOutOfRangeError,
    NotStabilizableError,
    SolverFailureError,
)
from .spectral import MemoryKernel, Spectrum, partition_spectrum
from .simulate import Trajectory, fit_decay_rate, simulate_ode
from .synthesis import ActuatorSet

ALPHA_MAX = 0.75
RESIDUAL_TOL = 1e-8
DEFAULT_MIN_K = 16


@dataclass(frozen=True, eq=False)
class ShiftedSystem:
    """Truncated companion form of the rate-shifted dynamics."""

    gamma: float
    alpha: float
    kernel_tilde: MemoryKernel
    truncation_k: int
    lambdas: np.ndarray
    p_2k_shifted: np.ndarray
    q_2km: np.ndarray
    weight: np.ndarray
    c_km: np.ndarray

    @property
    def m_actuators(self) -> int:
        return self.q_2km.shape[1]


def shifted_coefficients(lam: float, kernel: MemoryKernel,
                         gamma: float) -> tuple:
    """Second-order coefficients of one rate-shifted mode.

    The shifted mode obeys a'' + (lam + delta - 2 gamma) a' +
    (lam (b + delta - gamma) - gamma (delta - gamma)) a = w, with
    w = u' + (delta - gamma) u.
    """
    b, delta = kernel.b, kernel.delta
    s = lam + delta - 2.0 * gamma
    p = lam * (b + delta - gamma) - gamma * (delta - gamma)
    return s, p


def build_shifted(spectrum: Spectrum, kernel: MemoryKernel, gamma: float,
                  actuators: ActuatorSet, truncation_k: int | None = None,
                  alpha: float = 0.5) -> ShiftedSystem:
    """Assemble the shifted companion system for the first K modes.

    Requires 0 <= gamma < delta so the shifted kernel still decays
    (gamma = 0 reproduces the unshifted companion), and the cost
    exponent alpha in [0, 3/4].  K defaults to max(2N, 16) where N is
    the number of modes at or below rate gamma, clamped to the modes
    the spectrum provides; explicit K must cover all N slow modes.
    """
    if not 0.0 <= alpha <= ALPHA_MAX:
        raise AlphaRangeError(
            f"cost exponent alpha={alpha:g} outside [0, {ALPHA_MAX:g}]")
    if gamma < 0.0:
        raise GammaOutOfRangeError(f"target rate gamma={gamma:g} is negative")
    if gamma >= kernel.delta:
        raise GammaExceedsDeltaError(
            f"target rate gamma={gamma:g} must stay below the kernel decay "
            f"delta={kernel.delta:g}")
    if gamma == 0.0:
        n_slow = 0
    else:
        part = partition_spectrum(spectrum, kernel, gamma,
                                  check_degenerate=False)
        n_slow = part.n_total
    total = spectrum.n_modes
    if truncation_k is None:
        k = min(max(2 * n_slow, DEFAULT_MIN_K), total)
        k = max(k, n_slow)
    else:
        k = int(truncation_k)
        if k < n_slow:
            raise DimensionMismatchError(
                f"truncation K={k} drops slow modes (need at least {n_slow})")
        if k > total:
            raise DimensionMismatchError(
                f"truncation K={k} exceeds the {total} modes available")
    lams, _ = spectrum.expanded(k)
    kernel_tilde = MemoryKernel(b=kernel.b, delta=kernel.delta - gamma) \
        if gamma > 0.0 else kernel

    s_diag = np.array([shifted_coefficients(lam, kernel, gamma)[0]
                       for lam in lams])
    p_diag = np.array([shifted_coefficients(lam, kernel, gamma)[1]
                       for lam in lams])
    p = np.zeros((2 * k, 2 * k))
    p[:k, k:] = np.eye(k)
    p[k:, :k] = -np.diag(p_diag)
    p[k:, k:] = -np.diag(s_diag)

    c = actuators.rows(k)
    q = np.zeros((2 * k, actuators.count))
    q[k:, :] = c

    w = np.zeros((2 * k, 2 * k))
    w[:k, :k] = np.diag(lams ** (2.0 * alpha))

    return ShiftedSystem(gamma=gamma, alpha=alpha, kernel_tilde=kernel_tilde,
                         truncation_k=k, lambdas=lams, p_2k_shifted=p,
                         q_2km=q, weight=w, c_km=c)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Stabilizing solution of the shifted-system Riccati equation."""

    r_matrix: np.ndarray
    gain: np.ndarray
    residual: float
    alpha: float
    gamma: float
    closed_loop_eigs: np.ndarray
    system: ShiftedSystem

    @property
    def truncation_k(self) -> int:
        return self.system.truncation_k


def _are_residual(p, q, w, r) -> float:
    res = p.T @ r + r @ p - r @ q @ q.T @ r + w
    return float(np.linalg.norm(res) / max(np.linalg.norm(r), 1e-300))


def _stabilizability_check(p, q):
    dim = p.shape[0]
    eigs = np.linalg.eigvals(p)
    for ev in eigs:
        if ev.real >= -1e-12:
            pencil = np.hstack([p - ev * np.eye(dim), q]).astype(complex)
            s = np.linalg.svd(pencil, compute_uv=False)
            if s[0] == 0.0 or s[-1] <= 1e-10 * s[0]:
                raise NotStabilizableError(
                    f"mode at eigenvalue {ev:.6g} cannot be moved by the "
                    "actuators; the shifted system is not stabilizable")


def solve_are(shifted: ShiftedSystem) -> RiccatiSolution:
    """Stabilizing Riccati solution, gain and closed-loop spectrum.

    Solves P~' R + R P~ - R Q~ Q~' R + W = 0 with unit input cost by the
    dense invariant-subspace method, then polishes with Newton steps
    (each a Lyapunov solve) while the relative residual exceeds 1e-8.
    With no actuators the equation degenerates to a Lyapunov equation,
    which only has the required interpretation when the shifted system
    is already stable.
    """
    p = shifted.p_2k_shifted
    q = shifted.q_2km
    w = shifted.weight
    dim = p.shape[0]
    m = q.shape[1]

    if dim == 0:
        return RiccatiSolution(
            r_matrix=np.zeros((0, 0)), gain=np.zeros((m, 0)), residual=0.0,
            alpha=shifted.alpha, gamma=shifted.gamma,
            closed_loop_eigs=np.zeros(0, complex), system=shifted)

    p_eigs = np.linalg.eigvals(p)
    stable_open = bool(np.all(p_eigs.real < 0.0))

    if np.linalg.norm(w) == 0.0 and stable_open:
        r = np.zeros((dim, dim))
    elif m == 0:
        if not stable_open:
            raise NotStabilizableError(
                "no actuators and the shifted system has non-decaying modes")
        r = scipy.linalg.solve_continuous_lyapunov(p.T, -w)
    else:
        _stabilizability_check(p, q)
        try:
            r = scipy.linalg.solve_continuous_are(p, q, w, np.eye(m))
        except np.linalg.LinAlgError as exc:
            raise NotStabilizableError(
                f"Riccati solve failed: {exc}") from exc
        except ValueError as exc:
            raise SolverFailureError(
                f"Riccati solver rejected the problem: {exc}") from exc

    r = 0.5 * (r + r.T)
    residual = _are_residual(p, q, w, r)
    for _ in range(15):
        if residual <= RESIDUAL_TOL:
            break
        a_cl = p - q @ (q.T @ r)
        rhs = -(w + r @ q @ q.T @ r)
        try:
            r_new = scipy.linalg.solve_continuous_lyapunov(a_cl.T, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverFailureError(
                f"Newton refinement failed: {exc}") from exc
        r_new = 0.5 * (r_new + r_new.T)
        new_residual = _are_residual(p, q, w, r_new)
        if not new_residual < residual:
            break
        r, residual = r_new, new_residual
    if residual > RESIDUAL_TOL:
        raise SolverFailureError(
            f"Riccati residual {residual:.3e} above {RESIDUAL_TOL:.1e} "
            "after refinement")

    scale = float(np.linalg.norm(r))
    min_eig = float(np.linalg.eigvalsh(r)[0]) if dim else 0.0
    if min_eig < -1e-10 * max(scale, 1.0):
        raise SolverFailureError(
            f"Riccati solution indefinite (min eigenvalue {min_eig:.3e})")

    gain = q.T @ r
    cl_eigs = np.linalg.eigvals(p - q @ gain)
    cl_eigs = cl_eigs[np.argsort(-cl_eigs.real)]
    if cl_eigs.size and cl_eigs[0].real >= 1e-10:
        raise SolverFailureError(
            f"closed loop not stable: leading eigenvalue {cl_eigs[0]:.6g}")
    return RiccatiSolution(r_matrix=r, gain=gain, residual=residual,
                           alpha=shifted.alpha, gamma=shifted.gamma,
                           closed_loop_eigs=cl_eigs, system=shifted)


def feedback_gain_to_control(solution: RiccatiSolution, state,
                             actuators: ActuatorSet | None = None) -> np.ndarray:
    """Actuator amplitudes of the feedback law at one (shifted) state."""
    state = np.asarray(state, dtype=float).reshape(-1)
    if state.size != solution.gain.shape[1]:
        raise DimensionMismatchError(
            f"state has dimension {state.size}, gain expects "
            f"{solution.gain.shape[1]}")
    if actuators is not None and actuators.count != solution.gain.shape[0]:
        raise DimensionMismatchError(
            f"gain drives {solution.gain.shape[0]} actuators, "
            f"set provides {actuators.count}")
    return -(solution.gain @ state)


class ShiftedStateFeedback:
    """Dynamic realization of the gain in original variables.

    The design returns w~ = -K xi in shifted coordinates; undoing the
    exponential rescaling leaves a time-invariant law on the original
    state: w = -K (alpha, alpha' + gamma alpha), fed through the
    actuator dynamics v' = w - delta v, u = C v.  Exposes the interface
    the RK4 integrator expects from dynamic controllers, so the closed
    loop can be simulated and certified without leaving the original
    frame (actuator spillover onto the simulated tail modes included).
    """

    def __init__(self, solution: RiccatiSolution, actuators: ActuatorSet,
                 kernel: MemoryKernel, n_modes_sim: int):
        self.gain = solution.gain
        self.gamma = solution.gamma
        self.k_design = solution.truncation_k
        if n_modes_sim < self.k_design:
            raise DimensionMismatchError(
                f"simulation carries {n_modes_sim} modes, the design "
                f"needs {self.k_design}")
        self.c_rows = actuators.rows(n_modes_sim)
        self.kernel = kernel
        self.m = actuators.count
        self.aux0 = np.zeros(self.m)
        sys = solution.system
        self.lambdas_design = sys.lambdas

    def _w(self, alpha, z, v):
        k = self.k_design
        lam = self.lambdas_design
        b, delta = self.kernel.b, self.kernel.delta
        u_design = self.c_rows[:k] @ v
        a = alpha[:k]
        a_dot = -lam * a - b * lam * z[:k] + u_design
        xi = np.concatenate([a, a_dot + self.gamma * a])
        return -(self.gain @ xi)

    def modal_input(self, t, alpha, z, aux):
        return self.c_rows @ aux

    def aux_derivative(self, t, alpha, z, aux):
        w = self._w(alpha, z, aux)
        return w - self.kernel.delta * aux


def make_closed_loop(solution: RiccatiSolution, actuators: ActuatorSet,
                     kernel: MemoryKernel,
                     n_modes_sim: int | None = None) -> ShiftedStateFeedback:
    """Feedback controller ready for the RK4 integrator."""
    k = solution.truncation_k if n_modes_sim is None else int(n_modes_sim)
    return ShiftedStateFeedback(solution, actuators, kernel, k)


@dataclass(frozen=True, eq=False)
class ClosedLoopRun:
    """Shifted-frame closed-loop run via matrix exponentials.

    States are sampled columns of the autonomous system
    (xi, v~, z~)' = A (xi, v~, z~); mapping back multiplies by
    e^{-gamma t}.  Serves as the second, integrator-free route to the
    closed loop.
    """

    grid: np.ndarray
    xi: np.ndarray        # (samples, 2K)
    v_tilde: np.ndarray   # (samples, M)
    z_tilde: np.ndarray   # (samples, K)
    w_tilde: np.ndarray   # (samples, M)
    solution: RiccatiSolution

    def to_trajectory(self, frac_alpha: float | None = None) -> Trajectory:
        sol = self.solution
        k = sol.truncation_k
        decay = np.exp(-sol.gamma * self.grid)[:, None]
        alpha = decay * self.xi[:, :k]
        z = decay * self.z_tilde
        controls = (decay * self.v_tilde) @ sol.system.c_km.T
        return Trajectory(
            grid=self.grid, alpha=alpha, z=z, lambdas=sol.system.lambdas,
            controls=controls,
            control_labels=tuple(f"u_{i+1}" for i in range(k)),
            frac_alpha=sol.alpha if frac_alpha is None else frac_alpha)

    def shifted_cost(self) -> float:
        """Simpson value of the LQR cost integral along the run."""
        from scipy.integrate import simpson
        w_mat = self.solution.system.weight
        state_term = np.einsum("si,ij,sj->s", self.xi, w_mat, self.xi)
        ctrl_term = np.sum(self.w_tilde ** 2, axis=1)
        return float(simpson(state_term + ctrl_term, x=self.grid))


def embed_initial(solution: RiccatiSolution, y0) -> np.ndarray:
    """Shifted companion state of modal initial data with idle actuators.

    With u(0) = 0 the natural initial velocity is alpha'(0) = -lam a0,
    so the shifted state starts at (a0, (gamma - lam) a0).
    """
    sys = solution.system
    k = sys.truncation_k
    a0 = np.asarray(y0, dtype=float).reshape(-1)
    if a0.size > k:
        raise DimensionMismatchError(
            f"initial data has {a0.size} modes, design retains {k}")
    if a0.size < k:
        a0 = np.concatenate([a0, np.zeros(k - a0.size)])
    return np.concatenate([a0, (solution.gamma - sys.lambdas) * a0])


def simulate_closed_loop(solution: RiccatiSolution, y0, t_max: float, *,
                         samples: int = 2001) -> ClosedLoopRun:
    """Propagate the autonomous shifted closed loop on a uniform grid."""
    sys = solution.system
    k = sys.truncation_k
    m = sys.m_actuators
    gain = solution.gain
    dt_kernel = sys.kernel_tilde.delta

    dim = 2 * k + m + k
    a = np.zeros((dim, dim))
    a[:2 * k, :2 * k] = sys.p_2k_shifted - sys.q_2km @ gain
    a[2 * k:2 * k + m, :2 * k] = -gain
    a[2 * k:2 * k + m, 2 * k:2 * k + m] = -dt_kernel * np.eye(m)
    a[2 * k + m:, :k] = np.eye(k)
    a[2 * k + m:, 2 * k + m:] = -dt_kernel * np.eye(k)

    grid = np.linspace(0.0, t_max, samples)
    h = grid[1] - grid[0] if samples > 1 else 0.0
    step = scipy.linalg.expm(a * h)
    xi0 = embed_initial(solution, y0)
    state = np.concatenate([xi0, np.zeros(m + k)])
    out = np.empty((samples, dim))
    for i in range(samples):
        out[i] = state
        if i + 1 < samples:
            state = step @ state
    xi = out[:, :2 * k]
    v_tilde = out[:, 2 * k:2 * k + m]
    z_tilde = out[:, 2 * k + m:]
    w_tilde = -(xi @ gain.T)
    return ClosedLoopRun(grid=grid, xi=xi, v_tilde=v_tilde, z_tilde=z_tilde,
                         w_tilde=w_tilde, solution=solution)


def rayleigh_bounds(solution: RiccatiSolution) -> tuple:
    """Extremal Rayleigh quotients of R against the |A^{alpha-1/2}| norm.

    Quotients are taken over companion states embedded from modal data
    (idle actuators), the same embedding certification uses.  For
    alpha in [1/2, 3/4] the lower bound is positive; below 1/2 only the
    upper bound carries meaning.
    """
    sys = solution.system
    k = sys.truncation_k
    if k == 0:
        return 0.0, 0.0
    e = np.vstack([np.eye(k), np.diag(solution.gamma - sys.lambdas)])
    m1 = e.T @ solution.r_matrix @ e
    m1 = 0.5 * (m1 + m1.T)
    d = np.diag(sys.lambdas ** (2.0 * sys.alpha - 1.0))
    vals = scipy.linalg.eigh(m1, d, eigvals_only=True)
    return float(vals[0]), float(vals[-1])


@dataclass(frozen=True, eq=False)
class DecayCertificate:
    """Certified decay summary of one closed-loop run."""

    gamma: float
    alpha: float
    fitted_rate: float
    rate_threshold: float
    fit_constant: float
    oscillation: bool
    weighted_integral: float
    quadratic_form: float
    a1: float
    a2: float
    initial_weighted_norm_sq: float
    trajectory: Trajectory

    @property
    def rate_ok(self) -> bool:
        return self.fitted_rate >= self.rate_threshold

    @property
    def integral_ok(self) -> bool:
        if not math.isfinite(self.weighted_integral):
            return False
        bound = self.a2 * self.initial_weighted_norm_sq
        return (self.weighted_integral <= self.quadratic_form * 1.01
                and self.quadratic_form <= bound * (1.0 + 1e-9))

    @property
    def passed(self) -> bool:
        return self.rate_ok and self.integral_ok


def certify_decay(solution: RiccatiSolution, spectrum: Spectrum,
                  kernel: MemoryKernel, gamma: float, y0, t_max: float, *,
                  actuators: ActuatorSet | None = None,
                  samples: int | None = None) -> DecayCertificate:
    """Run the closed loop from y0 and certify the decay rate.

    The loop is integrated in original variables through the RK4 route
    (dynamic feedback riding along), the rate of |A^{alpha-1/2} y| is
    fitted on the second half of [0, t_max] and must reach 0.98 gamma,
    and the weighted integral of e^{2 gamma t}|A^alpha y|^2 is reported
    against the quadratic form of R and its Rayleigh bound.  A failed
    rate or a diverging integral raises, carrying the certificate and
    its diagnostic trajectory.
    """
    if abs(gamma - solution.gamma) > 1e-12 * max(1.0, abs(gamma)):
        raise GammaOutOfRangeError(
            f"certification rate {gamma:g} differs from the design rate "
            f"{solution.gamma:g}")
    sys = solution.system
    k = sys.truncation_k
    if actuators is None:
        actuators = ActuatorSet(count=sys.m_actuators,
                                modal_coefficients=sys.c_km,
                                description="design projections")
    controller = make_closed_loop(solution, actuators, kernel, k)
    if samples is None:
        samples = max(801, int(round(t_max / 0.01)) + 1)
    grid = np.linspace(0.0, t_max, samples)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.size < k:
        y0 = np.concatenate([y0, np.zeros(k - y0.size)])
    traj = simulate_ode(spectrum, kernel, y0, controller, grid,
                        frac_alpha=solution.alpha)
    fit = fit_decay_rate(traj, "a_alpha_minus_half",
                         window=(t_max / 2.0, t_max))
    weighted = traj.weighted_energy(solution.alpha, rate=gamma)
    xi0 = embed_initial(solution, y0)
    quad_form = float(xi0 @ solution.r_matrix @ xi0)
    a1, a2 = rayleigh_bounds(solution)
    init_sq = float(np.sum(sys.lambdas ** (2.0 * solution.alpha - 1.0)
                           * y0[:k] ** 2))
    cert = DecayCertificate(
        gamma=gamma, alpha=solution.alpha, fitted_rate=fit.rate,
        rate_threshold=0.98 * gamma, fit_constant=fit.constant,
        oscillation=fit.oscillation, weighted_integral=weighted,
        quadratic_form=quad_form, a1=a1, a2=a2,
        initial_weighted_norm_sq=init_sq, trajectory=traj)
    if not cert.rate_ok or not math.isfinite(weighted):
        raise DecayViolationError(
            f"fitted decay rate {fit.rate:.6g} below the certified "
            f"threshold {cert.rate_threshold:.6g}", certificate=cert)
    return cert
