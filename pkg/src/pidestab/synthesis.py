"""Companion systems, steerability checks and minimum-energy steering.

The modes flagged by the partition form a finite-dimensional companion
system: positions stacked over velocities, one second-order block per
mode.  Steering that block to zero is what removes the slow content of
the solution; the remaining modes already decay faster than the target
rate.  Two independent certificates are computed for steerability — the
group-slice rank conditions in transformed coordinates, and a Gramian
eigenvalue test — and the steering control itself is the classical
minimum-energy formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import quadrature
from .exceptions import (
    ActuatorSearchError,
    DegenerateSpectrumError,
    DimensionMismatchError,
    GramianSingularError,
    HorizonTooSmallError,
    IllConditionedTransformError,
)
from .jordan import EigenCluster, jordan_form
from .spectral import (
    MemoryKernel,
    Spectrum,
    UnstablePartition,
    check_degeneracy,
    modal_roots,
)

RANK_RTOL = 1e-10
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ActuatorSet:
    """Finite family of actuator shapes projected on the controlled modes.

    Attributes
    ----------
    count : int
        Number of actuators M.
    modal_coefficients : numpy.ndarray
        Matrix with entry (j, i) holding the projection of actuator i on
        mode j.  Rows follow the expanded mode order; at least the
        controlled block must be covered, extra rows serve truncations
        beyond it.
    description : str
        Provenance note (default construction, indicator support, ...).
    """

    count: int
    modal_coefficients: np.ndarray
    description: str = "user-supplied"

    def __post_init__(self):
        coeffs = np.atleast_2d(np.asarray(self.modal_coefficients, dtype=float))
        if coeffs.shape[1] != self.count:
            raise DimensionMismatchError(
                f"coefficient matrix has {coeffs.shape[1]} columns for "
                f"{self.count} actuators")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("actuator coefficients must be finite")
        object.__setattr__(self, "modal_coefficients", coeffs)

    def rows(self, n: int) -> np.ndarray:
        """First ``n`` coefficient rows, zero-padded beyond the stored ones.

        Zero padding is exact for the default construction (eigenfunctions
        are orthogonal), and a documented approximation otherwise.
        """
        stored = self.modal_coefficients
        if n <= stored.shape[0]:
            return stored[:n].copy()
        out = np.zeros((n, self.count))
        out[:stored.shape[0]] = stored
        return out


def default_actuators(partition: UnstablePartition, coefficients=None, *,
                      count: int | None = None, validator=None, seed: int = 0,
                      max_attempts: int = 1000) -> ActuatorSet:
    """Actuator set for a partition.

    Without arguments this builds the aligned eigenprojection family:
    actuator ``i`` carries the ``i``-th member of every group that is
    large enough, columns normalized.  For groups of distinct modes the
    single actuator therefore touches every mode; for one group of
    multiplicity m the coefficients are the m-by-m identity.  This
    construction passes the group rank conditions whenever the
    transformed system is diagonalizable.

    Parameters
    ----------
    coefficients : array_like, optional
        Explicit projection matrix (rows per mode, columns per actuator),
        e.g. indicator-supported actuators; bypasses the construction.
    count : int, optional
        Number of columns for the default construction (defaults to the
        largest group size; smaller values are allowed and will fail the
        rank conditions downstream, which is sometimes the point).
    validator : callable, optional
        Predicate on a candidate :class:`ActuatorSet`.  When the default
        candidate is rejected, random unit-norm candidates are drawn
        until one passes.  This is the path for systems whose transform
        is not diagonalizable.
    seed, max_attempts :
        Reproducibility and budget of the randomized search.
    """
    n = partition.n_total
    if coefficients is not None:
        coeffs = np.atleast_2d(np.asarray(coefficients, dtype=float))
        if coeffs.shape[0] < n:
            raise DimensionMismatchError(
                f"need at least {n} coefficient rows, got {coeffs.shape[0]}")
        return ActuatorSet(count=coeffs.shape[1], modal_coefficients=coeffs,
                           description="user-supplied")
    if n == 0:
        return ActuatorSet(count=0, modal_coefficients=np.zeros((0, 0)),
                           description="empty (no controlled modes)")
    m = partition.m_max if count is None else int(count)
    if m < 1:
        raise ValueError("actuator count must be at least 1")
    if m > partition.m_max:
        raise ValueError(
            f"default construction supports at most m_max={partition.m_max} "
            "actuators")
    aligned = np.zeros((n, m))
    offset = 0
    for size in partition.group_sizes:
        for pos in range(min(size, m)):
            aligned[offset + pos, pos] = 1.0
        offset += size
    aligned /= np.linalg.norm(aligned, axis=0, keepdims=True)
    candidate = ActuatorSet(count=m, modal_coefficients=aligned,
                            description="aligned eigenprojections")
    if validator is None or validator(candidate):
        return candidate

    rng = np.random.default_rng(seed)
    for attempt in range(max_attempts):
        raw = rng.standard_normal((n, m))
        raw /= np.linalg.norm(raw, axis=0, keepdims=True)
        candidate = ActuatorSet(
            count=m, modal_coefficients=raw,
            description=f"randomized (seed={seed}, attempt={attempt})")
        if validator(candidate):
            return candidate
    raise ActuatorSearchError(
        f"no admissible actuator coefficients found in {max_attempts} "
        f"randomized attempts (seed={seed})", seed=seed,
        attempts=max_attempts)


@dataclass(frozen=True, eq=False)
class CompanionSystem:
    """Position/velocity companion form of the controlled block."""

    a_n: np.ndarray      # diag(lam_j + delta)
    b_n: np.ndarray      # diag(lam_j (b + delta))
    c_nm: np.ndarray     # actuator coefficients, N x M
    p_2n: np.ndarray     # [[0, I], [-B_N, -A_N]]
    q_2nm: np.ndarray    # [[0], [C_NM]]
    lambdas: np.ndarray
    kernel: MemoryKernel

    @property
    def n_modes(self) -> int:
        return self.lambdas.size

    @property
    def m_actuators(self) -> int:
        return self.c_nm.shape[1]


def build_companion(partition: UnstablePartition, kernel: MemoryKernel,
                    actuators: ActuatorSet, spectrum: Spectrum, *,
                    allow_degenerate: bool = False) -> CompanionSystem:
    """Assemble the companion system of the controlled block.

    ``allow_degenerate`` lets spectra with coincident per-mode roots
    through (their transform takes the chain path); collisions between
    different modes are always rejected since no grouping makes the
    steering argument sound for them.
    """
    n = partition.n_total
    lams = partition.lambdas
    report = check_degeneracy(spectrum, kernel)
    blockers = [v for v in report
                if v.kind != "double_root" or not allow_degenerate]
    if blockers:
        raise DegenerateSpectrumError(
            "degenerate root structure blocks synthesis", report=blockers)
    c = actuators.rows(n) if n else np.zeros((0, actuators.count))
    m = actuators.count
    a_n = np.diag(lams + kernel.delta)
    b_n = np.diag(lams * (kernel.b + kernel.delta))
    p = np.zeros((2 * n, 2 * n))
    if n:
        p[:n, n:] = np.eye(n)
        p[n:, :n] = -b_n
        p[n:, n:] = -a_n
    q = np.zeros((2 * n, m))
    q[n:, :] = c
    return CompanionSystem(a_n=a_n, b_n=b_n, c_nm=c, p_2n=p, q_2nm=q,
                           lambdas=lams.copy(), kernel=kernel)


@dataclass(frozen=True, eq=False)
class TransformedSystem:
    """Companion system in block coordinates.

    ``r_matrix`` maps companion coordinates to block coordinates; the
    block matrix is diagonal when the system is diagonalizable and a
    chain (Jordan) matrix otherwise.  ``slices`` holds, per eigenvalue
    cluster, the adjoint input slice whose rank decides steerability of
    that cluster.
    """

    r_matrix: np.ndarray
    block: np.ndarray
    q_bar: np.ndarray
    clusters: tuple
    slices: tuple
    semisimple: bool
    condition: float


def _slices_for(q_bar: np.ndarray, clusters) -> tuple:
    adj = q_bar.conj().T
    return tuple(adj[:, c.start:c.start + c.size] for c in clusters)


def transform_matrix_system(p, q, *, cluster_tol: float = 1e-9,
                            cond_limit: float = COND_LIMIT) -> TransformedSystem:
    """Block-diagonalize an arbitrary square system (chain form if needed)."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    v, block, clusters, semisimple = jordan_form(p, cluster_tol=cluster_tol)
    if v.size:
        cond = float(np.linalg.cond(v))
    else:
        cond = 1.0
    if cond > cond_limit:
        raise IllConditionedTransformError(
            f"transform condition number {cond:.3e} exceeds {cond_limit:.1e}")
    r = np.linalg.solve(v, np.eye(v.shape[0], dtype=complex)) if v.size else v
    if semisimple:
        block = np.diag(np.diag(block))
    q_bar = r @ q
    return TransformedSystem(
        r_matrix=r, block=block, q_bar=q_bar, clusters=clusters,
        slices=_slices_for(q_bar, clusters), semisimple=semisimple,
        condition=cond)


def transform_and_group(companion: CompanionSystem,
                        partition: UnstablePartition | None = None, *,
                        collision_tol: float = 1e-9,
                        cond_limit: float = COND_LIMIT) -> TransformedSystem:
    """Diagonalize the companion system and slice the input per cluster.

    For non-degenerate spectra the eigenvector matrix is known in closed
    form (each mode contributes the pair ``(e_j, -mu e_j)``), giving the
    ordering fast roots first, slow roots second, grouped by distinct
    eigenvalue.  If any mode carries a (near-)double root, or distinct
    modes share a root so the closed-form clusters would collide, the
    generic chain path takes over.
    """
    n = companion.n_modes
    if n == 0:
        return TransformedSystem(
            r_matrix=np.zeros((0, 0), complex),
            block=np.zeros((0, 0), complex),
            q_bar=np.zeros((0, companion.m_actuators), complex),
            clusters=(), slices=(), semisimple=True, condition=1.0)

    pairs = [modal_roots(lam, companion.kernel) for lam in companion.lambdas]
    mu_p = np.array([pr.mu_plus for pr in pairs])
    mu_m = np.array([pr.mu_minus for pr in pairs])

    sizes = None
    if partition is not None and partition.n_total == n:
        sizes = partition.group_sizes
    else:
        sizes = []
        for lam in companion.lambdas:
            if sizes and lam == companion.lambdas[sum(sizes) - 1]:
                # consecutive equal eigenvalues extend the current group
                sizes[-1] += 1
            else:
                sizes.append(1)
        sizes = tuple(sizes)

    fused = any(pr.is_degenerate for pr in pairs)
    analytic_ok = not fused and all(
        abs(pr.mu_plus - pr.mu_minus) > collision_tol for pr in pairs)
    if analytic_ok:
        offsets = np.cumsum((0,) + sizes[:-1])
        values = []
        for off, size in zip(offsets, sizes):
            values.append(-mu_p[off])
            values.append(-mu_m[off])
        vals = np.array(values)
        pairwise = np.abs(vals[:, None] - vals[None, :])
        np.fill_diagonal(pairwise, np.inf)
        if pairwise.min() <= collision_tol:
            analytic_ok = False  # clusters collide; merge via generic path

    if not analytic_ok:
        # a defective companion block scatters its computed eigenvalues
        # by about sqrt(machine eps), so clustering for a known-fused
        # pair must open up to that resolution floor
        tol_eff = collision_tol
        if fused:
            scale = float(max(np.abs(mu_p).max(), np.abs(mu_m).max(), 1.0))
            tol_eff = max(collision_tol, 5e-7 * scale)
        return transform_matrix_system(
            companion.p_2n, companion.q_2nm,
            cluster_tol=tol_eff, cond_limit=cond_limit)

    v = np.zeros((2 * n, 2 * n), dtype=complex)
    idx = np.arange(n)
    v[idx, idx] = 1.0
    v[n + idx, idx] = -mu_p
    v[idx, n + idx] = 1.0
    v[n + idx, n + idx] = -mu_m
    cond = float(np.linalg.cond(v))
    if cond > cond_limit:
        raise IllConditionedTransformError(
            f"transform condition number {cond:.3e} exceeds {cond_limit:.1e}")
    r = np.linalg.solve(v, np.eye(2 * n, dtype=complex))
    d = np.diag(np.concatenate([-mu_p, -mu_m]))
    q_bar = r @ companion.q_2nm

    clusters = []
    offset = 0
    for size in sizes:
        clusters.append(EigenCluster(value=complex(-mu_p[offset]),
                                     size=size, start=offset))
        offset += size
    offset = 0
    for size in sizes:
        clusters.append(EigenCluster(value=complex(-mu_m[offset]),
                                     size=size, start=n + offset))
        offset += size
    clusters = tuple(clusters)
    return TransformedSystem(
        r_matrix=r, block=d, q_bar=q_bar, clusters=clusters,
        slices=_slices_for(q_bar, clusters), semisimple=True,
        condition=cond)


@dataclass(frozen=True)
class RankEntry:
    cluster: EigenCluster
    rank: int
    required: int
    chain_end_rows: tuple

    @property
    def ok(self) -> bool:
        return self.rank >= self.required


@dataclass(frozen=True)
class RankReport:
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def failures(self) -> tuple:
        return tuple(e for e in self.entries if not e.ok)


def _chain_end_rows(block: np.ndarray, cluster: EigenCluster) -> tuple:
    last = cluster.start + cluster.size - 1
    rows = []
    for i in range(cluster.start, cluster.start + cluster.size):
        if i == last or abs(block[i, i + 1]) < 0.5:
            rows.append(i)
    return tuple(rows)


def rank_conditions(transformed: TransformedSystem,
                    partition: UnstablePartition | None = None, *,
                    rtol: float = RANK_RTOL) -> RankReport:
    """Steerability rank test, one entry per eigenvalue cluster.

    The input must reach the top of every chain of the cluster, so the
    decisive quantity is the rank of the chain-end rows of the
    transformed input matrix: it must equal the number of chains.  For
    diagonalizable clusters every row is a chain end and the requirement
    is the full multiplicity.  The report is plain data; callers decide
    whether failure is an error.
    """
    entries = []
    for cluster in transformed.clusters:
        rows = _chain_end_rows(transformed.block, cluster)
        sl = transformed.q_bar[list(rows), :]
        if sl.size == 0:
            rank = 0
        else:
            s = np.linalg.svd(sl, compute_uv=False)
            rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
        entries.append(RankEntry(cluster=cluster, rank=rank,
                                 required=len(rows), chain_end_rows=rows))
    return RankReport(entries=tuple(entries))


def kalman_observability_check(transformed: TransformedSystem,
                               horizon: float = 1.0, *,
                               rel_tol: float = 1e-12,
                               cells: int = 16, nodes: int = 8) -> bool:
    """Gramian route to the same steerability question.

    Integrates ``e^{Ds} Q Q* e^{D*s}`` over [0, horizon] (closed form
    when the block is diagonal, quadrature on matrix exponentials
    otherwise) and demands the smallest eigenvalue clear ``rel_tol``
    times the largest.  Independent of the rank computation and expected
    to agree with it.
    """
    dim = transformed.block.shape[0]
    if dim == 0:
        return True
    q = transformed.q_bar
    if transformed.semisimple:
        d = np.diag(transformed.block)
        z = d[:, None] + d[None, :].conj()
        zt = z * horizon
        small = np.abs(zt) < 1e-8
        factor = np.where(
            small,
            horizon * (1.0 + 0.5 * zt + zt * zt / 6.0),
            np.divide(np.exp(zt) - 1.0, z, out=np.full_like(zt, horizon),
                      where=~small),
        )
        gram = (q @ q.conj().T) * factor
    else:
        pts, wts = quadrature.composite_nodes(0.0, horizon, cells, nodes)
        gram = np.zeros((dim, dim), dtype=complex)
        for s, w in zip(pts, wts):
            e = scipy.linalg.expm(transformed.block * s)
            eq = e @ q
            gram += w * (eq @ eq.conj().T)
    gram = 0.5 * (gram + gram.conj().T)
    eigs = np.linalg.eigvalsh(gram)
    top = eigs[-1]
    if top <= 0.0:
        return False
    return bool(eigs[0] > rel_tol * top)


@dataclass(frozen=True, eq=False)
class NullControl:
    """Sampled steering control driving the companion state to zero.

    ``w`` is the companion-level input, ``v`` the physical actuator
    amplitudes related by ``v' + delta v = w`` with ``v`` vanishing at
    the horizon.  Both extend by zero beyond the horizon.
    """

    horizon: float
    grid: np.ndarray
    w: np.ndarray          # (M, samples)
    v: np.ndarray          # (M, samples)
    energy: float
    energy_ratio: float    # energy / |x0|^2, the realized steering constant
    terminal_error: float  # |X(T)| / |x0| from the verification run
    gramian_condition: float


def controllability_gramian(a: np.ndarray, b: np.ndarray, horizon: float, *,
                            cells: int = quadrature.DEFAULT_CELLS,
                            nodes: int = quadrature.DEFAULT_NODES) -> np.ndarray:
    """Finite-horizon Gramian of (a, b) by composite quadrature."""
    dim = a.shape[0]
    pts, wts = quadrature.composite_nodes(0.0, horizon, cells, nodes)
    gram = np.zeros((dim, dim))
    for s, w in zip(pts, wts):
        eb = scipy.linalg.expm(a * s) @ b
        gram += w * (eb @ eb.T)
    return 0.5 * (gram + gram.T)


def _rk4_forced(a: np.ndarray, forcing_samples: np.ndarray, x0: np.ndarray,
                h: float) -> np.ndarray:
    """Integrate ``x' = a x + f(t)`` with forcing given on half steps.

    ``forcing_samples`` has one column per half step (2*steps + 1).
    Returns the terminal state only.
    """
    x = x0.astype(float).copy()
    steps = (forcing_samples.shape[1] - 1) // 2
    for i in range(steps):
        f0 = forcing_samples[:, 2 * i]
        fm = forcing_samples[:, 2 * i + 1]
        f1 = forcing_samples[:, 2 * i + 2]
        k1 = a @ x + f0
        k2 = a @ (x + 0.5 * h * k1) + fm
        k3 = a @ (x + 0.5 * h * k2) + fm
        k4 = a @ (x + h * k3) + f1
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def min_energy_control(companion: CompanionSystem, x0, horizon: float, *,
                       samples: int = 1025,
                       singular_rtol: float = 1e-12,
                       cond_limit: float = 1e14) -> NullControl:
    """Minimum-energy control steering the companion state to zero.

    Implements ``w(t) = -Q^T e^{P^T (T-t)} G_T^{-1} e^{P T} x0`` with the
    finite-horizon Gramian ``G_T``, and recovers the physical amplitudes
    ``v``.  A forward integration of the controlled system verifies the
    terminal state; its relative size is reported on the result.

    Raises
    ------
    GramianSingularError
        The Gramian has (numerically) deficient rank — the same
        situation the rank conditions flag.
    HorizonTooSmallError
        Invertible but so ill-conditioned that steering amplitudes
        cannot be trusted.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    p = companion.p_2n
    q = companion.q_2nm
    dim = p.shape[0]
    m = q.shape[1]
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != dim:
        raise DimensionMismatchError(
            f"initial state has size {x0.size}, companion needs {dim}")
    grid = np.linspace(0.0, horizon, samples)
    if dim == 0:
        zero = np.zeros((m, samples))
        return NullControl(horizon=horizon, grid=grid, w=zero, v=zero.copy(),
                           energy=0.0, energy_ratio=0.0, terminal_error=0.0,
                           gramian_condition=1.0)

    x0_norm = float(np.linalg.norm(x0))
    if x0_norm == 0.0:
        zero = np.zeros((m, samples))
        return NullControl(horizon=horizon, grid=grid, w=zero, v=zero.copy(),
                           energy=0.0, energy_ratio=0.0, terminal_error=0.0,
                           gramian_condition=1.0)

    # structural steerability is horizon-free; judge it on the Kalman
    # block so that a squeezed horizon cannot masquerade as rank loss
    blocks = [q]
    for _ in range(dim - 1):
        blocks.append(p @ blocks[-1])
    sv = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    if sv.size == 0 or (sv > RANK_RTOL * sv[0]).sum() < dim:
        raise GramianSingularError(
            "steering Gramian is singular: the companion block is not "
            "steerable through these actuators")

    gram = controllability_gramian(p, q, horizon)
    eigs = np.linalg.eigvalsh(gram)
    if eigs[-1] <= 0.0 or eigs[0] <= singular_rtol * eigs[-1]:
        raise HorizonTooSmallError(
            "steering Gramian lost all precision on this horizon; "
            "increase the horizon")
    cond = float(eigs[-1] / eigs[0])
    if cond > cond_limit:
        raise HorizonTooSmallError(
            f"Gramian condition number {cond:.3e} exceeds {cond_limit:.1e}; "
            "increase the horizon")

    g_vec = np.linalg.solve(gram, scipy.linalg.expm(p * horizon) @ x0)

    def w_fun(t):
        t = np.asarray(t, dtype=float)
        single = t.ndim == 0
        tt = np.atleast_1d(t)
        out = np.empty((m, tt.size))
        for i, ti in enumerate(tt):
            e = scipy.linalg.expm(p.T * (horizon - ti))
            out[:, i] = -q.T @ (e @ g_vec)
        return out[:, 0] if single else out

    # control on the output grid (and half steps for the verification run)
    h = grid[1] - grid[0]
    e_half = scipy.linalg.expm(p.T * 0.5 * h)
    n_half = 2 * (samples - 1) + 1
    w_half = np.empty((m, n_half))
    mat = np.eye(dim)
    for j in range(n_half - 1, -1, -1):
        w_half[:, j] = -q.T @ (mat @ g_vec)
        if j:
            mat = mat @ e_half
    w_grid = w_half[:, ::2]

    energy = float(quadrature.integrate(
        lambda ts: np.sum(np.asarray(w_fun(ts)) ** 2, axis=0),
        0.0, horizon))

    rho = float(max(np.abs(np.linalg.eigvals(p)))) if dim else 1.0
    refine = max(1, math.ceil(h * rho / 0.05))
    if refine == 1:
        forcing = q @ w_half
        terminal = _rk4_forced(p, forcing, x0, h)
    else:
        fine_h = h / refine
        e_fine = scipy.linalg.expm(p.T * 0.5 * fine_h)
        n_fine = 2 * (samples - 1) * refine + 1
        w_fine = np.empty((m, n_fine))
        mat = np.eye(dim)
        for j in range(n_fine - 1, -1, -1):
            w_fine[:, j] = -q.T @ (mat @ g_vec)
            if j:
                mat = mat @ e_fine
        terminal = _rk4_forced(p, q @ w_fine, x0, fine_h)
    terminal_error = float(np.linalg.norm(terminal) / x0_norm)

    v_grid = recover_v(grid, w_grid, companion.kernel.delta, w_fun=w_fun)
    return NullControl(horizon=horizon, grid=grid, w=w_grid, v=v_grid,
                       energy=energy, energy_ratio=energy / x0_norm ** 2,
                       terminal_error=terminal_error,
                       gramian_condition=cond)


def recover_v(grid, w, delta: float, *, w_fun=None,
              nodes: int = quadrature.DEFAULT_NODES) -> np.ndarray:
    """Physical actuator amplitudes from the companion-level control.

    Computes ``v(t) = -int_t^T e^{-delta (t-s)} w(s) ds`` cellwise from
    the right, so ``v`` vanishes at the horizon and solves
    ``v' + delta v = w``.  When ``w_fun`` is omitted the sampled control
    is interpolated linearly between grid points.
    """
    grid = np.asarray(grid, dtype=float)
    w = np.atleast_2d(np.asarray(w, dtype=float))
    m, samples = w.shape
    if grid.size != samples:
        raise DimensionMismatchError("grid and control sample counts differ")
    if w_fun is None:
        def w_fun(ts):
            ts = np.atleast_1d(ts)
            return np.vstack([np.interp(ts, grid, w[i]) for i in range(m)])
    v = np.zeros((m, samples))
    for k in range(samples - 2, -1, -1):
        t0, t1 = grid[k], grid[k + 1]
        pts, wts = quadrature.cell_nodes(t0, t1, nodes)
        vals = np.asarray(w_fun(pts)).reshape(m, -1)
        local = (vals * np.exp(delta * (pts - t0))[None, :]) @ wts
        v[:, k] = math.exp(delta * (t1 - t0)) * v[:, k + 1] - local
    return v
