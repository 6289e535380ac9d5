"""Eigenvalue clustering and Jordan-chain construction for small matrices.

Floating-point Jordan structure is only well posed when the clusters are
clearly separated, which holds for the desk-scale companion systems this
toolkit targets.  The routine clusters eigenvalues, reads the block sizes
off the ranks of powers of the shifted matrix, and assembles chain bases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SolverFailureError

CLUSTER_TOL = 1e-9
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class EigenCluster:
    """One distinct eigenvalue of the transformed system."""

    value: complex
    size: int
    start: int  # first column of the cluster block in the chain basis


def cluster_eigenvalues(values, tol: float):
    """Group eigenvalues lying within ``tol`` of each other.

    Returns a list of index lists.  Transitive closure is intended: two
    eigenvalues bridged by a third belong to one cluster.
    """
    values = np.asarray(values)
    n = values.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                pi, pj = find(i), find(j)
                if pi != pj:
                    parent[pi] = pj
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = list(groups.values())
    out.sort(key=lambda idx: (values[idx[0]].real, values[idx[0]].imag))
    return out


def _null_basis(mat, rtol: float, floor: float = 0.0):
    """Orthonormal null-space basis via SVD.

    ``floor`` is an absolute cutoff for matrices whose largest singular
    value may itself be rounding noise (high powers of a nilpotent
    block), where a purely relative test would report full rank.
    """
    u, s, vh = np.linalg.svd(mat)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > max(rtol * s[0], floor)))
    return vh[rank:].conj().T


def _project_out(vec, basis):
    """Residual of ``vec`` against an orthonormal set (twice, for accuracy)."""
    r = vec.copy()
    for _ in range(2):
        for q in basis:
            r = r - q * (q.conj() @ r)
    return r


def jordan_form(p, cluster_tol: float = CLUSTER_TOL,
                rank_rtol: float = RANK_RTOL):
    """Chain basis ``V``, block matrix ``J`` and clusters with ``P V = V J``.

    ``J`` carries each cluster's eigenvalue on the diagonal and ones on
    the superdiagonal inside each chain.  For a diagonalizable matrix
    every chain has length one and ``J`` is diagonal.

    Returns
    -------
    (V, J, clusters, semisimple)
    """
    p = np.asarray(p, dtype=complex)
    n = p.shape[0]
    if p.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 0:
        return (np.zeros((0, 0), complex), np.zeros((0, 0), complex), (), True)

    eigvals = np.linalg.eigvals(p)
    scale = max(1.0, float(np.max(np.abs(eigvals))))
    groups = cluster_eigenvalues(eigvals, cluster_tol * scale)

    columns = []
    jay = np.zeros((n, n), dtype=complex)
    clusters = []
    semisimple = True
    col = 0
    for idx in groups:
        m = len(idx)
        lam = complex(np.mean(eigvals[idx]))
        shifted = p - lam * np.eye(n)
        base_norm = max(float(np.linalg.norm(shifted, 2)), 1e-300)
        # nested null spaces of increasing powers
        bases = [np.zeros((n, 0), complex)]
        power = np.eye(n, dtype=complex)
        depth = 0
        while bases[-1].shape[1] < m:
            depth += 1
            if depth > m:
                raise SolverFailureError(
                    "could not resolve the chain structure; clusters may "
                    "be too close together")
            power = power @ shifted
            bases.append(_null_basis(power, rank_rtol,
                                     floor=rank_rtol * base_norm ** depth))
        dims = [b.shape[1] for b in bases]
        omega = [dims[k] - dims[k - 1] for k in range(1, depth + 1)]
        if depth > 1:
            semisimple = False

        chains = []  # each entry: list of vectors from chain top downward
        span = []    # orthonormal set guarding independence at current level
        for k in range(depth, 0, -1):
            for chain in chains:
                chain.append(shifted @ chain[-1])
            needed = omega[k - 1] - (omega[k] if k < depth else 0)
            if needed <= 0:
                continue
            span = []
            for b in bases[k - 1].T:
                r = _project_out(b, span)
                nr = np.linalg.norm(r)
                if nr > 1e-10:
                    span.append(r / nr)
            for chain in chains:
                r = _project_out(chain[-1], span)
                nr = np.linalg.norm(r)
                if nr > 1e-10:
                    span.append(r / nr)
            candidates = bases[k].T
            for _ in range(needed):
                best, best_norm = None, 0.0
                for cand in candidates:
                    r = _project_out(cand, span)
                    nr = np.linalg.norm(r)
                    if nr > best_norm:
                        best, best_norm = cand, nr
                if best is None or best_norm <= 1e-10:
                    raise SolverFailureError(
                        "chain construction failed: no independent "
                        "generalized eigenvector found")
                chains.append([best.copy()])
                span.append(_project_out(best, span) / best_norm)

        total = sum(len(c) for c in chains)
        if total != m:
            raise SolverFailureError(
                f"chain lengths sum to {total}, expected {m}")
        clusters.append(EigenCluster(value=lam, size=m, start=col))
        for chain in chains:
            length = len(chain)
            ordered = list(reversed(chain))  # eigenvector first
            for i, vec in enumerate(ordered):
                columns.append(vec)
                jay[col + i, col + i] = lam
                if i > 0:
                    jay[col + i - 1, col + i] = 1.0
            col += length

    v = np.column_stack(columns)
    residual = np.linalg.norm(p @ v - v @ jay) / max(1.0, np.linalg.norm(p))
    if residual > 1e-6:
        raise SolverFailureError(
            f"chain basis fails to reproduce the matrix (residual {residual:.2e})")
    return v, jay, tuple(clusters), semisimple
