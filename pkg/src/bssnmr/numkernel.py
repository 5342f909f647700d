"""Shared numerical primitives.

Dense linear algebra (SVD, symmetric eigendecomposition, NNLS) is delegated
to numpy/scipy behind small validating wrappers.  The simplex minimizer, the
Jacobi joint diagonalizer and the rectangular maximum-weight assignment are
implemented here directly.
"""

from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.optimize

from .errors import NumericalFailure


# ---------------------------------------------------------------------------
# random number streams
# ---------------------------------------------------------------------------

def seeded_rng(seed) -> np.random.Generator:
    """Deterministic generator for an integer seed or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent child stream identified by a tuple of integers.

    Streams for distinct keys are statistically independent, and the mapping
    (master_seed, key) -> stream is reproducible across runs and platforms.
    """
    return seeded_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))


def gaussian(rng: np.random.Generator, size=None):
    return rng.standard_normal(size)


def uniform(rng: np.random.Generator, size=None):
    return rng.random(size)


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------

class SvdResult(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    Vt: np.ndarray


def svd(m) -> SvdResult:
    """Thin SVD with singular values in descending order."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("svd expects a 2-d matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input contains non-finite values")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"svd did not converge: {exc}") from exc
    return SvdResult(u, s, vt)


def sym_eig(m, sym_tol: float = 1e-10):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("sym_eig expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > sym_tol * scale:
        raise ValueError("sym_eig input is not symmetric within tolerance")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def nnls(a, b) -> np.ndarray:
    """Nonnegative least squares min ||a x - b|| s.t. x >= 0 (active set)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0]:
        raise ValueError("nnls shape mismatch between matrix and rhs")
    try:
        x, _ = scipy.optimize.nnls(a, b)
    except RuntimeError as exc:
        raise NumericalFailure(f"nnls iteration cap exceeded: {exc}") from exc
    return x


# ---------------------------------------------------------------------------
# Nelder-Mead simplex minimization
# ---------------------------------------------------------------------------

class NelderMeadResult(NamedTuple):
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int


def nelder_mead(objective: Callable[[np.ndarray], float], x0,
                x_tol: float = 1e-8, f_tol: float = 1e-12,
                max_iter: int = 2000) -> NelderMeadResult:
    """Downhill simplex minimization.

    Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
    Terminates when both the simplex diameter and the function spread fall
    below tolerance; hitting the iteration cap returns the best point so
    far flagged as non-converged.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    ndim = x0.size
    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    # scipy-style initial simplex: 5% displacement per coordinate
    simplex = np.tile(x0, (ndim + 1, 1))
    for i in range(ndim):
        simplex[i + 1, i] += 0.05 * x0[i] if x0[i] != 0.0 else 0.00025
    fvals = np.array([f0] + [float(objective(p)) for p in simplex[1:]])

    iterations = 0
    converged = False
    while iterations < max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        spread_x = np.max(np.abs(simplex[1:] - simplex[0]))
        spread_f = np.max(np.abs(fvals[1:] - fvals[0]))
        if spread_x <= x_tol and spread_f <= f_tol * (abs(fvals[0]) + f_tol):
            converged = True
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        reflected = centroid + (centroid - worst)
        f_r = float(objective(reflected))
        if fvals[0] <= f_r < fvals[-2]:
            simplex[-1], fvals[-1] = reflected, f_r
            continue
        if f_r < fvals[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = float(objective(expanded))
            if f_e < f_r:
                simplex[-1], fvals[-1] = expanded, f_e
            else:
                simplex[-1], fvals[-1] = reflected, f_r
            continue
        contracted = centroid + 0.5 * (worst - centroid)
        f_c = float(objective(contracted))
        if f_c < fvals[-1]:
            simplex[-1], fvals[-1] = contracted, f_c
            continue
        # shrink toward the best vertex
        simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
        fvals[1:] = [float(objective(p)) for p in simplex[1:]]

    best = int(np.argmin(fvals))
    return NelderMeadResult(simplex[best].copy(), float(fvals[best]),
                            converged, iterations)


# ---------------------------------------------------------------------------
# Jacobi joint diagonalization
# ---------------------------------------------------------------------------

class JointDiagResult(NamedTuple):
    V: np.ndarray
    converged: bool
    sweeps: int
    off_diagonal: list


def _off_diag_energy(mats: np.ndarray) -> float:
    k = mats.shape[1]
    mask = ~np.eye(k, dtype=bool)
    return float(np.sum(mats[:, mask] ** 2))


def joint_diagonalize(matrices: Sequence[np.ndarray], tol: float = 1e-12,
                      max_sweeps: int = 200) -> JointDiagResult:
    """Simultaneous diagonalization of symmetric matrices by Givens sweeps.

    Returns an orthogonal V such that V.T @ M @ V is jointly as diagonal as
    possible.  The summed squared off-diagonal energy is non-increasing
    across sweeps; the per-sweep values are recorded in the result.
    """
    mats = np.array([np.asarray(m, dtype=float) for m in matrices])
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError("joint_diagonalize expects square matrices of equal size")
    k = mats.shape[1]
    v = np.eye(k)
    history = [_off_diag_energy(mats)]
    scale = max(1.0, float(np.max(np.abs(mats))))
    threshold = tol * scale

    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                g1 = mats[:, p, p] - mats[:, q, q]
                g2 = mats[:, p, q] + mats[:, q, p]
                # no off-diagonal content -> the optimal angle is numerically
                # undefined and rotating would scramble V for zero gain
                if np.sqrt(g2 @ g2) <= threshold:
                    continue
                ton = float(g1 @ g1 - g2 @ g2)
                toff = 2.0 * float(g1 @ g2)
                theta = 0.5 * np.arctan2(toff, ton + np.hypot(ton, toff))
                s = np.sin(theta)
                if abs(s) <= threshold:
                    continue
                rotated = True
                c = np.cos(theta)
                rot_p = c * mats[:, :, p] + s * mats[:, :, q]
                rot_q = -s * mats[:, :, p] + c * mats[:, :, q]
                mats[:, :, p], mats[:, :, q] = rot_p, rot_q
                rot_p = c * mats[:, p, :] + s * mats[:, q, :]
                rot_q = -s * mats[:, p, :] + c * mats[:, q, :]
                mats[:, p, :], mats[:, q, :] = rot_p, rot_q
                vp = c * v[:, p] + s * v[:, q]
                vq = -s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
        history.append(_off_diag_energy(mats))
        if not rotated:
            converged = True
            break
    return JointDiagResult(v, converged, sweeps, history)


# ---------------------------------------------------------------------------
# rectangular maximum-weight assignment
# ---------------------------------------------------------------------------

def assign_max(score) -> list:
    """Exact one-to-one assignment maximizing the summed score.

    ``score[i, j]`` is the (finite, nonnegative) reward for pairing row i
    with column j.  Exactly min(rows, cols) pairs are selected.  Solved by
    shortest augmenting paths on the negated matrix (Jonker-Volgenant
    style), which is exactly optimal for any real-valued rewards.
    """
    score = np.asarray(score, dtype=float)
    if score.ndim != 2 or score.size == 0:
        raise ValueError("assign_max expects a non-empty 2-d score matrix")
    if not np.all(np.isfinite(score)):
        raise ValueError("assign_max scores must be finite")
    if np.any(score < 0):
        raise ValueError("assign_max scores must be nonnegative")

    transposed = score.shape[0] > score.shape[1]
    cost = -(score.T if transposed else score)
    n, m = cost.shape

    # col_to_row[j] holds the row matched to column j; index 0 is a virtual
    # column used to stage the row currently being inserted.
    u = np.zeros(n)
    v = np.zeros(m + 1)
    col_to_row = np.full(m + 1, -1, dtype=int)
    path = np.zeros(m + 1, dtype=int)

    for row in range(n):
        col_to_row[0] = row
        j0 = 0
        min_slack = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_to_row[j0]
            delta = np.inf
            j1 = -1
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = cost[i0, j - 1] - u[i0] - v[j]
                if cur < min_slack[j]:
                    min_slack[j] = cur
                    path[j] = j0
                if min_slack[j] < delta:
                    delta = min_slack[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[col_to_row[j]] += delta
                    v[j] -= delta
                else:
                    min_slack[j] -= delta
            j0 = j1
            if col_to_row[j0] == -1:
                break
        while j0 != 0:
            j1 = path[j0]
            col_to_row[j0] = col_to_row[j1]
            j0 = j1

    pairs = []
    for j in range(1, m + 1):
        if col_to_row[j] >= 0:
            if transposed:
                pairs.append((j - 1, int(col_to_row[j])))
            else:
                pairs.append((int(col_to_row[j]), j - 1))
    pairs.sort()
    return pairs
