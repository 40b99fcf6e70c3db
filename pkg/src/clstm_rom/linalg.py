"""Dense linear algebra: products, Jacobi SVD and POD bases.

Matrices are plain 2-D float64 numpy arrays.  Snapshot matrices hold one
state per column.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

RANK_TOL = 1e-12
"""Singular values below ``RANK_TOL * sigma_max`` count as zero."""


class ContractError(ValueError):
    """An operation was called with inputs that violate its preconditions."""


class DegenerateInputError(ContractError):
    pass


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def check_finite(a, name="matrix"):
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} contains NaN or Inf")
    return a


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "product")


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def rank(self):
        if self.sigma.size == 0 or self.sigma[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.sigma > RANK_TOL * self.sigma[0]))


def _complete_columns(q, k):
    """Orthonormal columns spanning q's range plus enough extra to reach k columns."""
    n, r = q.shape
    if r >= k:
        return q
    cols = [q[:, j] for j in range(r)]
    for e in range(n):
        if len(cols) == k:
            break
        v = np.zeros(n)
        v[e] = 1.0
        for _ in range(2):
            for c in cols:
                v -= (c @ v) * c
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            cols.append(v / norm)
    return np.column_stack(cols)


def _jacobi_thin(a):
    """Thin SVD of a tall matrix (rows >= cols)."""
    m, n = a.shape
    # QR shrinks the Jacobi sweeps to an n x n problem
    q, r = np.linalg.qr(a, mode="reduced")
    rt = np.ascontiguousarray(r.T)
    vt = np.eye(n)
    kernels.jacobi_rows(rt, vt, 1e-15, 80)
    sigma = np.sqrt(np.einsum("ij,ij->i", rt, rt))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    rt = rt[order]
    vt = vt[order]
    keep = sigma > RANK_TOL * sigma[0] if sigma[0] > 0 else np.zeros(n, dtype=bool)
    ur = np.zeros((n, n))
    ur[:, keep] = (rt[keep] / sigma[keep, None]).T
    r_eff = int(keep.sum())
    ur[:, :r_eff] = _reorthonormalize(ur[:, :r_eff])
    ur = _complete_columns(ur[:, :r_eff], n)
    sigma = np.where(keep, sigma, 0.0)
    return q @ ur, sigma, vt


def _reorthonormalize(u):
    # one modified Gram-Schmidt pass removes round-off drift after Jacobi
    u = u.copy()
    for j in range(u.shape[1]):
        for i in range(j):
            u[:, j] -= (u[:, i] @ u[:, j]) * u[:, i]
        u[:, j] /= np.linalg.norm(u[:, j])
    return u


def svd(s):
    """Thin SVD ``s = u @ diag(sigma) @ vt`` with min(rows, cols) triplets.

    Each left singular vector is signed so its largest-magnitude entry is
    non-negative.
    """
    s = as_matrix(s, "s")
    if s.size == 0:
        raise ContractError("svd of an empty matrix")
    if not np.all(np.isfinite(s)):
        raise ContractError("svd input contains NaN or Inf")
    if s.shape[0] >= s.shape[1]:
        u, sigma, vt = _jacobi_thin(s)
    else:
        v, sigma, ut = _jacobi_thin(s.T)
        u, vt = ut.T, v.T
    u = np.array(u)
    vt = np.array(vt)
    idx = np.argmax(np.abs(u), axis=0)
    flip = u[idx, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    vt[flip] *= -1.0
    return SvdResult(u=u, sigma=sigma, vt=vt)


@dataclass(frozen=True)
class PodBasis:
    modes: np.ndarray
    singular_values: np.ndarray
    energy_ratio: float
    full_dim: int

    @property
    def n_modes(self):
        return self.modes.shape[1]


def _energy_rank(sigma, target_energy):
    total = float(np.sum(sigma))
    if total <= 0.0:
        raise DegenerateInputError("all singular values are zero")
    ratio = np.cumsum(sigma) / total
    n = int(np.searchsorted(ratio, target_energy, side="left")) + 1
    return min(n, sigma.size), total


def pod_truncate(result, target_energy, cap=None):
    """Smallest basis whose singular-value sum reaches ``target_energy``.

    ``cap`` optionally limits the mode count further, below the energy rank.
    """
    if not 0.0 < target_energy <= 1.0:
        raise ContractError(f"target_energy must be in (0, 1], got {target_energy}")
    sigma = np.asarray(result.sigma, dtype=np.float64)
    n, total = _energy_rank(sigma, target_energy)
    if cap is not None:
        if cap < 1:
            raise ContractError("coefficient cap must be >= 1")
        n = min(n, int(cap))
    return PodBasis(
        modes=np.ascontiguousarray(result.u[:, :n]),
        singular_values=sigma.copy(),
        energy_ratio=float(np.sum(sigma[:n]) / total),
        full_dim=result.u.shape[0],
    )


def pod(snapshots, target_energy, cap=None):
    return pod_truncate(svd(snapshots), target_energy, cap)


def block_pod(snapshots, block_sizes, target_energy, cap=None):
    """POD per row block, merged into one block-diagonal basis.

    Each block (e.g. one velocity component) gets its own energy-ranked
    modes.  The merged columns are ordered by singular value, so a ``cap``
    keeps the most energetic coefficients across all blocks.
    """
    snapshots = as_matrix(snapshots, "snapshots")
    if sum(block_sizes) != snapshots.shape[0]:
        raise ContractError(f"block sizes {block_sizes} do not sum to {snapshots.shape[0]} rows")
    if len(block_sizes) == 1:
        return pod(snapshots, target_energy, cap)
    cols, sig_kept, all_sigma = [], [], []
    start = 0
    for size in block_sizes:
        res = svd(snapshots[start:start + size])
        basis = pod_truncate(res, target_energy)
        block = np.zeros((snapshots.shape[0], basis.n_modes))
        block[start:start + size] = basis.modes
        cols.append(block)
        sig_kept.append(res.sigma[: basis.n_modes])
        all_sigma.append(res.sigma)
        start += size
    modes = np.hstack(cols)
    kept = np.concatenate(sig_kept)
    order = np.argsort(-kept, kind="stable")
    if cap is not None:
        order = order[: int(cap)]
    all_sigma = np.concatenate(all_sigma)
    return PodBasis(
        modes=np.ascontiguousarray(modes[:, order]),
        singular_values=kept[order],
        energy_ratio=float(np.sum(kept[order]) / np.sum(all_sigma)),
        full_dim=snapshots.shape[0],
    )


def pod_project(basis, s):
    s = as_matrix(s, "s")
    if s.shape[0] != basis.full_dim:
        raise ContractError(f"snapshot rows {s.shape[0]} != basis dimension {basis.full_dim}")
    return basis.modes.T @ s


def pod_lift(basis, coeffs):
    coeffs = as_matrix(coeffs, "coeffs")
    if coeffs.shape[0] != basis.n_modes:
        raise ContractError(f"coefficient rows {coeffs.shape[0]} != basis size {basis.n_modes}")
    return basis.modes @ coeffs


def basis_change(src, dst):
    """Matrix taking coordinates in ``src`` to coordinates in ``dst``."""
    if src.full_dim != dst.full_dim:
        raise ContractError(f"bases live in different spaces ({src.full_dim} vs {dst.full_dim})")
    return dst.modes.T @ src.modes


def matrix_to_csv(path, a):
    a = as_matrix(a)
    with open(path, "w", newline="\n") as fh:
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def matrix_from_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
