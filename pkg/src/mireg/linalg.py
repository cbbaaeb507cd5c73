"""Small dense numeric kernels: symmetric eigensolver, 3x3 SVD and k-means."""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceFailure

# matrices up to this size go through the Jacobi solver under method="auto"
JACOBI_MAX_N = 32


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (a + a.T)


def _canonical_signs(vecs, tol=1e-12):
    # first component that is clearly nonzero is made positive
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        big = np.flatnonzero(np.abs(col) > tol * max(1.0, np.abs(col).max()))
        if big.size and col[big[0]] < 0:
            vecs[:, k] = -col
    return vecs


def jacobi_eig(a, tol=1e-15, max_sweeps=None):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) unsorted. Raises ConvergenceFailure
    when the off-diagonal mass does not vanish within ``max_sweeps`` sweeps
    (default n**2, at least 10).
    """
    a = symmetrize(a).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    if max_sweeps is None:
        max_sweeps = max(10, n * n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * float(np.sum(a[iu] ** 2)))
        if off <= tol * scale:
            return a.diagonal().copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise ConvergenceFailure(f"Jacobi did not converge in {max_sweeps} sweeps (n={n})")


def sym_eig(a, method="auto"):
    """Full eigendecomposition of a symmetric matrix, eigenvalues ascending.

    ``method`` is "jacobi", "lapack" or "auto" (Jacobi for small matrices,
    LAPACK's divide-and-conquer otherwise). Eigenvector signs are fixed so the
    first clearly nonzero component is positive, which makes the output a
    deterministic function of the input.
    """
    a = symmetrize(a)
    n = a.shape[0]
    if n < 1:
        raise ValueError("empty matrix")
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_N else "lapack"
    if method == "jacobi":
        w, v = jacobi_eig(a)
    elif method == "lapack":
        w, v = np.linalg.eigh(a)
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], _canonical_signs(v[:, order]))


def _unit_orthogonal(u):
    # any unit vector orthogonal to unit vector u
    i = int(np.argmin(np.abs(u)))
    e = np.zeros(3)
    e[i] = 1.0
    w = e - u * u[i]
    return w / np.linalg.norm(w)


def svd3(m):
    """SVD of a 3x3 matrix by one-sided (Hestenes) Jacobi rotations.

    Returns (U, S, V) with ``m = U @ diag(S) @ V.T``, S descending and
    non-negative, U and V orthogonal.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    # columns as python lists: much faster than numpy for 3-vectors
    a = [[float(x) for x in m[:, j]] for j in range(3)]
    v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    eps = 1e-15
    for _ in range(60):
        rotated = False
        for p, q in ((0, 1), (0, 2), (1, 2)):
            ap, aq = a[p], a[q]
            alpha = ap[0] * ap[0] + ap[1] * ap[1] + ap[2] * ap[2]
            beta = aq[0] * aq[0] + aq[1] * aq[1] + aq[2] * aq[2]
            gamma = ap[0] * aq[0] + ap[1] * aq[1] + ap[2] * aq[2]
            if gamma == 0.0 or abs(gamma) <= eps * math.sqrt(alpha * beta):
                continue
            rotated = True
            diff = beta - alpha
            if abs(gamma) < 1e-150 * abs(diff):
                t = gamma / diff  # tan of a vanishing angle; avoids overflow in zeta
            else:
                zeta = diff / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = c * t
            a[p] = [c * x - s * y for x, y in zip(ap, aq)]
            a[q] = [s * x + c * y for x, y in zip(ap, aq)]
            vp, vq = v[p], v[q]
            v[p] = [c * x - s * y for x, y in zip(vp, vq)]
            v[q] = [s * x + c * y for x, y in zip(vp, vq)]
        if not rotated:
            break
    cols = np.array(a).T
    vmat = np.array(v).T
    sig = np.sqrt(np.sum(cols * cols, axis=0))
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    cols = cols[:, order]
    vmat = vmat[:, order]
    u = np.zeros((3, 3))
    for k in range(3):
        if sig[k] > 1e-300:
            u[:, k] = cols[:, k] / sig[k]
        elif k == 0:
            u[:, 0] = (1.0, 0.0, 0.0)
        elif k == 1:
            u[:, 1] = _unit_orthogonal(u[:, 0])
        else:
            u[:, 2] = np.cross(u[:, 0], u[:, 1])
    return u, sig, vmat


def _sq_dists(rows, centers):
    d = (
        np.sum(rows * rows, axis=1)[:, None]
        - 2.0 * rows @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def farthest_point_seeds(rows, k, rng):
    """Indices of k seeds: one uniform draw, then repeated farthest points."""
    n = rows.shape[0]
    first = int(rng.integers(n))
    idx = [first]
    mind = np.sum((rows - rows[first]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(mind))
        idx.append(nxt)
        mind = np.minimum(mind, np.sum((rows - rows[nxt]) ** 2, axis=1))
    return np.array(idx)


def _fill_empty(labels, rows, centers, k):
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        d = np.sum((rows[members] - centers[big]) ** 2, axis=1)
        moved = members[int(np.argmax(d))]
        labels[moved] = c
        centers[c] = rows[moved]
        counts[big] -= 1
        counts[c] = 1
    return labels


def kmeans(rows, k, seed, max_iter=300, history=None):
    """Lloyd's k-means with farthest-point seeding.

    Returns an integer label in ``[0, k)`` per row; every cluster is non-empty.
    If ``history`` is a list, the within-cluster sum of squares after each
    assignment step is appended to it.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-D array")
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centers = rows[farthest_point_seeds(rows, k, rng)].copy()
    labels = None
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(rows, centers), axis=1)
        new = _fill_empty(new, rows, centers, k)
        if history is not None:
            history.append(float(np.sum((rows - centers[new]) ** 2)))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = rows[labels == c].mean(axis=0)
    return labels
