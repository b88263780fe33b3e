"""Small fixed-size matrix helpers and forward-mode dual numbers.

Matrices are accepted either as numpy arrays of shape ``(..., d, d)`` (leading
axes are a batch) or as nested ``d x d`` lists whose entries are scalars,
arrays or :class:`Dual` objects.  Entry-wise formulas are written out
explicitly so the same code runs on plain floats, point batches and duals.
"""

import numpy as np

from .exceptions import SingularMatrix


class Dual:
    """Forward-mode dual number with several tangent directions.

    ``val`` has shape ``batch`` and ``der`` has shape ``(k,) + batch`` where
    ``k`` is the number of seeded input variables (seed axis first so that
    broadcasting against ``val`` is contiguous).
    """

    __slots__ = ("val", "der")
    __array_priority__ = 100  # make ndarray <op> Dual defer to Dual

    def __init__(self, val, der):
        self.val = np.asarray(val, dtype=float)
        self.der = np.asarray(der, dtype=float)

    @classmethod
    def seed(cls, values, n_seeds, offset=0):
        """Return duals for ``values[..., m]`` seeded on ``offset + m``.

        ``values`` has shape ``batch + (m,)``.
        """
        values = np.asarray(values, dtype=float)
        out = []
        for a in range(values.shape[-1]):
            der = np.zeros((n_seeds,) + values.shape[:-1])
            der[offset + a] = 1.0
            out.append(cls(values[..., a], der))
        return out

    @property
    def n_seeds(self):
        return self.der.shape[0]

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        val = self.val + other
        return Dual(val, np.broadcast_to(self.der, (self.n_seeds,) + val.shape))

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return self + (-np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.der * other.val + other.der * self.val)
        c = np.asarray(other, dtype=float)
        return Dual(self.val * c, self.der * c)

    __rmul__ = __mul__

    def reciprocal(self):
        r = 1.0 / self.val
        return Dual(r, self.der * (-r * r))

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        return Dual(self.val**p, self.der * (p * self.val ** (p - 1)))

    def log(self):
        return Dual(np.log(self.val), self.der / self.val)

    def exp(self):
        e = np.exp(self.val)
        return Dual(e, self.der * e)

    def sqrt(self):
        s = np.sqrt(self.val)
        return Dual(s, self.der * (0.5 / s))

    def sin(self):
        return Dual(np.sin(self.val), self.der * np.cos(self.val))

    def cos(self):
        return Dual(np.cos(self.val), -self.der * np.sin(self.val))

    def __repr__(self):
        return f"Dual(val={self.val!r}, der={self.der!r})"


def log(x):
    return x.log() if isinstance(x, Dual) else np.log(x)


def exp(x):
    return x.exp() if isinstance(x, Dual) else np.exp(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Dual) else np.sqrt(x)


def value(x):
    """Strip derivative information (no-op for non-duals)."""
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


# -- matrix helpers --------------------------------------------------------


def entries(m):
    """Return ``m`` as a nested list of entries plus its dimension."""
    if isinstance(m, np.ndarray):
        if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
            raise ValueError(f"expected (..., d, d) array, got shape {m.shape}")
        d = m.shape[-1]
        return [[m[..., i, j] for j in range(d)] for i in range(d)], d
    d = len(m)
    if any(len(row) != d for row in m):
        raise ValueError("matrix must be square")
    return m, d


def assemble(rows):
    """Inverse of :func:`entries` for non-dual entries."""
    if any(isinstance(x, Dual) for row in rows for x in row):
        return rows
    return np.stack([np.stack([np.asarray(x, dtype=float) for x in row], axis=-1) for row in rows], axis=-2)


def identity(d):
    return np.eye(d)


def det(m):
    """Determinant by cofactor expansion (d = 2 or 3)."""
    a, d = entries(m)
    if d == 2:
        return a[0][0] * a[1][1] - a[0][1] * a[1][0]
    if d == 3:
        return (
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        )
    raise ValueError(f"only d in (2, 3) supported, got {d}")


def cofactor(m):
    """Cofactor matrix, so that ``adj(m) = cofactor(m).T`` and d det/dm = cofactor."""
    a, d = entries(m)
    if d == 2:
        rows = [[a[1][1], -a[1][0]], [-a[0][1], a[0][0]]]
    elif d == 3:
        rows = [[None] * 3 for _ in range(3)]
        for i in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            for j in range(3):
                j1, j2 = (j + 1) % 3, (j + 2) % 3
                rows[i][j] = a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]
    else:
        raise ValueError(f"only d in (2, 3) supported, got {d}")
    return rows


def frob_norm_sq(m):
    a, d = entries(m)
    total = 0.0
    for i in range(d):
        for j in range(d):
            total = total + a[i][j] * a[i][j]
    return total


def inv_threshold(m):
    """Singularity guard: 1e-12 * max(1, ||m||_F ** d)."""
    a, d = entries(m)
    norm = np.sqrt(value(frob_norm_sq(a)))
    return 1e-12 * np.maximum(1.0, norm**d)


def inv(m):
    """Inverse through the adjugate; raises :class:`SingularMatrix` if near-singular."""
    a, d = entries(m)
    det_m = det(a)
    if np.any(np.abs(value(det_m)) <= inv_threshold(a)):
        raise SingularMatrix("matrix is singular to working precision")
    cof = cofactor(a)
    inv_det = 1.0 / det_m
    rows = [[cof[j][i] * inv_det for j in range(d)] for i in range(d)]
    return assemble(rows) if isinstance(m, np.ndarray) else rows


def transpose(m):
    a, d = entries(m)
    rows = [[a[j][i] for j in range(d)] for i in range(d)]
    return assemble(rows) if isinstance(m, np.ndarray) else rows
