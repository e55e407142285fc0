# src/fields.py
"""
Discretization of the periodic channel [0, 2pi) x [-1, 0].

q: uniform Fourier collocation. p: Chebyshev-Lobatto nodes mapped to [-1, 0],
ordered from the bed (p = -1) to the surface (p = 0). Field values are stored
as arrays of shape (nq, np) indexed [q, p].
"""
import csv
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Optional

import numpy as np

from .errors import GridError, NumericalFailure, StorageError
from .storage import save_csv

logger = logging.getLogger(__name__)

EVEN = "even"
ODD = "odd"
_PARITY_TOL = 1e-12


# -----------------------------
# 1-D building blocks
# -----------------------------
def chebyshev_matrix(n_nodes: int):
    """
    Nodes and first-derivative matrix on [-1, 0] (ascending p).
    Off-diagonal entries from the closed form, diagonal by the negative-sum
    trick so constants are annihilated exactly.
    """
    N = n_nodes - 1
    j = np.arange(N + 1)
    x = np.cos(np.pi * j / N)
    c = np.where((j == 0) | (j == N), 2.0, 1.0) * (-1.0) ** j
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D = D - np.diag(D.sum(axis=1))
    # p = -(1 + x)/2, so d/dp = -2 d/dx
    return -(1.0 + x) / 2.0, -2.0 * D


def clenshaw_curtis_weights(n_nodes: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the mapped nodes; they sum to 1 on [-1, 0]."""
    N = n_nodes - 1
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N ** 2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k ** 2 - 1)
        v -= np.cos(N * theta[ii]) / (N ** 2 - 1)
    else:
        w[0] = w[N] = 1.0 / N ** 2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k ** 2 - 1)
    w[ii] = 2.0 * v / N
    return w / 2.0


def fourier_matrix(nq: int, order: int) -> np.ndarray:
    """Periodic differentiation matrix of the given order on nq uniform nodes."""
    k = np.fft.fftfreq(nq, d=1.0 / nq)
    if order % 2 == 1:
        k[nq // 2] = 0.0  # Nyquist mode has no real odd derivative
    symbol = (1j * k) ** order
    D = np.fft.ifft(symbol[:, None] * np.fft.fft(np.eye(nq), axis=0), axis=0)
    return np.real(D)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


# -----------------------------
# Grid
# -----------------------------
@dataclass(frozen=True, eq=False)
class Grid:
    nq: int
    np: int
    q: np.ndarray
    p: np.ndarray
    wq: np.ndarray
    wp: np.ndarray
    Dq: np.ndarray
    Dqq: np.ndarray
    Dp: np.ndarray
    Dpp: np.ndarray

    @property
    def shape(self):
        return (self.nq, self.np)

    @property
    def size(self) -> int:
        return self.nq * self.np

    def mesh(self):
        return np.meshgrid(self.q, self.p, indexing="ij")

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.wq, self.wp)


@lru_cache(maxsize=16)
def make_grid(nq: int, np_: int) -> Grid:
    if not isinstance(nq, (int, np.integer)) or not isinstance(np_, (int, np.integer)):
        raise GridError("grid sizes must be integers")
    if nq <= 0 or nq % 2:
        raise GridError(f"nq={nq} must be a positive even integer")
    if np_ < 4:
        raise GridError(f"np={np_} must be at least 4")
    q = 2.0 * np.pi * np.arange(nq) / nq
    p, Dp = chebyshev_matrix(np_)
    logger.debug("grid %dx%d built", nq, np_)
    return Grid(
        nq=int(nq),
        np=int(np_),
        q=_frozen(q),
        p=_frozen(p),
        wq=_frozen(np.full(nq, 2.0 * np.pi / nq)),
        wp=_frozen(clenshaw_curtis_weights(np_)),
        Dq=_frozen(fourier_matrix(nq, 1)),
        Dqq=_frozen(fourier_matrix(nq, 2)),
        Dp=_frozen(Dp),
        Dpp=_frozen(Dp @ Dp),
    )


# -----------------------------
# Field2D
# -----------------------------
class Field2D:
    """A sampled function on a Grid, optionally tagged even/odd in q."""

    __slots__ = ("grid", "values", "parity")

    def __init__(self, grid: Grid, values, parity: Optional[str] = None):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise GridError(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericalFailure("field contains NaN or Inf")
        if parity not in (None, EVEN, ODD):
            raise GridError(f"unknown parity {parity!r}")
        if parity is not None:
            mirrored = values[_mirror_index(grid.nq)]
            sign = 1.0 if parity == EVEN else -1.0
            scale = max(1.0, float(np.max(np.abs(values))))
            if np.max(np.abs(values - sign * mirrored)) > _PARITY_TOL * scale:
                raise GridError(f"values are not {parity} in q")
        self.grid = grid
        self.values = values
        self.parity = parity

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable, parity: Optional[str] = None) -> "Field2D":
        Q, P = grid.mesh()
        return cls(grid, np.broadcast_to(fn(Q, P), grid.shape), parity)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field2D":
        return cls(grid, np.zeros(grid.shape), EVEN)

    def with_values(self, values, parity: Optional[str] = None) -> "Field2D":
        return Field2D(self.grid, values, parity)

    # ----- arithmetic -----
    def _join_parity(self, other: "Field2D") -> Optional[str]:
        return self.parity if self.parity == other.parity else None

    def __add__(self, other):
        if isinstance(other, Field2D):
            return Field2D(self.grid, self.values + other.values, self._join_parity(other))
        return Field2D(self.grid, self.values + other, self.parity if self.parity == EVEN else None)

    def __sub__(self, other):
        if isinstance(other, Field2D):
            return Field2D(self.grid, self.values - other.values, self._join_parity(other))
        return Field2D(self.grid, self.values - other, self.parity if self.parity == EVEN else None)

    def __mul__(self, scalar: float):
        return Field2D(self.grid, self.values * float(scalar), self.parity)

    __rmul__ = __mul__

    def __neg__(self):
        return Field2D(self.grid, -self.values, self.parity)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self) -> str:
        return f"Field2D({self.grid.nq}x{self.grid.np}, parity={self.parity}, max|f|={self.max_abs():.3g})"


def _mirror_index(nq: int) -> np.ndarray:
    return (-np.arange(nq)) % nq


def _flip(parity: Optional[str]) -> Optional[str]:
    return {EVEN: ODD, ODD: EVEN}.get(parity)


# -----------------------------
# Differentiation
# -----------------------------
def _derived(grid: Grid, values: np.ndarray, parity: Optional[str]) -> Field2D:
    """
    Wrap a derivative, restoring exact parity. Differentiation matrices
    amplify last-bit asymmetries of the input by their norm, which grows like
    np^4 for d_pp.
    """
    if parity is not None:
        sign = 1.0 if parity == EVEN else -1.0
        values = 0.5 * (values + sign * values[_mirror_index(grid.nq)])
    return Field2D(grid, values, parity)


def d_q(f: Field2D) -> Field2D:
    return _derived(f.grid, f.grid.Dq @ f.values, _flip(f.parity))


def d_qq(f: Field2D) -> Field2D:
    return _derived(f.grid, f.grid.Dqq @ f.values, f.parity)


def d_p(f: Field2D) -> Field2D:
    return _derived(f.grid, f.values @ f.grid.Dp.T, f.parity)


def d_pp(f: Field2D) -> Field2D:
    return _derived(f.grid, f.values @ f.grid.Dpp.T, f.parity)


def d_qp(f: Field2D) -> Field2D:
    return _derived(f.grid, f.grid.Dq @ f.values @ f.grid.Dp.T, _flip(f.parity))


# -----------------------------
# Traces, quadrature, parity
# -----------------------------
def trace_top(f: Field2D) -> np.ndarray:
    return f.values[:, -1].copy()


def trace_bottom(f: Field2D) -> np.ndarray:
    return f.values[:, 0].copy()


def integrate(f: Field2D) -> float:
    """Double integral over the channel."""
    return float(f.grid.wq @ f.values @ f.grid.wp)


def integrate_top(grid: Grid, b: np.ndarray) -> float:
    """Integral over the top boundary of samples at the q-nodes."""
    return float(grid.wq @ np.asarray(b, dtype=float))


def project_even(f: Field2D) -> Field2D:
    v = 0.5 * (f.values + f.values[_mirror_index(f.grid.nq)])
    return Field2D(f.grid, v, EVEN)


# -----------------------------
# Even, bed-free unknowns
# -----------------------------
class EvenSubspace:
    """
    Coordinates of fields that are even in q and vanish at p = -1.

    Unknowns are the values at q-nodes 0..nq/2 and p-nodes 1..np-1, flattened
    in C order; `extension` maps the half grid back onto all q-nodes.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        nq = grid.nq
        self.m = nq // 2 + 1
        half = np.minimum(np.arange(nq), nq - np.arange(nq))
        ext = np.zeros((nq, self.m))
        ext[np.arange(nq), half] = 1.0
        self.extension = ext
        # derivative operators acting on half-grid columns, evaluated on half-grid rows
        self.Aq = (grid.Dq @ ext)[: self.m]
        self.Aqq = (grid.Dqq @ ext)[: self.m]
        self.top_weights = self._top_weights()

    @property
    def size(self) -> int:
        return self.m * (self.grid.np - 1)

    def pack(self, f: Field2D) -> np.ndarray:
        return f.values[: self.m, 1:].ravel().copy()

    def unpack(self, u: np.ndarray) -> Field2D:
        full = np.zeros(self.grid.shape)
        full[:, 1:] = self.extension @ np.asarray(u).reshape(self.m, self.grid.np - 1)
        return Field2D(self.grid, full, EVEN)

    def _top_weights(self) -> np.ndarray:
        """Row w with w . u = (2/nq) sum_j f(q_j, 0) cos q_j for f = unpack(u)."""
        nq = self.grid.nq
        mult = np.full(self.m, 2.0)
        mult[0] = mult[-1] = 1.0
        w = np.zeros((self.m, self.grid.np - 1))
        w[:, -1] = 2.0 / nq * mult * np.cos(self.grid.q[: self.m])
        return w.ravel()

    def metric(self) -> np.ndarray:
        """
        Diagonal of the quadratic form u . (w * u) = integral of f^2 over the
        channel for f = unpack(u). Interior half-grid rows stand for two q-nodes.
        """
        mult = np.full(self.m, 2.0)
        mult[0] = mult[-1] = 1.0
        w = np.outer(mult * self.grid.wq[: self.m], self.grid.wp[1:])
        return w.ravel()


# -----------------------------
# Serialization
# -----------------------------
def field_to_dict(f: Field2D) -> Dict[str, Any]:
    return {
        "nq": f.grid.nq,
        "np": f.grid.np,
        "parity": f.parity,
        "values": f.values.tolist(),
    }


def field_from_dict(data: Dict[str, Any]) -> Field2D:
    grid = make_grid(int(data["nq"]), int(data["np"]))
    return Field2D(grid, np.array(data["values"], dtype=float), data.get("parity"))


def field_to_csv(f: Field2D, path: str) -> None:
    Q, P = f.grid.mesh()
    rows = zip(Q.ravel().tolist(), P.ravel().tolist(), f.values.ravel().tolist())
    save_csv(path, ["q", "p", "value"], rows)


def field_from_csv(path: str) -> Field2D:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [(float(a), float(b), float(c)) for a, b, c in reader]
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    qs = sorted({r[0] for r in rows})
    ps = sorted({r[1] for r in rows})
    grid = make_grid(len(qs), len(ps))
    values = np.array([r[2] for r in rows]).reshape(grid.shape)
    return Field2D(grid, values)
