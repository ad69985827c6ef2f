"""Truncated multi-jet ("multidual") arithmetic.

A multidual number of order r is a = sum_A a_A e_A over subsets A of
{1..r}, where the generators satisfy e_i * e_i = 0.  Blocks are stored in
bitmask order (bit j-1 <-> generator e_j), so an order-r value has 2^r
real blocks and order 0 is a plain real.  Evaluating a smooth function
over these numbers produces all its mixed first partials exactly, which
is what realizes vertical/complete lifts of functions and, composed with
spray coefficients, iterated lifts of semisprays.

Blocks may carry trailing batch dimensions; all operations broadcast over
them, so one evaluation can compute, say, every column of a connection
matrix at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, OrderMismatch, SingularJet

MAX_ORDER = 6


def _mul_blocks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Subset-convolution product: (a*b)_A = sum_{B subset A} a_B b_{A\\B}."""
    m = a.shape[0]
    if m == 1:
        return a * b
    h = m // 2
    lo = _mul_blocks(a[:h], b[:h])
    hi = _mul_blocks(a[:h], b[h:]) + _mul_blocks(a[h:], b[:h])
    return np.concatenate([lo, hi])


def _div_blocks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Division on blocks; requires a nonzero real part throughout."""
    m = a.shape[0]
    if m == 1:
        return a / b
    h = m // 2
    q0 = _div_blocks(a[:h], b[:h])
    q1 = _div_blocks(a[h:] - _mul_blocks(q0, b[h:]), b[:h])
    return np.concatenate([q0, q1])


@dataclass(frozen=True)
class MultidualValue:
    """A truncated multi-jet with 2^order blocks in bitmask order."""

    order: int
    blocks: np.ndarray

    def __post_init__(self):
        if not 0 <= self.order <= MAX_ORDER:
            raise OrderMismatch(f"order must be in [0, {MAX_ORDER}]")
        b = np.asarray(self.blocks, dtype=float)
        if b.shape[0] != (1 << self.order):
            raise OrderMismatch(
                f"expected {1 << self.order} blocks, got shape {b.shape}"
            )
        object.__setattr__(self, "blocks", b)

    @property
    def real(self):
        return self.blocks[0]

    def block(self, mask: int):
        return self.blocks[mask]

    def _other_blocks(self, other) -> np.ndarray:
        if isinstance(other, MultidualValue):
            if other.order != self.order:
                raise OrderMismatch(f"order {other.order} != {self.order}")
            return other.blocks
        return None

    # -- ring operations -------------------------------------------------

    def __add__(self, other):
        ob = self._other_blocks(other)
        if ob is None:
            out = self.blocks.copy()
            out[0] = out[0] + other
            return MultidualValue(self.order, out)
        return MultidualValue(self.order, self.blocks + ob)

    __radd__ = __add__

    def __sub__(self, other):
        ob = self._other_blocks(other)
        if ob is None:
            out = self.blocks.copy()
            out[0] = out[0] - other
            return MultidualValue(self.order, out)
        return MultidualValue(self.order, self.blocks - ob)

    def __rsub__(self, other):
        out = -self.blocks
        out[0] = out[0] + other
        return MultidualValue(self.order, out)

    def __neg__(self):
        return MultidualValue(self.order, -self.blocks)

    def __mul__(self, other):
        ob = self._other_blocks(other)
        if ob is None:
            return MultidualValue(self.order, self.blocks * other)
        return MultidualValue(self.order, _mul_blocks(self.blocks, ob))

    __rmul__ = __mul__

    def __truediv__(self, other):
        ob = self._other_blocks(other)
        if ob is None:
            if np.any(np.asarray(other) == 0):
                raise SingularJet("division by zero")
            return MultidualValue(self.order, self.blocks / other)
        if np.any(ob[0] == 0.0):
            raise SingularJet("division by multidual with zero real part")
        return MultidualValue(self.order, _div_blocks(self.blocks, ob))

    def __rtruediv__(self, other):
        if np.any(self.blocks[0] == 0.0):
            raise SingularJet("division by multidual with zero real part")
        num = np.zeros_like(self.blocks)
        num[0] = num[0] + other
        return MultidualValue(self.order, _div_blocks(num, self.blocks))

    def __pow__(self, k):
        return powi(self, k)

    def __repr__(self):
        return f"MultidualValue(order={self.order}, blocks={self.blocks.tolist()})"


def variable(order: int, value: float, mask: int = 0) -> MultidualValue:
    """An order-r value `value + e_A` where A is given as a bitmask.

    With mask 0 this is just the constant embedding.
    """
    b = np.zeros(1 << order)
    b[0] = value
    if mask:
        b[mask] = 1.0
    return MultidualValue(order, b)


def constant(order: int, value: float) -> MultidualValue:
    return variable(order, value, 0)


def _coerce(x, order: int) -> MultidualValue:
    if isinstance(x, MultidualValue):
        if x.order != order:
            raise OrderMismatch(f"order {x.order} != {order}")
        return x
    b = np.zeros((1 << order,) + np.shape(x))
    b[0] = x
    return MultidualValue(order, b)


# -- elementary functions -------------------------------------------------
# Recursive splitting on the highest generator: f(u + e v) = f(u) + e f'(u) v
# with u, v one order lower.  Truncation is exact by nilpotency.


def _split(a: MultidualValue):
    h = 1 << (a.order - 1)
    return (MultidualValue(a.order - 1, a.blocks[:h]),
            MultidualValue(a.order - 1, a.blocks[h:]))


def _join(lo: MultidualValue, hi: MultidualValue) -> MultidualValue:
    lob, hib = np.broadcast_arrays(lo.blocks, hi.blocks)
    return MultidualValue(lo.order + 1, np.concatenate([lob, hib]))


def sin(a):
    if not isinstance(a, MultidualValue):
        return np.sin(a)
    if a.order == 0:
        return MultidualValue(0, np.sin(a.blocks))
    u, v = _split(a)
    return _join(sin(u), cos(u) * v)


def cos(a):
    if not isinstance(a, MultidualValue):
        return np.cos(a)
    if a.order == 0:
        return MultidualValue(0, np.cos(a.blocks))
    u, v = _split(a)
    return _join(cos(u), -(sin(u) * v))


def exp(a):
    if not isinstance(a, MultidualValue):
        return np.exp(a)
    if a.order == 0:
        return MultidualValue(0, np.exp(a.blocks))
    u, v = _split(a)
    eu = exp(u)
    return _join(eu, eu * v)


def ln(a):
    if not isinstance(a, MultidualValue):
        if np.any(np.asarray(a) <= 0):
            raise DomainError("ln requires a positive argument")
        return np.log(a)
    if np.any(a.blocks[0] <= 0):
        raise DomainError("ln requires a positive real part")
    if a.order == 0:
        return MultidualValue(0, np.log(a.blocks))
    u, v = _split(a)
    return _join(ln(u), v / u)


def sqrt(a):
    if not isinstance(a, MultidualValue):
        if np.any(np.asarray(a) <= 0):
            raise DomainError("sqrt requires a positive argument")
        return np.sqrt(a)
    if np.any(a.blocks[0] <= 0):
        raise DomainError("sqrt requires a positive real part")
    if a.order == 0:
        return MultidualValue(0, np.sqrt(a.blocks))
    u, v = _split(a)
    s = sqrt(u)
    return _join(s, v / (s * 2.0))


def powi(a, k: int):
    """Integer power by repeated squaring."""
    if not isinstance(a, MultidualValue):
        return np.asarray(a, float) ** k if np.ndim(a) else float(a) ** k
    k = int(k)
    if k < 0:
        return 1.0 / powi(a, -k)
    shape = (1 << a.order,) + a.blocks.shape[1:]
    out_b = np.zeros(shape)
    out_b[0] = 1.0
    out = MultidualValue(a.order, out_b)
    base = a
    while k:
        if k & 1:
            out = out * base
        base = base * base
        k >>= 1
    return out


# -- vertical / complete lifts of functions --------------------------------

LiftableFunction = Callable[..., object]


def _swap_bits(mask: int, j: int, k: int) -> int:
    # bits are 1-based generator indices
    bj = (mask >> (j - 1)) & 1
    bk = (mask >> (k - 1)) & 1
    if bj == bk:
        return mask
    return mask ^ ((1 << (j - 1)) | (1 << (k - 1)))


def lift(f: LiftableFunction, which: str, s: int = 0) -> LiftableFunction:
    """Lift a scalar function living one tangent level down.

    `f` takes the coordinates of a T^sM point as positional arguments in
    bitmask-block order (all chart components of mask 0, then mask 1, ...);
    each argument may be a float or a MultidualValue.  The returned callable
    takes the T^{s+1}M coordinates in the same layout (twice as many) and
    returns the vertical lift f(x, X) or the complete lift
    df/dx.y + df/dy.Y evaluated at (x, X), obtained by regrouping the inputs
    through the top-two-bit swap and evaluating f over one fresh nilpotent
    generator.
    """
    if which not in ("vertical", "complete"):
        raise ValueError(f"unknown lift kind {which!r}")

    def lifted(*coords):
        m = len(coords)
        nmasks = 1 << (s + 1)
        if m % nmasks:
            raise ValueError(f"expected a multiple of {nmasks} coordinates")
        n = m // nmasks
        base = {}
        dot = {}
        for mask in range(nmasks):
            swapped = _swap_bits(mask, s, s + 1) if s >= 1 else mask
            group = coords[mask * n:(mask + 1) * n]
            if swapped & (1 << s):
                dot[swapped & ~(1 << s)] = group
            else:
                base[swapped] = group
        orders = [c.order for c in coords if isinstance(c, MultidualValue)]
        q = max(orders) if orders else 0
        args = []
        for mask in range(1 << s):
            for b, d in zip(base[mask], dot[mask]):
                args.append(_join(_coerce(b, q), _coerce(d, q)))
        val = _coerce(f(*args), q + 1)
        lo, hi = _split(val)
        out = lo if which == "vertical" else hi
        if q == 0 and out.blocks.ndim == 1:
            return float(out.real)
        return out

    return lifted
