"""Points of iterated tangent bundles T^rM and their canonical structure maps.

A point is stored as 2^r chart vectors indexed by bitmask A over {1..r}.
Block A holds the mixed partial of a representing map W over the parameters
{s^{r-j+1} : j in A}, so bit 1 is the innermost derivative.  For r = 2 the
mask order (0, {1}, {2}, {1,2}) matches the coordinate notation (x, y, X, Y).
All structure maps below (involutions, projections, fiber operations) are
index permutations or selections on blocks, hence exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BadIndex, BadLevel, BadOrder, BaseMismatch


def _swap_bits(mask: int, j: int, k: int) -> int:
    bj = (mask >> (j - 1)) & 1
    bk = (mask >> (k - 1)) & 1
    if bj == bk:
        return mask
    return mask ^ ((1 << (j - 1)) | (1 << (k - 1)))


@dataclass(frozen=True)
class BundlePoint:
    """Element of T^rM over an n-dimensional chart: 2^r blocks in R^n."""

    n: int
    r: int
    blocks: np.ndarray  # shape (2^r, n), bitmask order

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=float)
        if b.shape != (1 << self.r, self.n):
            raise BadOrder(f"expected shape {(1 << self.r, self.n)}, got {b.shape}")
        object.__setattr__(self, "blocks", b)

    @property
    def base(self) -> np.ndarray:
        return self.blocks[0]

    def block(self, mask: int) -> np.ndarray:
        return self.blocks[mask]

    def allclose(self, other: "BundlePoint", tol: float = 0.0) -> bool:
        if (self.n, self.r) != (other.n, other.r):
            return False
        if tol == 0.0:
            return bool(np.array_equal(self.blocks, other.blocks))
        return bool(np.max(np.abs(self.blocks - other.blocks)) <= tol)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "r": self.r,
                           "blocks": self.blocks.tolist()})

    @staticmethod
    def from_json(text: str) -> "BundlePoint":
        d = json.loads(text)
        return BundlePoint(int(d["n"]), int(d["r"]), np.array(d["blocks"]))


@dataclass(frozen=True)
class SlashedFlag:
    member: bool


def involution(xi: BundlePoint, level: int) -> BundlePoint:
    """Apply kappa_level lifted to T^rM (kappa_r itself when level = r,
    Dkappa_{r-1} when level = r-1, and so on).  Swaps bits level-1 and level.
    """
    if xi.r < 2:
        raise BadLevel("involution needs order >= 2")
    if not 2 <= level <= xi.r:
        raise BadLevel(f"level {level} out of range [2, {xi.r}]")
    out = np.empty_like(xi.blocks)
    for mask in range(1 << xi.r):
        out[_swap_bits(mask, level - 1, level)] = xi.blocks[mask]
    return BundlePoint(xi.n, xi.r, out)


def _drop_bit(xi: BundlePoint, bit: int) -> BundlePoint:
    """Drop masks containing `bit` and close the gap: bits above shift down."""
    out = np.empty((1 << (xi.r - 1), xi.n))
    for mask in range(1 << xi.r):
        if mask & (1 << (bit - 1)):
            continue
        low = mask & ((1 << (bit - 1)) - 1)
        high = mask >> bit
        out[low | (high << (bit - 1))] = xi.blocks[mask]
    return BundlePoint(xi.n, xi.r - 1, out)


def project(xi: BundlePoint, kind: str) -> BundlePoint:
    """Canonical projections one order down.

    pi drops the top bit; dpi = Dpi_{r-2} drops bit r-1 (remapping r -> r-1);
    ddpi = DDpi_{r-3} drops bit r-2 (remapping r-1 -> r-2, r -> r-1).
    """
    if kind == "pi":
        if xi.r < 1:
            raise BadOrder("pi needs order >= 1")
        return _drop_bit(xi, xi.r)
    if kind == "dpi":
        if xi.r < 2:
            raise BadOrder("dpi needs order >= 2")
        return _drop_bit(xi, xi.r - 1)
    if kind == "ddpi":
        if xi.r < 3:
            raise BadOrder("ddpi needs order >= 3")
        return _drop_bit(xi, xi.r - 2)
    raise ValueError(f"unknown projection kind {kind!r}")


def canonical_projection(xi: BundlePoint, a: int) -> BundlePoint:
    """The a-th canonical projection T^rM -> TM: (blocks[0], blocks[{a}])."""
    if xi.r < 1:
        raise BadOrder("canonical projection needs order >= 1")
    if not 1 <= a <= xi.r:
        raise BadIndex(f"index {a} out of range [1, {xi.r}]")
    return BundlePoint(xi.n, 1, np.stack([xi.blocks[0], xi.blocks[1 << (a - 1)]]))


def canonical_projection_recursive(xi: BundlePoint, a: int) -> BundlePoint:
    """Recursive definition of the canonical projections, kept as an oracle:
    p^(r)_i = p^(r-1)_i o pi for i < r and p^(r)_r = p^(r-1)_{r-1} o Dpi.
    """
    if xi.r < 1:
        raise BadOrder("canonical projection needs order >= 1")
    if not 1 <= a <= xi.r:
        raise BadIndex(f"index {a} out of range [1, {xi.r}]")
    if xi.r == 1:
        return xi
    if a < xi.r:
        return canonical_projection_recursive(project(xi, "pi"), a)
    return canonical_projection_recursive(project(xi, "dpi"), a - 1)


def fiber_combine(xi: BundlePoint, eta: BundlePoint = None, lam: float = 1.0,
                  mode: str = "add", tol: float = 1e-12) -> BundlePoint:
    """Fiber operations of T^rM as a vector bundle over T^{r-1}M: addition
    sums blocks containing the top bit, scaling multiplies them by lam.
    """
    if xi.r < 1:
        raise BadOrder("fiber operations need order >= 1")
    top = 1 << (xi.r - 1)
    out = xi.blocks.copy()
    if mode == "add":
        if eta is None or (eta.n, eta.r) != (xi.n, xi.r):
            raise BaseMismatch("fiber addition needs matching operands")
        base_diff = np.max(np.abs(xi.blocks[:top] - eta.blocks[:top]))
        if base_diff > tol:
            raise BaseMismatch(f"base points differ by {base_diff:g}")
        out[top:] = xi.blocks[top:] + eta.blocks[top:]
    elif mode == "scale":
        out[top:] = lam * xi.blocks[top:]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return BundlePoint(xi.n, xi.r, out)


def liouville(xi: BundlePoint) -> BundlePoint:
    """The Liouville vector at xi: the tangent of s -> (1+s) xi at s = 0,
    an element of T^{r+1}M whose derivative blocks copy the fiber blocks.
    """
    if xi.r < 1:
        raise BadOrder("liouville needs order >= 1")
    top_in = 1 << (xi.r - 1)
    out = np.zeros((1 << (xi.r + 1), xi.n))
    out[: 1 << xi.r] = xi.blocks
    for mask in range(1 << xi.r):
        if mask & top_in:
            out[mask | (1 << xi.r)] = xi.blocks[mask]
    return BundlePoint(xi.n, xi.r + 1, out)


def in_slashed(xi: BundlePoint) -> SlashedFlag:
    """Membership in the slashed bundle: the block at mask {r} (the base
    velocity after r-1 projections) must be a nonzero vector.
    """
    if xi.r < 1:
        raise BadOrder("slashed test needs order >= 1")
    v = xi.blocks[1 << (xi.r - 1)]
    return SlashedFlag(bool(np.linalg.norm(v) > 0.0))


def representative_map(xi: BundlePoint):
    """The multilinear map W with mixed partial d_{s^1}...d_{s^r} W|_0 = xi.

    W(s^1, ..., s^r) = sum_A xi_A prod_{j in A} s^{r-j+1}; bit j of a mask
    pairs with parameter s^{r-j+1}, so the innermost derivative is bit 1.
    """
    r, n = xi.r, xi.n

    def W(*s):
        if len(s) != r:
            raise ValueError(f"W takes {r} parameters")
        out = np.zeros(n)
        for mask in range(1 << r):
            coef = 1.0
            for j in range(1, r + 1):
                if mask & (1 << (j - 1)):
                    coef *= s[r - j]
            out = out + coef * xi.blocks[mask]
        return out

    return W


def representative_map_recursive(xi: BundlePoint):
    """Nested w^(k) construction from the representability lemma, kept as a
    test oracle: w^(1)(u, v, s) = u + s v and
    w^(k)(u, v, s^1..s^k) = w^(k-1)(u + s^1 v, s^2..s^k).
    """
    r, n = xi.r, xi.n

    def w(blocks: np.ndarray, s):
        if len(s) == 0:
            return blocks.reshape(n)
        h = blocks.shape[0] // 2
        # top bit (last derivative applied) pairs with the first parameter
        return w(blocks[:h] + s[0] * blocks[h:], s[1:])

    def W(*s):
        if len(s) != r:
            raise ValueError(f"W takes {r} parameters")
        return w(xi.blocks, list(s))

    return W


def assemble(pos: BundlePoint, vel: BundlePoint) -> BundlePoint:
    """Assemble a T^{r+1}M point from a T^rM position and its fiber velocity."""
    if (pos.n, pos.r) != (vel.n, vel.r):
        raise BadOrder("position and velocity must share n and r")
    return BundlePoint(pos.n, pos.r + 1, np.concatenate([pos.blocks, vel.blocks]))


def disassemble(xi: BundlePoint):
    """Split a T^{r+1}M point into (position, velocity) over T^rM."""
    if xi.r < 1:
        raise BadOrder("disassemble needs order >= 1")
    h = 1 << (xi.r - 1)
    return (BundlePoint(xi.n, xi.r - 1, xi.blocks[:h]),
            BundlePoint(xi.n, xi.r - 1, xi.blocks[h:]))


def random_point(n: int, r: int, rng: np.random.Generator,
                 slashed: bool = False) -> BundlePoint:
    b = rng.standard_normal((1 << r, n))
    if slashed and r >= 1:
        v = b[1 << (r - 1)]
        while np.linalg.norm(v) < 1e-3:
            v = rng.standard_normal(n)
        b[1 << (r - 1)] = v
    return BundlePoint(n, r, b)
