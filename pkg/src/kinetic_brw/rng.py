"""Counter-based random streams keyed by (seed, replica, node).

Every random quantity attached to a tree node is a pure function of the
master seed, the replica index and the node's heap number (root = 1,
children of ``h`` are ``2h`` and ``2h + 1``).  Simulations therefore do not
depend on traversal order, block size or worker count.

The generator is Philox4x32-10 (Salmon et al., SC'11), vectorised over
numpy ``uint64`` arrays holding 32-bit words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_SHIFT32 = np.uint64(32)
_TWO_M53 = 2.0**-53

# tags separating the purposes a node's randomness is used for
TAG_LIFETIME = 0
TAG_KERNEL = 1
TAG_EXTRA = 2


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function.

    ``counter`` is a sequence of four arrays (or ints) of 32-bit words and
    ``key`` a pair of 32-bit ints.  Returns four ``uint64`` arrays holding
    the 32-bit output words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for i in range(rounds):
        if i:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
    return c0, c1, c2, c3


def _to_unit(hi, lo):
    # 53 bits, shifted half an ulp off zero: values lie in the open interval (0, 1)
    bits = ((hi << _SHIFT32) | lo) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * _TWO_M53


def derive_seed(seed: int, *labels: int) -> int:
    """A 64-bit key for an independent sub-stream of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in labels))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


@dataclass(frozen=True)
class NodeStream:
    """Uniforms indexed by (replica, node, tag, index)."""

    seed: int

    @property
    def key(self) -> tuple[int, int]:
        s = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        return s & 0xFFFFFFFF, s >> 32

    def uniforms(self, replica, node, count: int, tag: int = TAG_KERNEL) -> np.ndarray:
        """Array of shape ``broadcast(replica, node).shape + (count,)``."""
        replica = np.asarray(replica, dtype=np.uint64)
        node = np.asarray(node, dtype=np.uint64)
        replica, node = np.broadcast_arrays(replica, node)
        out = np.empty(replica.shape + (count,), dtype=np.float64)
        node_lo = node & _MASK32
        node_hi = node >> _SHIFT32
        for block in range((count + 1) // 2):
            slot = np.uint64((tag << 16) | block)
            w0, w1, w2, w3 = philox4x32((slot, node_lo, node_hi, replica), self.key)
            out[..., 2 * block] = _to_unit(w0, w1)
            if 2 * block + 1 < count:
                out[..., 2 * block + 1] = _to_unit(w2, w3)
        return out

    def child(self, *labels: int) -> "NodeStream":
        return NodeStream(derive_seed(self.seed, *labels))

    def generator(self, *labels: int) -> np.random.Generator:
        """A sequential numpy generator for randomness not tied to tree nodes."""
        return np.random.Generator(np.random.Philox(key=derive_seed(self.seed, *labels)))


def as_stream(stream) -> NodeStream:
    if isinstance(stream, NodeStream):
        return stream
    return NodeStream(int(stream))
