"""Simulated two-party protocols for computing DismP between neighbors.

Neither party sees the other's mass function or pignistic vector.  The
dot product runs over the ring Z/2^256 on fixed-point encodings with
dealer-supplied correlated randomness; index equality runs a commutative
blinding exchange in a prime-order subgroup.  The constructions reproduce
the information flow of the real protocols and are exact, but make no
claim of cryptographic strength.

Every run records each message in a :class:`Transcript`.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import random
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from .edm import combine_dist_conf
from .errors import LengthMismatch, NotNeighbors
from .evidence import MassFunction, argmax_betp, betp

try:
    from gmpy2 import mpz, powmod as _gmp_powmod

    def _powmod(base: int, exp: int, mod: int) -> int:
        return int(_gmp_powmod(mpz(base), mpz(exp), mpz(mod)))
except ImportError:  # pragma: no cover
    _powmod = pow

RING_BITS = 256
RING = 1 << RING_BITS
FRAC_BITS = 64
SCALE = 1 << FRAC_BITS
PRODUCT_SCALE = 1 << (2 * FRAC_BITS)

# 2048-bit MODP group (RFC 3526, group 14); p = 2q + 1 with q prime.
MODP_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
MODP_Q = (MODP_P - 1) // 2
_ELEMENT_BYTES = (MODP_P.bit_length() + 7) // 8
EXPONENT_BITS = 256

# Message kinds whose payload the dot-product exchange discloses on purpose.
DISCLOSED_KINDS = frozenset({"self_inner", "max_betp"})


@dataclass(frozen=True)
class Message:
    step: int
    sender: Any
    receiver: Any
    kind: str
    value: Any  # int ring element, float, or hex string


@dataclass
class Transcript:
    messages: List[Message] = field(default_factory=list)

    def send(self, sender, receiver, kind: str, value) -> None:
        self.messages.append(Message(len(self.messages), sender, receiver, kind, value))

    def received_by(self, party_id) -> List[Message]:
        return [msg for msg in self.messages if msg.receiver == party_id]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "sender", "receiver", "kind", "value"])
        for msg in self.messages:
            writer.writerow([msg.step, msg.sender, msg.receiver, msg.kind, _serialize_value(msg.value)])
        return buf.getvalue()

    def __len__(self):
        return len(self.messages)


def _serialize_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(str(v) for v in value)
    return str(value)


class PartyHandle:
    """One protocol participant: an id, a secret payload, a seeded RNG.

    The payload is a numeric vector, a 1-based index, or a mass function,
    depending on the protocol.  Protocol results never return it.
    """

    def __init__(self, agent_id, private_payload, seed: int):
        self.agent_id = agent_id
        self._secret = private_payload
        self.rng = random.Random(seed)

    def __repr__(self):
        return f"PartyHandle({self.agent_id!r})"


# -- fixed-point ring helpers --------------------------------------------------

def encode_fixed(x: Sequence[float]) -> List[int]:
    return [int(round(float(v) * SCALE)) % RING for v in x]


def to_signed(v: int) -> int:
    v %= RING
    return v - RING if v >= RING // 2 else v


def _dot_ring(a: Sequence[int], b: Sequence[int]) -> int:
    return sum(x * y for x, y in zip(a, b)) % RING


def _run_dot_product(a: PartyHandle, xa: List[int], b: PartyHandle, yb: List[int],
                     dealer: random.Random, transcript: Transcript) -> Tuple[int, int]:
    """Two-party masked dot product; returns (result seen by a, result seen by b)."""
    n = len(xa)
    # Dealer: Ra . Rb = ra + rb, handed to a and b respectively.
    ra_vec = [dealer.getrandbits(RING_BITS) for _ in range(n)]
    rb_vec = [dealer.getrandbits(RING_BITS) for _ in range(n)]
    ra = dealer.getrandbits(RING_BITS)
    rb = (_dot_ring(ra_vec, rb_vec) - ra) % RING

    x_hat = [(x + r) % RING for x, r in zip(xa, ra_vec)]
    transcript.send(a.agent_id, b.agent_id, "masked_vector", tuple(x_hat))
    y_hat = [(y + r) % RING for y, r in zip(yb, rb_vec)]
    transcript.send(b.agent_id, a.agent_id, "masked_vector", tuple(y_hat))

    share_b = b.rng.getrandbits(RING_BITS)
    t = (_dot_ring(x_hat, yb) + rb - share_b) % RING
    transcript.send(b.agent_id, a.agent_id, "masked_scalar", t)
    share_a = (t + ra - _dot_ring(ra_vec, y_hat)) % RING

    transcript.send(a.agent_id, b.agent_id, "output_share", share_a)
    transcript.send(b.agent_id, a.agent_id, "output_share", share_b)
    return (share_a + share_b) % RING, (share_b + share_a) % RING


def shared_dot_product(a: PartyHandle, b: PartyHandle, *,
                       dealer: Optional[random.Random] = None) -> Tuple[float, Transcript]:
    """Inner product of the two parties' private vectors."""
    x = np.asarray(a._secret, dtype=float).ravel()
    y = np.asarray(b._secret, dtype=float).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"vector lengths {x.size} and {y.size} differ")
    transcript = Transcript()
    dealer = dealer if dealer is not None else random.Random(0)
    value_a, value_b = _run_dot_product(a, encode_fixed(x), b, encode_fixed(y), dealer, transcript)
    assert value_a == value_b
    return to_signed(value_a) / PRODUCT_SCALE, transcript


# -- private equality ----------------------------------------------------------

def _hash_to_group(salt: bytes, index: int) -> int:
    digest = hashlib.shake_256(salt + index.to_bytes(8, "big")).digest(_ELEMENT_BYTES + 16)
    h = int.from_bytes(digest, "big") % MODP_P
    # Squaring lands in the order-q subgroup of quadratic residues.
    return _powmod(h, 2, MODP_P)


def _element_hex(x: int) -> str:
    return x.to_bytes(_ELEMENT_BYTES, "big").hex()


def _commit_hex(x: int) -> str:
    return hashlib.sha256(x.to_bytes(_ELEMENT_BYTES, "big")).hexdigest()


def _run_equality(a: PartyHandle, ka: int, b: PartyHandle, kb: int,
                  transcript: Transcript) -> Tuple[bool, bool, dict]:
    nonce_a = a.rng.getrandbits(128)
    transcript.send(a.agent_id, b.agent_id, "nonce", nonce_a)
    nonce_b = b.rng.getrandbits(128)
    transcript.send(b.agent_id, a.agent_id, "nonce", nonce_b)
    salt = hashlib.sha256(nonce_a.to_bytes(16, "big") + nonce_b.to_bytes(16, "big")).digest()

    # Short exponents keep the simulation fast.
    ea = 1 + a.rng.getrandbits(EXPONENT_BITS)
    eb = 1 + b.rng.getrandbits(EXPONENT_BITS)
    blind_a = _powmod(_hash_to_group(salt, ka), ea, MODP_P)
    transcript.send(a.agent_id, b.agent_id, "blinded", _element_hex(blind_a))
    blind_b = _powmod(_hash_to_group(salt, kb), eb, MODP_P)
    transcript.send(b.agent_id, a.agent_id, "blinded", _element_hex(blind_b))

    commit_a = _commit_hex(_powmod(blind_b, ea, MODP_P))
    transcript.send(a.agent_id, b.agent_id, "commitment", commit_a)
    commit_b = _commit_hex(_powmod(blind_a, eb, MODP_P))
    transcript.send(b.agent_id, a.agent_id, "commitment", commit_b)

    # Each side compares its own double-blinded value with the one received.
    equal_at_a = commit_a == commit_b
    equal_at_b = commit_b == commit_a
    secrets = {"salt": salt, a.agent_id: ea, b.agent_id: eb}
    return equal_at_a, equal_at_b, secrets


def private_equality(a: PartyHandle, b: PartyHandle) -> Tuple[bool, Transcript]:
    """Decide whether the parties' private 1-based indices coincide."""
    transcript = Transcript()
    eq_a, eq_b, _ = _run_equality(a, int(a._secret), b, int(b._secret), transcript)
    assert eq_a == eq_b
    return eq_a, transcript


def decode_attempts(transcript: Transcript, party: PartyHandle, exponent: int, salt: bytes,
                    n: int) -> List[int]:
    """Candidate indices in ``[1, n]`` that ``party`` can match against its view.

    Tries every test open to the party with its own secret exponent: the raw
    hash, the hash blinded by its own exponent, and the digests of both.
    """
    received = {msg.value for msg in transcript.received_by(party.agent_id) if isinstance(msg.value, str)}
    hits = []
    for c in range(1, n + 1):
        h = _hash_to_group(salt, c)
        hb = _powmod(h, exponent, MODP_P)
        probes = {_element_hex(h), _element_hex(hb), _commit_hex(h), _commit_hex(hb)}
        if probes & received:
            hits.append(c)
    return hits


# -- two-party EDM entry --------------------------------------------------------

@dataclass
class NeighborEdmRun:
    d_a: float
    d_b: float
    transcript: Transcript
    indices_equal: Optional[bool]
    equality_secrets: dict = field(default_factory=dict, repr=False)


def neighbor_edm_run(a: PartyHandle, b: PartyHandle, edge_exists: bool, *,
                     dealer: Optional[random.Random] = None) -> NeighborEdmRun:
    """Full two-party exchange, keeping each side's result and the transcript."""
    transcript = Transcript()
    if a.agent_id == b.agent_id:
        return NeighborEdmRun(0.0, 0.0, transcript, None)
    if not edge_exists:
        raise NotNeighbors(f"agents {a.agent_id} and {b.agent_id} are not neighbors")
    ma: MassFunction = a._secret
    mb: MassFunction = b._secret
    if ma.frame != mb.frame:
        raise ValueError("parties hold evidence on different frames")
    dealer = dealer if dealer is not None else random.Random(0)

    # Local pignistic transforms and fixed-point encodings.
    pa, pb = betp(ma), betp(mb)
    xa, xb = encode_fixed(pa), encode_fixed(pb)
    self_a = _dot_ring(xa, xa)
    transcript.send(a.agent_id, b.agent_id, "self_inner", self_a)
    self_b = _dot_ring(xb, xb)
    transcript.send(b.agent_id, a.agent_id, "self_inner", self_b)

    cross_a, cross_b = _run_dot_product(a, xa, b, xb, dealer, transcript)

    def _dist(self_own: int, self_other: int, cross: int) -> float:
        sq = to_signed(self_own + self_other - 2 * cross)
        return math.sqrt(max(sq, 0) / (2 * PRODUCT_SCALE))

    dist_a = _dist(self_a, self_b, cross_a)
    dist_b = _dist(self_b, self_a, cross_b)

    ka, kb = argmax_betp(pa), argmax_betp(pb)
    eq_a, eq_b, secrets = _run_equality(a, ka, b, kb, transcript)
    if not eq_a:
        top_a = float(np.max(pa))
        transcript.send(a.agent_id, b.agent_id, "max_betp", top_a)
        top_b = float(np.max(pb))
        transcript.send(b.agent_id, a.agent_id, "max_betp", top_b)
        conf_a = top_a * top_b
        conf_b = top_b * top_a
    else:
        conf_a = conf_b = 0.0
    return NeighborEdmRun(
        combine_dist_conf(dist_a, conf_a),
        combine_dist_conf(dist_b, conf_b),
        transcript,
        eq_a,
        secrets,
    )


def neighbor_edm(a: PartyHandle, b: PartyHandle, edge_exists: bool, *,
                 dealer: Optional[random.Random] = None) -> float:
    run = neighbor_edm_run(a, b, edge_exists, dealer=dealer)
    if run.d_a != run.d_b:
        raise AssertionError("parties disagree on the neighbor EDM")
    return run.d_a


def numeric_payloads(transcript: Transcript, *, include_disclosed: bool = False) -> List[float]:
    """Real-valued readings of every numeric payload.

    Ring elements are read both as fixed-point vectors and as products, in
    signed and unsigned form, so a leak at either scale is caught.
    """
    out: List[float] = []
    for msg in transcript.messages:
        if not include_disclosed and msg.kind in DISCLOSED_KINDS:
            continue
        values = msg.value if isinstance(msg.value, tuple) else (msg.value,)
        for v in values:
            if isinstance(v, str):
                continue
            if isinstance(v, float):
                out.append(v)
                continue
            for raw in (v, to_signed(v)):
                out.extend((float(raw), raw / SCALE, raw / PRODUCT_SCALE))
    return out
