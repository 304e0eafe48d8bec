"""Per-link loss process: Bernoulli packet errors under a retransmission limit.

Each transmission on a link errs independently with probability q.  A packet
is retried until it decodes or until it has failed tau_max + 1 times, at
which point it is dropped.  Acknowledgement feedback is error-free and
intra-slot, so senders always know each transmission's outcome; a single
dummy broadcast therefore suffices to count out-neighbours exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Digraph


@dataclass(frozen=True)
class LinkParams:
    """Error probability and retransmission limit of one directed link."""

    q: float
    tau_max: int

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"error probability must be in [0, 1], got {self.q}")
        if self.tau_max < 0:
            raise ValueError(f"retransmission limit must be >= 0, got {self.tau_max}")


@dataclass(frozen=True)
class PacketFate:
    """Outcome of one packet: delivered after `delay` slots, or dropped."""

    delay: int | None  # None when dropped

    @property
    def dropped(self) -> bool:
        return self.delay is None


def fate_distribution(params: LinkParams) -> np.ndarray:
    """Probability vector over fates: entry r (r <= tau_max) is the chance of
    delivery after exactly r retransmissions, the final entry the chance of a
    drop."""
    q, tau = params.q, params.tau_max
    probs = np.empty(tau + 2)
    probs[: tau + 1] = (1.0 - q) * q ** np.arange(tau + 1)
    probs[tau + 1] = q ** (tau + 1)
    return probs


def sample_fate(params: LinkParams, rng: np.random.Generator) -> PacketFate:
    """Draw one packet fate by sequential per-slot trials.

    Deliberately trial-by-trial rather than a single categorical draw: the
    r-th uniform is the r-th NACK/ACK, so scripted or shared streams see the
    retransmission timing, not just the marginal distribution.
    """
    for r in range(params.tau_max + 1):
        if rng.random() >= params.q:
            return PacketFate(delay=r)
    return PacketFate(delay=None)


def link_stream(seed: int, replica: int, link: int) -> np.random.Generator:
    """Deterministic RNG stream for one directed link of one replica.

    Streams are keyed by (seed, replica, link index) so adding links or
    reordering node iteration never perturbs another link's draws.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, replica, link]))


def acquire_out_degree(g: Digraph, j: int) -> int:
    """Out-degree as a node would learn it from one round of feedback on a
    dummy broadcast (feedback is error-free, so one round is exact)."""
    if not 1 <= j <= g.n:
        raise ValueError(f"node id {j} out of range 1..{g.n}")
    return g.out_degree(j)


def parse_link_params(text: str, g: Digraph, default: LinkParams) -> dict[tuple[int, int], LinkParams]:
    """Parse a per-link override file: lines ``src dst q tau_max``.

    Links absent from the file keep `default`.  Returns a complete mapping
    over the graph's edges.
    """
    overrides: dict[tuple[int, int], LinkParams] = {}
    edge_set = set(g.edges)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise ValueError(f"line {lineno}: expected 'src dst q tau_max', got {raw!r}")
        try:
            src, dst = int(tokens[0]), int(tokens[1])
            q, tau = float(tokens[2]), int(tokens[3])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed numbers in {raw!r}") from None
        if (src, dst) not in edge_set:
            raise ValueError(f"line {lineno}: ({src}, {dst}) is not an edge of the graph")
        if (src, dst) in overrides:
            raise ValueError(f"line {lineno}: duplicate override for ({src}, {dst})")
        overrides[(src, dst)] = LinkParams(q=q, tau_max=tau)
    table = {edge: default for edge in g.edges}
    table.update(overrides)
    return table
