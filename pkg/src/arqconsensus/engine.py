"""Synchronous discrete-time consensus protocols over lossy directed links.

Five protocols run through one lockstep slot loop.  Every slot, every node
keeps its self-weighted share of state and hands one weighted share per
out-link to the transmission layer; the layers differ in what happens next:

* rc        - perfect links, shares arrive immediately.
* rrc       - shares arrive after a bounded per-packet delay, none are lost.
* rcrs      - shares are folded into ever-growing per-node running sums that
              are broadcast every slot; receivers difference the last heard
              value, so losses are recovered but the sums never reset.
* arq-mtmf  - every pending packet on a link is retransmitted individually
              each slot, with one acknowledgement per packet.
* arq-stsf  - all pending mass on a link is aggregated into a single packet
              with a single acknowledgement.

For both arq variants, a packet that fails while its age equals the link's
retransmission limit is dropped: its mass moves into the sender's per-link
running-sum buffer and is delivered together with the next successful packet
on that link (a success in the very slot of the drop already carries it,
matching the running-sum snapshot the receiver syncs to).  Mass is therefore
never lost: nodes + in-flight packets + buffers is invariant.

The ratio z = x/y is reported every slot that y is machine-positive; nodes
whose y underflows hold their previous ratio.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import LinkParams, link_stream
from .graph import Digraph, assign_weights, is_strongly_connected


class AlgorithmKind(Enum):
    RC = "rc"
    RRC = "rrc"
    RCRS = "rcrs"
    ARQ_MTMF = "arq-mtmf"
    ARQ_STSF = "arq-stsf"

    @classmethod
    def parse(cls, name: str) -> "AlgorithmKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown algorithm {name!r}; known: {[k.value for k in cls]}")


ARQ_KINDS = (AlgorithmKind.ARQ_MTMF, AlgorithmKind.ARQ_STSF)


# --------------------------------------------------------------------------
# error / delay sources


class BernoulliErrors:
    """Independent per-transmission error draws, one RNG stream per link."""

    def __init__(self, n_links: int, q_by_link, seed: int, replica: int = 0):
        self._q = list(q_by_link)
        if len(self._q) != n_links:
            raise ValueError("one error probability per link required")
        self._gens = [link_stream(seed, replica, e) for e in range(n_links)]

    def error(self, link: int) -> bool:
        return self._gens[link].random() < self._q[link]


class ScriptedErrors:
    """Replays per-link outcome scripts (True = error); error-free once a
    script is exhausted.  Outcomes are consumed one per transmission, in the
    engine's canonical order (links sorted, oldest packet first)."""

    def __init__(self, n_links: int, scripts: dict[int, list[bool]]):
        self._scripts = {e: list(s) for e, s in scripts.items()}
        self._pos = {e: 0 for e in scripts}
        self.n_links = n_links

    def error(self, link: int) -> bool:
        script = self._scripts.get(link)
        if script is None:
            return False
        i = self._pos[link]
        if i >= len(script):
            return False
        self._pos[link] = i + 1
        return script[i]


class UniformDelays:
    """I.i.d. per-packet delays, uniform on 0..tau_max of the link."""

    def __init__(self, tau_by_link, seed: int, replica: int = 0):
        self._tau = list(tau_by_link)
        self._gens = [link_stream(seed, replica, e) for e in range(len(self._tau))]

    def __call__(self, link: int, slot: int) -> int:
        return int(self._gens[link].integers(0, self._tau[link] + 1))


class ConstantDelays:
    def __init__(self, delay: int):
        self.delay = delay

    def __call__(self, link: int, slot: int) -> int:
        return self.delay


class ScriptedDelays:
    """Delays from a {(link, slot): delay} table, `default` elsewhere."""

    def __init__(self, table: dict[tuple[int, int], int], default: int = 0):
        self.table = dict(table)
        self.default = default

    def __call__(self, link: int, slot: int) -> int:
        return self.table.get((link, slot), self.default)


# --------------------------------------------------------------------------
# recorded channel realization (drives the matrix-form replay)

REALIZATION_FORMAT_VERSION = 1


class RealizationError(ValueError):
    """Raised when a recorded realization is internally inconsistent."""


@dataclass(frozen=True)
class Realization:
    """Complete per-link outcome record of one arq-variant run.

    ``fates`` resolves every origination: link index -> {origination slot:
    ("S"|"D", exit slot)} where the exit slot is the delivery slot for "S"
    and the drop slot for "D".  ``transmissions`` keeps the raw per-slot
    (age, outcome) records ("S", "E", "D"; one entry per transmission, so
    mtmf slots may hold several), and ``releases`` the slots on which a
    success flushed a non-empty buffer.  Fates alone determine the replay;
    the rest is kept for validation.
    """

    edges: tuple[tuple[int, int], ...]
    tau_max: tuple[int, ...]
    horizon: int
    fates: tuple[dict[int, tuple[str, int]], ...]
    transmissions: tuple[dict[int, tuple[tuple[int, str], ...]], ...]
    releases: tuple[frozenset[int], ...]

    @property
    def n_links(self) -> int:
        return len(self.edges)

    def to_json(self) -> str:
        payload = {
            "version": REALIZATION_FORMAT_VERSION,
            "edges": [list(e) for e in self.edges],
            "tau_max": list(self.tau_max),
            "horizon": self.horizon,
            "links": [
                {
                    "fates": {str(k): [kind, exit_] for k, (kind, exit_) in sorted(self.fates[e].items())},
                    "transmissions": {
                        str(t): [[age, out] for age, out in recs]
                        for t, recs in sorted(self.transmissions[e].items())
                    },
                    "releases": sorted(self.releases[e]),
                }
                for e in range(self.n_links)
            ],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "Realization":
        payload = json.loads(text)
        version = payload.get("version")
        if version != REALIZATION_FORMAT_VERSION:
            raise RealizationError(f"unsupported realization format version {version!r}")
        edges = tuple(tuple(e) for e in payload["edges"])
        links = payload["links"]
        if len(links) != len(edges):
            raise RealizationError("link record count does not match edge count")
        fates = tuple(
            {int(k): (kind, int(exit_)) for k, (kind, exit_) in rec["fates"].items()} for rec in links
        )
        transmissions = tuple(
            {int(t): tuple((int(age), out) for age, out in recs) for t, recs in rec["transmissions"].items()}
            for rec in links
        )
        releases = tuple(frozenset(int(t) for t in rec["releases"]) for rec in links)
        return cls(
            edges=edges,
            tau_max=tuple(int(t) for t in payload["tau_max"]),
            horizon=int(payload["horizon"]),
            fates=fates,
            transmissions=transmissions,
            releases=releases,
        )


# --------------------------------------------------------------------------
# traces


@dataclass
class Trace:
    """Per-slot snapshots of one run; row k is the state after k slots.

    running_sum / running_sum_y hold the per-node running-sum magnitudes:
    for the arq variants the currently outstanding (dropped, not yet
    released) mass on the node's out-links, for rcrs the never-resetting
    cumulative broadcast sums.
    """

    algorithm: AlgorithmKind
    seed: int | None
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    running_sum: np.ndarray
    running_sum_y: np.ndarray
    inflight_x: np.ndarray
    inflight_y: np.ndarray
    buffered_x: np.ndarray
    buffered_y: np.ndarray
    realization: Realization | None = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def iterations(self) -> int:
        return self.x.shape[0] - 1

    def total_x(self) -> np.ndarray:
        """Conserved x mass per slot: nodes + in-flight + buffered."""
        return self.x.sum(axis=1) + self.inflight_x + self.buffered_x

    def total_y(self) -> np.ndarray:
        return self.y.sum(axis=1) + self.inflight_y + self.buffered_y


def init_states(x0, n: int | None = None):
    """Initial (x, y, z): x from the inputs, y all ones, z their ratio."""
    x = np.array(x0, dtype=float)
    if x.ndim != 1:
        raise ValueError("initial values must be a 1-d vector")
    if n is not None and x.size != n:
        raise ValueError(f"expected {n} initial values, got {x.size}")
    y = np.ones_like(x)
    return x, y, x / y


def rc_step(x, y, p: np.ndarray):
    """One perfect-link step in matrix form: x <- P x, y <- P y, z = x/y."""
    x_new = p @ x
    y_new = p @ y
    return x_new, y_new, x_new / y_new


# --------------------------------------------------------------------------
# the slot machine


class ConsensusSimulation:
    """One replica of one protocol, advanced slot by slot.

    Internal state uses plain Python floats (hot loop); trace rows are
    handed out as numpy arrays.  All per-link containers are indexed by the
    graph's canonical (sorted) edge order.
    """

    def __init__(
        self,
        graph: Digraph,
        x0,
        algorithm: AlgorithmKind,
        *,
        q: float = 0.0,
        tau_max: int = 0,
        link_params: dict[tuple[int, int], LinkParams] | None = None,
        seed: int = 0,
        replica: int = 0,
        channel=None,
        delays=None,
        record_realization: bool = False,
    ):
        self.graph = graph
        self.algorithm = algorithm
        self.p = assign_weights(graph)
        self.edges = [(src - 1, dst - 1) for src, dst in graph.edges]
        self.weights = [float(self.p[dst, src]) for src, dst in self.edges]
        self.self_weight = [float(self.p[j, j]) for j in range(graph.n)]
        self.out_degrees = [graph.out_degree(j) for j in range(1, graph.n + 1)]
        self.n = graph.n
        self.m = len(self.edges)
        self.seed = seed

        params = {edge: LinkParams(q=q, tau_max=tau_max) for edge in graph.edges}
        if link_params:
            for edge, lp in link_params.items():
                if edge not in params:
                    raise ValueError(f"link parameters given for non-edge {edge}")
                params[edge] = lp
        self.link_params = [params[edge] for edge in graph.edges]
        self.tau = [lp.tau_max for lp in self.link_params]

        x, y, z = init_states(x0, graph.n)
        self.x = list(map(float, x))
        self.y = list(map(float, y))
        self.z = list(map(float, z))
        self.slot = 0

        if channel is None and algorithm in (*ARQ_KINDS, AlgorithmKind.RCRS):
            channel = BernoulliErrors(self.m, [lp.q for lp in self.link_params], seed, replica)
        self.channel = channel
        if algorithm is AlgorithmKind.RRC and delays is None:
            delays = UniformDelays(self.tau, seed, replica)
        self.delays = delays

        # per-link transmission-layer state
        self.pending = [[] for _ in range(self.m)]  # mtmf: [x, y, age, k0]; rrc: [x, y, arrival]
        self.aggregate = [None] * self.m  # stsf: [x, y, birth]
        self.buffer_x = [0.0] * self.m
        self.buffer_y = [0.0] * self.m
        self.buffer_occupied = [False] * self.m
        self.sigma = [0.0] * self.m  # cumulative dropped mass per out-link (x side)
        self.eta = [0.0] * self.m  # y side
        self.chi = [0.0] * self.m  # cumulative released running sums heard per in-link (x)
        self.psi = [0.0] * self.m  # y side
        self.backlog_x = [0.0] * self.m  # rcrs undelivered broadcast mass
        self.backlog_y = [0.0] * self.m
        self.sigma_node = [0.0] * self.n  # rcrs cumulative broadcast sums
        self.eta_node = [0.0] * self.n

        self.record_realization = record_realization
        if record_realization and algorithm not in ARQ_KINDS:
            raise ValueError("realizations are recorded for the arq variants only")
        self._fates = [dict() for _ in range(self.m)]
        self._transmissions = [dict() for _ in range(self.m)]
        self._releases = [set() for _ in range(self.m)]

    # -- slot bookkeeping ---------------------------------------------------

    def _record_tx(self, e: int, slot: int, age: int, outcome: str):
        if self.record_realization and slot is not None:
            self._transmissions[e].setdefault(slot, []).append((age, outcome))

    def step(self):
        """Advance one slot: originate, transmit, receive, update."""
        t = self.slot
        algo = self.algorithm
        x, y = self.x, self.y
        recv_x = [0.0] * self.n
        recv_y = [0.0] * self.n
        self_x = [self.self_weight[j] * x[j] for j in range(self.n)]
        self_y = [self.self_weight[j] * y[j] for j in range(self.n)]

        if algo is AlgorithmKind.RCRS:
            # broadcast running sums grow by the per-out-link share each slot
            for j in range(self.n):
                if self.out_degrees[j]:
                    self.sigma_node[j] += self.self_weight[j] * x[j]
                    self.eta_node[j] += self.self_weight[j] * y[j]

        for e, (u, v) in enumerate(self.edges):
            w = self.weights[e]
            fresh_x = w * x[u]
            fresh_y = w * y[u]
            if algo is AlgorithmKind.RC:
                recv_x[v] += fresh_x
                recv_y[v] += fresh_y
            elif algo is AlgorithmKind.RRC:
                r = self.delays(e, t)
                if not 0 <= r <= self.tau[e]:
                    raise ValueError(
                        f"delay schedule returned {r} for link {self.graph.edges[e]}, "
                        f"outside 0..{self.tau[e]}"
                    )
                self.pending[e].append([fresh_x, fresh_y, t + r])
                still = []
                for pkt in self.pending[e]:
                    if pkt[2] == t:
                        recv_x[v] += pkt[0]
                        recv_y[v] += pkt[1]
                    else:
                        still.append(pkt)
                self.pending[e] = still
            elif algo is AlgorithmKind.RCRS:
                self.backlog_x[e] += fresh_x
                self.backlog_y[e] += fresh_y
                if not self.channel.error(e):
                    recv_x[v] += self.backlog_x[e]
                    recv_y[v] += self.backlog_y[e]
                    self.chi[e] += self.backlog_x[e]
                    self.psi[e] += self.backlog_y[e]
                    self.backlog_x[e] = 0.0
                    self.backlog_y[e] = 0.0
            elif algo is AlgorithmKind.ARQ_MTMF:
                self.pending[e].append([fresh_x, fresh_y, 0, t])
                self._mtmf_transmit(e, v, t, recv_x, recv_y)
            else:  # ARQ_STSF
                agg = self.aggregate[e]
                if agg is None:
                    agg = [fresh_x, fresh_y, t]
                else:
                    agg[0] += fresh_x
                    agg[1] += fresh_y
                self.aggregate[e] = agg
                self._stsf_transmit(e, v, t, recv_x, recv_y)

        for j in range(self.n):
            x[j] = self_x[j] + recv_x[j]
            y[j] = self_y[j] + recv_y[j]
            if y[j] > 0.0:
                self.z[j] = x[j] / y[j]
        self.slot = t + 1

    def _mtmf_transmit(self, e, v, t, recv_x, recv_y, record_slot=True):
        slot = t if record_slot else None
        delivered = False
        still = []
        for pkt in self.pending[e]:
            age = pkt[2]
            if self.channel.error(e):
                if age < self.tau[e]:
                    pkt[2] = age + 1
                    still.append(pkt)
                    self._record_tx(e, slot, age, "E")
                else:
                    self.buffer_x[e] += pkt[0]
                    self.buffer_y[e] += pkt[1]
                    self.sigma[e] += pkt[0]
                    self.eta[e] += pkt[1]
                    self.buffer_occupied[e] = True
                    self._fates[e][pkt[3]] = ("D", t)
                    self._record_tx(e, slot, age, "D")
            else:
                if recv_x is not None:
                    recv_x[v] += pkt[0]
                    recv_y[v] += pkt[1]
                delivered = True
                self._fates[e][pkt[3]] = ("S", t)
                self._record_tx(e, slot, age, "S")
        self.pending[e] = still
        if delivered:
            self._release(e, v, t, recv_x, recv_y, record_slot)

    def _stsf_transmit(self, e, v, t, recv_x, recv_y, record_slot=True):
        slot = t if record_slot else None
        agg = self.aggregate[e]
        age = t - agg[2]
        if self.channel.error(e):
            if age < self.tau[e]:
                self._record_tx(e, slot, age, "E")
                return
            self.buffer_x[e] += agg[0]
            self.buffer_y[e] += agg[1]
            self.sigma[e] += agg[0]
            self.eta[e] += agg[1]
            self.buffer_occupied[e] = True
            for k0 in range(agg[2], t + 1):
                self._fates[e][k0] = ("D", t)
            self._record_tx(e, slot, age, "D")
            self.aggregate[e] = None
        else:
            if recv_x is not None:
                recv_x[v] += agg[0]
                recv_y[v] += agg[1]
            for k0 in range(agg[2], t + 1):
                self._fates[e][k0] = ("S", t)
            self._record_tx(e, slot, age, "S")
            self.aggregate[e] = None
            self._release(e, v, t, recv_x, recv_y, record_slot)

    def _release(self, e, v, t, recv_x, recv_y, record_slot=True):
        # A success this slot flushes the buffer, including any mass dropped
        # earlier in the same slot (the receiver syncs to the post-drop sums).
        if self.buffer_occupied[e]:
            if recv_x is not None:
                recv_x[v] += self.buffer_x[e]
                recv_y[v] += self.buffer_y[e]
            self.chi[e] += self.buffer_x[e]
            self.psi[e] += self.buffer_y[e]
            self.buffer_x[e] = 0.0
            self.buffer_y[e] = 0.0
            self.buffer_occupied[e] = False
            if self.record_realization and record_slot:
                self._releases[e].add(t)

    # -- monitors -------------------------------------------------------------

    def node_running_sums(self):
        """Per-node running-sum magnitudes (x side, y side)."""
        rs = [0.0] * self.n
        rs_y = [0.0] * self.n
        if self.algorithm is AlgorithmKind.RCRS:
            for j in range(self.n):
                rs[j] = abs(self.sigma_node[j])
                rs_y[j] = self.eta_node[j]
        elif self.algorithm in ARQ_KINDS:
            for e, (u, _) in enumerate(self.edges):
                rs[u] += abs(self.buffer_x[e])
                rs_y[u] += self.buffer_y[e]
        return rs, rs_y

    def inflight_totals(self):
        fx = fy = 0.0
        if self.algorithm in (AlgorithmKind.ARQ_MTMF, AlgorithmKind.RRC):
            for plist in self.pending:
                for pkt in plist:
                    fx += pkt[0]
                    fy += pkt[1]
        elif self.algorithm is AlgorithmKind.ARQ_STSF:
            for agg in self.aggregate:
                if agg is not None:
                    fx += agg[0]
                    fy += agg[1]
        return fx, fy

    def buffered_totals(self):
        if self.algorithm is AlgorithmKind.RCRS:
            return sum(self.backlog_x), sum(self.backlog_y)
        return sum(self.buffer_x), sum(self.buffer_y)

    # -- realization ----------------------------------------------------------

    def _resolve_pending_fates(self, horizon: int):
        """Drive remaining channel draws past the horizon so every recorded
        origination has a fate; node states are no longer touched."""
        t = horizon
        limit = horizon + max(self.tau, default=0) + 1
        while t <= limit:
            busy = False
            for e, (_, v) in enumerate(self.edges):
                if self.algorithm is AlgorithmKind.ARQ_MTMF and self.pending[e]:
                    busy = True
                    self._mtmf_transmit(e, v, t, None, None, record_slot=False)
                elif self.algorithm is AlgorithmKind.ARQ_STSF and self.aggregate[e] is not None:
                    busy = True
                    self._stsf_transmit(e, v, t, None, None, record_slot=False)
            if not busy:
                break
            t += 1

    def realization(self, horizon: int) -> Realization:
        return Realization(
            edges=self.graph.edges,
            tau_max=tuple(self.tau),
            horizon=horizon,
            fates=tuple(dict(f) for f in self._fates),
            transmissions=tuple({t: tuple(r) for t, r in tx.items()} for tx in self._transmissions),
            releases=tuple(frozenset(r) for r in self._releases),
        )


def run(
    graph: Digraph,
    x0,
    algorithm: AlgorithmKind,
    *,
    iterations: int,
    seed: int = 0,
    replica: int = 0,
    q: float = 0.0,
    tau_max: int = 0,
    link_params: dict[tuple[int, int], LinkParams] | None = None,
    channel=None,
    delays=None,
    record_realization: bool = False,
    connectivity_check: bool = True,
) -> Trace:
    """Run one replica for `iterations` slots and return its Trace.

    Deterministic for fixed arguments.  Non-strongly-connected graphs are a
    hard error for the arq variants (their convergence guarantee needs the
    property) and a warning for the baselines.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if connectivity_check and not is_strongly_connected(graph):
        if algorithm in ARQ_KINDS:
            raise ValueError("graph is not strongly connected")
        warnings.warn("graph is not strongly connected; consensus may not be reached", stacklevel=2)

    sim = ConsensusSimulation(
        graph,
        x0,
        algorithm,
        q=q,
        tau_max=tau_max,
        link_params=link_params,
        seed=seed,
        replica=replica,
        channel=channel,
        delays=delays,
        record_realization=record_realization,
    )
    n = graph.n
    shape = (iterations + 1, n)
    tr = Trace(
        algorithm=algorithm,
        seed=seed,
        x=np.empty(shape),
        y=np.empty(shape),
        z=np.empty(shape),
        running_sum=np.zeros(shape),
        running_sum_y=np.zeros(shape),
        inflight_x=np.zeros(iterations + 1),
        inflight_y=np.zeros(iterations + 1),
        buffered_x=np.zeros(iterations + 1),
        buffered_y=np.zeros(iterations + 1),
    )

    def snapshot(k):
        tr.x[k] = sim.x
        tr.y[k] = sim.y
        tr.z[k] = sim.z
        rs, rs_y = sim.node_running_sums()
        tr.running_sum[k] = rs
        tr.running_sum_y[k] = rs_y
        tr.inflight_x[k], tr.inflight_y[k] = sim.inflight_totals()
        tr.buffered_x[k], tr.buffered_y[k] = sim.buffered_totals()

    snapshot(0)
    for k in range(iterations):
        sim.step()
        snapshot(k + 1)

    if record_realization:
        sim._resolve_pending_fates(iterations)
        tr.realization = sim.realization(iterations)
    return tr


def reliable_ratio_floor(graph: Digraph, tau_max: int, lam: int | None = None) -> float:
    """Diagnostic y-floor c**lam: c is the smallest positive weight in the
    network, lam defaults to n * (tau_max + 2).  Ratios computed while y is
    above this floor are backed by the convergence argument; reporting does
    not otherwise depend on it."""
    c = min(1.0 / (1 + graph.out_degree(j)) for j in range(1, graph.n + 1))
    if lam is None:
        lam = graph.n * (tau_max + 2)
    return c**lam


def reliable_ratio_mask(y: np.ndarray, graph: Digraph, tau_max: int, lam: int | None = None) -> np.ndarray:
    """Boolean mask over a y trace marking slots with y above the floor."""
    return np.asarray(y) >= reliable_ratio_floor(graph, tau_max, lam)
