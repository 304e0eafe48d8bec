"""Layered-state matrix model that replays a recorded loss realization.

The state vector stacks the n actual nodes, then tau_max delay stages per
directed link, then one buffer slot per link.  Each simulation slot becomes
one column-stochastic matrix: fresh mass enters the delay stage matching its
packet's realized time to arrival (stage 0 means direct), stages shift down
by one each slot, and stage 1 empties either into the destination node (a
delivery, or a drop that rides a same-slot success) or into the link's
buffer (a drop with no success that slot).  A buffer empties into the
destination on the link's next successful slot.

Built after the fact from a Realization, the model is an independent check
on the event engine: the actual-node coordinates of the evolved state must
match the engine's trajectories slot for slot, and every matrix must have
unit column sums regardless of the realized delays and drops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Realization, RealizationError
from .graph import Digraph, assign_weights


@dataclass(frozen=True)
class AugmentedIndex:
    """Layout of the stacked state: actual nodes, delay stages (link-major,
    stage 1..tau_max within each link), then link buffers."""

    n: int
    tau_max: int
    edges: tuple[tuple[int, int], ...]

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def size(self) -> int:
        return self.n + self.m * (self.tau_max + 1)

    def delay_slot(self, link: int, stage: int) -> int:
        if not 1 <= stage <= self.tau_max:
            raise IndexError(f"stage {stage} outside 1..{self.tau_max}")
        return self.n + link * self.tau_max + (stage - 1)

    def buffer_slot(self, link: int) -> int:
        return self.n + self.m * self.tau_max + link

    def describe(self, pos: int) -> tuple:
        """Inverse mapping, mostly for debugging and structural tests."""
        if pos < self.n:
            return ("node", pos + 1)
        pos -= self.n
        if pos < self.m * self.tau_max:
            return ("delay", self.edges[pos // self.tau_max], pos % self.tau_max + 1)
        return ("buffer", self.edges[pos - self.m * self.tau_max])


def build_index(g: Digraph, tau_max: int) -> AugmentedIndex:
    if tau_max < 0:
        raise ValueError("tau_max must be >= 0")
    return AugmentedIndex(n=g.n, tau_max=tau_max, edges=g.edges)


# --------------------------------------------------------------------------
# per-link event tables derived from a realization


@dataclass
class _LinkEvents:
    entries: dict[int, tuple[int, str]]  # origination slot -> (entry stage, "S"|"D")
    action: dict[int, str]  # stage-1 exit per slot: "A" to actual, "B" to buffer
    succ: frozenset[int]  # slots with at least one successful delivery


def link_events(realization: Realization, index: AugmentedIndex) -> list[_LinkEvents]:
    """Derive and validate per-slot routing from recorded packet fates."""
    if index.edges != realization.edges:
        raise RealizationError("realization does not belong to this graph")
    horizon = realization.horizon
    out = []
    for e in range(realization.n_links):
        tau_e = realization.tau_max[e]
        if tau_e > index.tau_max:
            raise RealizationError(
                f"link {realization.edges[e]} has limit {tau_e} above the layout's {index.tau_max}"
            )
        fates = realization.fates[e]
        entries: dict[int, tuple[int, str]] = {}
        succ = set()
        del_exits = set()
        drop_exits = set()
        for k0 in range(horizon):
            if k0 not in fates:
                raise RealizationError(f"link {realization.edges[e]}: no fate for origination {k0}")
            kind, exit_slot = fates[k0]
            stage = exit_slot - k0
            if stage < 0:
                raise RealizationError(f"link {realization.edges[e]}: exit {exit_slot} precedes origination {k0}")
            if kind == "S":
                if stage > tau_e:
                    raise RealizationError(
                        f"link {realization.edges[e]}: delay {stage} exceeds the limit {tau_e}"
                    )
                succ.add(exit_slot)
                entries[k0] = (stage, "S")
                if stage >= 1:
                    del_exits.add(exit_slot)
            elif kind == "D":
                if stage > tau_e:
                    raise RealizationError(
                        f"link {realization.edges[e]}: drop {stage} slots after origination exceeds {tau_e}"
                    )
                if index.tau_max == 0:
                    entries[k0] = (0, "D")
                    drop_exits.add(k0)  # direct entry; buffer holds it from k0 + 1
                else:
                    # mass dropped at its origination slot (an aggregate that
                    # died the slot it formed) cannot have traversed a stage
                    # yet; it takes stage 1 and reaches the buffer a slot late,
                    # which no actual node can observe.
                    eff = max(stage, 1)
                    entries[k0] = (eff, "D")
                    drop_exits.add(k0 + eff)
            else:
                raise RealizationError(f"link {realization.edges[e]}: unknown fate kind {kind!r}")
        action = {}
        for t in del_exits:
            action[t] = "A"
        for t in drop_exits:
            if t not in action:
                action[t] = "A" if t in succ else "B"
        _validate_releases(realization, e, succ, action, drop_exits, horizon)
        out.append(_LinkEvents(entries=entries, action=action, succ=frozenset(succ)))
    return out


def _validate_releases(realization, e, succ, action, drop_exits, horizon):
    """Recorded buffer flushes must match what the fates imply."""
    recorded = realization.releases[e]
    occupied = False
    for t in range(horizon):
        flush = occupied and t in succ
        if flush:
            occupied = False
        if t in recorded:
            if t not in succ:
                raise RealizationError(
                    f"link {realization.edges[e]}: release recorded at slot {t} without a success"
                )
            if not flush and not (t in drop_exits and action.get(t) == "A"):
                raise RealizationError(
                    f"link {realization.edges[e]}: release recorded at slot {t} with an empty buffer"
                )
        elif flush:
            raise RealizationError(
                f"link {realization.edges[e]}: buffered mass flushed at slot {t} but no release recorded"
            )
        if action.get(t) == "B":
            occupied = True  # the dropped mass reaches the buffer at t + 1


# --------------------------------------------------------------------------
# matrices and evolution


def build_xi(index: AugmentedIndex, p: np.ndarray, events: list[_LinkEvents], k: int) -> np.ndarray:
    """Assemble the slot-k transition matrix from the derived events."""
    size = index.size
    xi = np.zeros((size, size))
    for j in range(index.n):
        xi[j, j] = p[j, j]
    for e, (src, dst) in enumerate(index.edges):
        u, v = src - 1, dst - 1
        w = p[v, u]
        ev = events[e]
        if k not in ev.entries:
            raise RealizationError(f"slot {k} outside the recorded horizon")
        stage, kind = ev.entries[k]
        if stage == 0:
            if kind == "S":
                xi[v, u] += w
            else:
                xi[index.buffer_slot(e), u] += w
        else:
            xi[index.delay_slot(e, stage), u] += w
        for s in range(2, index.tau_max + 1):
            xi[index.delay_slot(e, s - 1), index.delay_slot(e, s)] = 1.0
        if index.tau_max >= 1:
            d1 = index.delay_slot(e, 1)
            act = ev.action.get(k, "S")
            if act == "A":
                xi[v, d1] = 1.0
            elif act == "B":
                xi[index.buffer_slot(e), d1] = 1.0
            else:
                xi[d1, d1] = 1.0
        b = index.buffer_slot(e)
        if k in ev.succ:
            # successes always flush the buffer; on an empty buffer this
            # moves nothing but keeps long products mixing.
            xi[v, b] = 1.0
        else:
            xi[b, b] = 1.0
    return xi


@dataclass
class AugmentedState:
    """Stacked x and y vectors over actual + delay + buffer coordinates."""

    x: np.ndarray
    y: np.ndarray

    def totals(self) -> tuple[float, float]:
        return float(self.x.sum()), float(self.y.sum())


def initial_state(index: AugmentedIndex, x0) -> AugmentedState:
    x0 = np.asarray(x0, dtype=float)
    if x0.size != index.n:
        raise ValueError(f"expected {index.n} initial values, got {x0.size}")
    x = np.zeros(index.size)
    y = np.zeros(index.size)
    x[: index.n] = x0
    y[: index.n] = 1.0
    return AugmentedState(x=x, y=y)


def step(state: AugmentedState, xi: np.ndarray) -> AugmentedState:
    """One matrix-form slot: both stacked vectors advance by the same matrix."""
    if xi.shape != (state.x.size, state.x.size):
        raise ValueError(f"matrix shape {xi.shape} does not match state size {state.x.size}")
    return AugmentedState(x=xi @ state.x, y=xi @ state.y)


@dataclass
class ReplayResult:
    index: AugmentedIndex
    x: np.ndarray  # (horizon + 1, size)
    y: np.ndarray
    matrices: list[np.ndarray] | None

    def actual_x(self) -> np.ndarray:
        return self.x[:, : self.index.n]

    def actual_y(self) -> np.ndarray:
        return self.y[:, : self.index.n]


def replay(g: Digraph, x0, realization: Realization, *, keep_matrices: bool = False) -> ReplayResult:
    """Evolve the matrix model through a recorded run."""
    index = build_index(g, max(realization.tau_max, default=0))
    events = link_events(realization, index)
    p = assign_weights(g)
    horizon = realization.horizon
    xs = np.zeros((horizon + 1, index.size))
    ys = np.zeros((horizon + 1, index.size))
    state = initial_state(index, x0)
    xs[0], ys[0] = state.x, state.y
    matrices = [] if keep_matrices else None
    for k in range(horizon):
        xi = build_xi(index, p, events, k)
        state = step(state, xi)
        xs[k + 1], ys[k + 1] = state.x, state.y
        if keep_matrices:
            matrices.append(xi)
    return ReplayResult(index=index, x=xs, y=ys, matrices=matrices)


def forward_product(xis, size: int | None = None) -> np.ndarray:
    """Left-accumulated product of slot matrices: the k-matrix product maps
    the initial state to the slot-k state.  Empty input is the identity (its
    dimension must then be supplied)."""
    xis = list(xis)
    if not xis:
        if size is None:
            raise ValueError("empty product needs an explicit size")
        return np.eye(size)
    acc = xis[0].copy()
    for xi in xis[1:]:
        acc = xi @ acc
    return acc


def ergodicity_coefficient(mat: np.ndarray) -> float:
    """Largest row-wise spread between two columns; zero iff all columns
    agree, one for the identity.  Long forward products of the slot matrices
    drive it to zero, which is what forces the ratios to consensus."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("square matrix required")
    return float((mat.max(axis=1) - mat.min(axis=1)).max())
