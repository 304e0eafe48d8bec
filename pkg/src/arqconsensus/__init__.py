"""Average consensus over unreliable directed networks.

Ratio-style two-ledger averaging (states x and y, reported ratio z = x/y)
simulated in discrete slots over directed links that delay and drop packets
under a bounded-retransmission acknowledgement protocol, plus a
column-stochastic matrix model that replays any recorded run exactly.
"""

from .augmented import (
    AugmentedIndex,
    AugmentedState,
    ReplayResult,
    build_index,
    build_xi,
    ergodicity_coefficient,
    forward_product,
    initial_state,
    link_events,
    replay,
    step,
)
from .channel import (
    LinkParams,
    PacketFate,
    acquire_out_degree,
    fate_distribution,
    link_stream,
    parse_link_params,
    sample_fate,
)
from .engine import (
    ARQ_KINDS,
    AlgorithmKind,
    BernoulliErrors,
    ConsensusSimulation,
    ConstantDelays,
    Realization,
    RealizationError,
    ScriptedDelays,
    ScriptedErrors,
    Trace,
    UniformDelays,
    init_states,
    rc_step,
    reliable_ratio_floor,
    reliable_ratio_mask,
    run,
)
from .graph import (
    GRAPH_REGISTRY,
    Digraph,
    GraphFormatError,
    assign_weights,
    is_strongly_connected,
    named_graph,
    parse_graph,
    serialize_graph,
)
from .harness import (
    X0_PRESETS,
    ExperimentConfig,
    ExperimentResult,
    consensus_error,
    max_outgoing_mass,
    resolve_graph,
    run_experiment,
    run_sweep,
    running_sum_stats,
    write_csv,
    write_trace,
    z_target,
)

__version__ = "0.1.0"
