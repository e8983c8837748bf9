"""diffadvect: desk-scale distributed particle advection with diffusive load balancing."""

from .balance import (
    BalanceDecision,
    LoadVector,
    balance_constant,
    balance_gllma,
    balance_lma,
    balance_none,
    quota_offer,
    select_particles,
    synchronous_step,
)
from .config import RunConfig, load_config_file
from .errors import (
    ConfigError,
    DiffAdvectError,
    DomainError,
    InvariantError,
    OutOfBlockError,
    RoundLimitError,
)
from .field import AnalyticField, Block, evaluate_field, rasterize_block, sample_trilinear
from .metrics import lif, lif_from_steps, speedup
from .runtime import RunResult, Simulator
from .topology import ProcessGrid, decompose, neighborhood_of, rank_to_coords, route_out_of_bounds

__version__ = "0.1.0"

__all__ = [
    "AnalyticField",
    "BalanceDecision",
    "Block",
    "ConfigError",
    "DiffAdvectError",
    "DomainError",
    "InvariantError",
    "LoadVector",
    "OutOfBlockError",
    "ProcessGrid",
    "RoundLimitError",
    "RunConfig",
    "RunResult",
    "Simulator",
    "balance_constant",
    "balance_gllma",
    "balance_lma",
    "balance_none",
    "decompose",
    "evaluate_field",
    "lif",
    "lif_from_steps",
    "load_config_file",
    "neighborhood_of",
    "quota_offer",
    "rank_to_coords",
    "rasterize_block",
    "route_out_of_bounds",
    "sample_trilinear",
    "select_particles",
    "speedup",
    "synchronous_step",
]
