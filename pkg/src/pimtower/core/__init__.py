from .entropy import LapRecord, boundary_orbit, check_P1_P2, lap_entropy
from .intervals import Interval, format_rational, merge_closures, parse_rational, to_rational, union_length
from .maps import (
    EXACT,
    NUMERIC,
    Branch,
    PiecewiseMap,
    SmoothBranch,
    affine_map,
    doubling_map,
    dump_map,
    eval_map,
    full_branch_map,
    inverse_branch,
    logistic_map,
    markov_map,
    parse_map,
)
from .partition import Piece, RefinedPartition, iter_levels, refine_partition, word_piece
