"""Hard weighted graphs for strong regularity, with exact checkers."""
from .towerarith import TowerNum, tower, wowzer, t_phi, trap_schedule
from .partitions import Partition, canonical_partition, beta_contains, beta_refines, generate_balanced, verify_balanced
from .convexdecomp import decompose, verify_trap, generate_trap, quadform_bounds
from .hardgraph import ConstructionParams, build_g, build_h, place_traps, density, sample_unweighted
from .regcheck import check_pair, check_partition, check_ef_regular, bad_pair_witness
from .witnesslab import classify_useful, helpful_pairs, peel, irregularity_witness, check_balanced_vector_lemma
from .afksloop import potential, szemeredi_refine, afks_iterate, SzemerediRefiner, StrongRegularityIterator

__version__ = "0.1.0"

__all__ = [
    "TowerNum",
    "tower",
    "wowzer",
    "t_phi",
    "trap_schedule",
    "Partition",
    "canonical_partition",
    "beta_contains",
    "beta_refines",
    "generate_balanced",
    "verify_balanced",
    "decompose",
    "verify_trap",
    "generate_trap",
    "quadform_bounds",
    "ConstructionParams",
    "build_g",
    "build_h",
    "place_traps",
    "density",
    "sample_unweighted",
    "check_pair",
    "check_partition",
    "check_ef_regular",
    "bad_pair_witness",
    "classify_useful",
    "helpful_pairs",
    "peel",
    "irregularity_witness",
    "check_balanced_vector_lemma",
    "potential",
    "szemeredi_refine",
    "afks_iterate",
    "SzemerediRefiner",
    "StrongRegularityIterator",
]
