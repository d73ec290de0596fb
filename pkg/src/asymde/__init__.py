"""Document exchange and error correction under asymmetric information."""

from .core import (
    BitString,
    ErrorPattern,
    SubsetSpec,
    apply_errors,
    chi,
    edit_distance_at_most,
    entropy_H,
    entropy_H1,
    hamming_distance,
    sample_spec_instance,
)
from .expander import BipartiteGraph, ExpanderPlan, plan_one_set, plan_special, random_bipartite
from .expcode import bp_decode_budgeted, bp_decode_restricted, encode_parities
from .hamming_de import (
    Recovery,
    Sketch,
    Tuning,
    alice_chi,
    alice_general,
    alice_one_set,
    alice_special,
    bob_chi,
    bob_general,
    bob_one_set,
    bob_special,
    ecc_decode,
    ecc_encode,
    group_by_chi,
    plan_general,
    two_sided_wrap,
)
from .edit_de import EditParams, alice_edit_sketch, bob_edit_recover, dp_match, edit_adversary

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "BitString",
    "EditParams",
    "ErrorPattern",
    "ExpanderPlan",
    "Recovery",
    "Sketch",
    "SubsetSpec",
    "Tuning",
    "alice_chi",
    "alice_edit_sketch",
    "alice_general",
    "alice_one_set",
    "alice_special",
    "apply_errors",
    "bob_chi",
    "bob_edit_recover",
    "bob_general",
    "bob_one_set",
    "bob_special",
    "bp_decode_budgeted",
    "bp_decode_restricted",
    "chi",
    "dp_match",
    "ecc_decode",
    "ecc_encode",
    "edit_adversary",
    "edit_distance_at_most",
    "encode_parities",
    "entropy_H",
    "entropy_H1",
    "group_by_chi",
    "hamming_distance",
    "plan_general",
    "plan_one_set",
    "plan_special",
    "random_bipartite",
    "sample_spec_instance",
    "two_sided_wrap",
]
