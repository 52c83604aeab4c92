"""Exact dimension computation, closure constructions and private learning for finite classes."""
from .errors import ClosureLabError, InputError, RealizabilityError, ResourceError
from .hclass import (AND, MAJ, OR, XOR, Aggregator, Domain, HypothesisClass, LabeledSample,
                     MajorityFormula, class_from_matrix, compose, dnf_majority_decompose, eval_formula,
                     make_multiunion_lower, make_random_or_blowup, make_threshold_chain, make_union_tight,
                     negate, project, union)
from .dims import (DimReport, MistakeTree, ThresholdWitness, littlestone_dimension, sauer_bound,
                   threshold_dimension, vc_dimension, verify_shattered_tree, verify_threshold_witness)

__version__ = "0.1.0"
