from .forest import ForestModel, ForestParams, fit_forest
from .tree import TreeModel, fit_tree
from .unrolling import S_CANDIDATES, UnrollingFit, UnrollingFitError, efficiency, fit_unrolling

__all__ = [
    "ForestModel",
    "ForestParams",
    "fit_forest",
    "TreeModel",
    "fit_tree",
    "S_CANDIDATES",
    "UnrollingFit",
    "UnrollingFitError",
    "efficiency",
    "fit_unrolling",
]
