"""Interpretable regression on county-month panels.

The heavy lifting lives in the compiled ``_core`` module; this package adds
JSON decoding so reports and lineage come back as plain Python objects.
"""

import json as _json

from ._core import (
    DesignMatrix,
    Dataset,
    FittedModel,
    InputError,
    ModelError,
    PanelConfig,
    ResponseLaw,
    drop_sparse_columns,
    fit_model,
    generate,
    inject_missing,
    join_on_keys,
    load_csv,
    mae,
    normal_quantile,
    normalize_rate,
    parse_csv,
    partial_dependence,
    partition_by_urbanization,
    pearson,
    prune_correlated,
    qq_residuals,
    r_squared,
    rmse,
    variable_importance,
)
from . import _core

__all__ = [
    "DesignMatrix",
    "Dataset",
    "FittedModel",
    "InputError",
    "ModelError",
    "PanelConfig",
    "ResponseLaw",
    "default_models",
    "drop_sparse_columns",
    "fit_model",
    "generate",
    "inject_missing",
    "join_on_keys",
    "lineage",
    "load_csv",
    "mae",
    "normal_quantile",
    "normalize_rate",
    "parse_csv",
    "partial_dependence",
    "partition_by_urbanization",
    "pearson",
    "prune_correlated",
    "qq_residuals",
    "r_squared",
    "rmse",
    "run_experiment",
    "variable_importance",
]


def default_models():
    """The seven-model zoo as a list of {"name", "kind", "params"} dicts."""
    return _json.loads(_core.default_models_json())


def lineage(dataset):
    """Preprocessing steps applied to ``dataset``, oldest first."""
    return _json.loads(dataset.lineage_json())


def run_experiment(dataset, models=None, iterations=30, test_fraction=0.2, seed=0, threads=1, fit_weight=0.2):
    """Repeated randomized holdout over ``models`` (default: the seven-model zoo).

    Returns the report as a dict, including per-iteration metrics and the
    selected final model under ``report["selection"]`` when one is eligible.
    """
    models_json = "" if models is None else _json.dumps(list(models))
    text = _core.run_experiment_json(dataset, models_json, iterations, test_fraction, seed, threads, fit_weight)
    return _json.loads(text)
