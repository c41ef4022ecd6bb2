"""Path-based deep network matching for recommendation."""

from ._pdn import (
    ConfigError,
    DataError,
    Error,
    IntegrityError,
    ModelMismatchError,
    NonFiniteError,
    Pipeline,
    UnknownEntityError,
    click_probability,
    hr_ndcg,
    log1mexp,
    loss,
    loss_grad,
    merge_path,
    softplus,
    write_synthetic,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "IntegrityError",
    "ModelMismatchError",
    "NonFiniteError",
    "Pipeline",
    "UnknownEntityError",
    "click_probability",
    "hr_ndcg",
    "log1mexp",
    "loss",
    "loss_grad",
    "merge_path",
    "softplus",
    "write_synthetic",
    "run",
]


def run(config):
    """Runs prepare, train, build_index and evaluate; returns the evaluation reports."""
    p = Pipeline(config)
    p.prepare()
    p.train()
    p.build_index()
    return p.evaluate()
