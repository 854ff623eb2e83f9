"""Built-in model contracts, selectable by name."""

from __future__ import annotations

from ..contract import ModelContract
from ..errors import UsageError
from .normal_means import (
    make_normal_means,
    nm_bias_corrected,
    nm_closed_form_mle,
    nm_delta_spec,
    nm_simulate,
)
from .dynamic_logit import dl_simulate, dl_stationary_init, make_dynamic_logit

_FACTORIES = {
    "normal-means": make_normal_means,
    "dynamic-logit": make_dynamic_logit,
}


def get_model(name: str) -> ModelContract:
    """Model contract for a built-in model name."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        known = ", ".join(sorted(_FACTORIES))
        raise UsageError(f"unknown model {name!r}; known models: {known}") from None
    return factory()


__all__ = [
    "get_model",
    "make_normal_means",
    "make_dynamic_logit",
    "nm_closed_form_mle",
    "nm_simulate",
    "nm_bias_corrected",
    "nm_delta_spec",
    "dl_stationary_init",
    "dl_simulate",
]
