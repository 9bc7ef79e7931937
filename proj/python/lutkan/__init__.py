"""Python bindings for lutkan: compile KAN edge splines to int8 lookup tables."""

from ._core import (
    CompiledModel,
    LutkanError,
    Model,
    compile,
    evaluate,
    forward_lut,
    forward_reference,
    from_bytes,
    load_compiled,
    load_model,
    model_from_json,
    pr_auc,
    roc_auc,
    synth_dataset,
    synth_model,
)

__all__ = [
    "CompiledModel",
    "LutkanError",
    "Model",
    "compile",
    "evaluate",
    "forward_lut",
    "forward_reference",
    "from_bytes",
    "load_compiled",
    "load_model",
    "model_from_json",
    "pr_auc",
    "roc_auc",
    "synth_dataset",
    "synth_model",
]
