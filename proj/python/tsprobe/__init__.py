"""Prompt-vs-probe diagnostic harness for time-series classification.

The heavy lifting lives in the C++ core; this package re-exports the main
operations: digit-space serialization, plot rendering, answer parsing, the
evaluation metrics, linear probes, heuristic floors, and the activation
store used to feed externally extracted hidden states into the probing
pipeline.
"""

from ._core import (
    ActivationStore,
    LayerProbe,
    dataset_pass_at_k,
    evaluate_probe,
    format_requirement,
    macro_f1,
    majority_predict,
    parse_answer,
    pass_at_k,
    prior_predict,
    render_line_plot,
    render_spectrogram,
    renderer_version,
    serialize_digits,
    serializer_version,
    train_probe,
    tsne_embed,
    uniform_predict,
    variant_spread,
)

__all__ = [
    "ActivationStore",
    "LayerProbe",
    "dataset_pass_at_k",
    "evaluate_probe",
    "format_requirement",
    "macro_f1",
    "majority_predict",
    "parse_answer",
    "pass_at_k",
    "prior_predict",
    "render_line_plot",
    "render_spectrogram",
    "renderer_version",
    "serialize_digits",
    "serializer_version",
    "train_probe",
    "tsne_embed",
    "uniform_predict",
    "variant_spread",
]

__version__ = "0.1.0"
