"""Closed-form parameter accounting for the BiLSTM classifier head.

The recurrent layer holds four gate weight matrices per direction; with
``input_size`` inputs, ``hidden_units`` units per direction (so twice
that in total) and a per-direction output width equal to ``hidden_units``
after concatenation, the learnable-parameter count of the layer is

    bilstm_params = 4 * total_hidden * ((input_size + 1) + hidden_units)

where the ``+ 1`` accounts for the gate biases. The dense head adds
``class_count * total_hidden`` weights (bias excluded by convention; a
bias-inclusive count is reported alongside).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class FlopsReport:
    input_size: int
    hidden_units: int
    total_hidden: int
    output_size: int
    class_count: int
    bilstm_params: int
    dense_params: int
    dense_params_with_bias: int
    total: int

    def as_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "hidden_units": self.hidden_units,
            "total_hidden": self.total_hidden,
            "output_size": self.output_size,
            "class_count": self.class_count,
            "bilstm_params": self.bilstm_params,
            "dense_params": self.dense_params,
            "dense_params_with_bias": self.dense_params_with_bias,
            "total": self.total,
        }

    def as_text(self) -> str:
        rows = [
            ("input size", self.input_size),
            ("hidden units per direction", self.hidden_units),
            ("total hidden units", self.total_hidden),
            ("output size per direction", self.output_size),
            ("classes", self.class_count),
            ("bilstm parameters", self.bilstm_params),
            ("dense parameters (no bias)", self.dense_params),
            ("dense parameters (with bias)", self.dense_params_with_bias),
            ("total", self.total),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def bilstm_flops(input_size: int, hidden_units: int, class_count: int) -> FlopsReport:
    """Learnable-parameter count of the bidirectional layer plus dense head.

    ``total`` follows the convention that equates the parameter count with
    the FLOP count of the layer; it is not multiplied by sequence length.
    """
    for name, value in (
        ("input_size", input_size),
        ("hidden_units", hidden_units),
        ("class_count", class_count),
    ):
        if value < 1:
            raise ValidationError(f"{name} must be >= 1, got {value}")
    total_hidden = 2 * hidden_units
    output_size = total_hidden // 2
    bilstm_params = 4 * total_hidden * ((input_size + 1) + output_size)
    dense_params = class_count * total_hidden
    return FlopsReport(
        input_size=input_size,
        hidden_units=hidden_units,
        total_hidden=total_hidden,
        output_size=output_size,
        class_count=class_count,
        bilstm_params=bilstm_params,
        dense_params=dense_params,
        dense_params_with_bias=dense_params + class_count,
        total=bilstm_params + dense_params,
    )
