from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

# Opset the Rust loader is tested against; written into model metadata.
OPSET = 13

# Max absolute deviation between native and exported outputs on the smoke input.
PARITY_TOLERANCE = 1e-3


class Target(enum.Enum):
    DETECTOR = "detector"
    UPSCALER = "upscaler"


@dataclass(frozen=True)
class ExportSpec:
    """What to export and the shape contract the file must meet.

    Detectors take ``1x3xSxS`` float input in [0, 1] named ``images`` and
    return ``1x(4+C)xN`` rows ``(cx, cy, w, h, class scores...)`` in input
    pixels. Upscalers take ``1x3xTxT`` and return ``1x3x(kT)x(kT)``.
    """

    checkpoint_path: Path
    target: Target
    output_path: Path
    # square input side for detectors, tile side for upscalers
    input_size: int = 640
    # upscalers only
    scale: int = 4
    opset: int = OPSET

    def validate(self) -> None:
        if self.input_size <= 0:
            raise ValueError(f"input_size must be positive, got {self.input_size}")
        if self.target is Target.DETECTOR and self.input_size % 32:
            raise ValueError(f"detector input_size {self.input_size} is not a multiple of 32")
        if self.target is Target.UPSCALER and self.scale < 1:
            raise ValueError(f"scale must be at least 1, got {self.scale}")


@dataclass
class ExportReport:
    """Sidecar written next to the exported model."""

    output_path: Path
    input_shape: tuple[int, ...]
    output_shapes: dict[str, tuple[int, ...]] = field(default_factory=dict)
    max_abs_deviation: float | None = None

    @property
    def passed(self) -> bool:
        return self.max_abs_deviation is not None and self.max_abs_deviation <= PARITY_TOLERANCE
