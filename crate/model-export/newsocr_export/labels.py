from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class LabelConversion:
    manifest_path: Path
    label_files: list[Path] = field(default_factory=list)
    # image references that did not resolve; any entry means a nonzero exit
    dangling: list[str] = field(default_factory=list)
    clamped_boxes: int = 0


def yolo_line(class_id: int, box: tuple[float, float, float, float], width: int, height: int) -> str:
    """``class cx cy w h`` normalized by the image size, the format newsocr reads."""
    x0, y0, x1, y1 = box
    return f"{class_id} {(x0 + x1) / 2 / width} {(y0 + y1) / 2 / height} {(x1 - x0) / width} {(y1 - y0) / height}"


def convert_labels(annotation_export: Path, images_root: Path, out_dir: Path) -> LabelConversion:
    """Turn an annotation-tool export into YOLO label files and a manifest.

    Boxes outside the image are clamped with a warning; dangling image
    references are listed and skipped.
    """
    raise NotImplementedError(
        f"no reader for {annotation_export}: annotation export formats are not implemented"
    )
