"""Converters from training-ecosystem artifacts to the files newsocr loads.

Only the interfaces live here. The conversions need the fine-tuned
checkpoints and their training frameworks and are not implemented; every
entry point raises ``NotImplementedError``.
"""

from .spec import OPSET, PARITY_TOLERANCE, ExportReport, ExportSpec, Target
from .export import export_model
from .labels import LabelConversion, convert_labels

__all__ = [
    "OPSET",
    "PARITY_TOLERANCE",
    "ExportReport",
    "ExportSpec",
    "LabelConversion",
    "Target",
    "convert_labels",
    "export_model",
]
