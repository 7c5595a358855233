from __future__ import annotations

from .spec import ExportReport, ExportSpec


def export_model(spec: ExportSpec) -> ExportReport:
    """Export a checkpoint to ONNX and run the parity smoke test.

    Writes ``spec.output_path`` and a shape report beside it. An unsupported
    layer raises with the layer's name; a parity deviation above
    ``PARITY_TOLERANCE`` yields a report whose ``passed`` is false.
    """
    spec.validate()
    raise NotImplementedError(
        f"exporting {spec.target.value} checkpoints needs the training framework; "
        "build the ONNX file with its own exporter and check it with `newsocr segment` or `newsocr enhance`"
    )
