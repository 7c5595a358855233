from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import export_model
from .labels import convert_labels
from .spec import OPSET, ExportSpec, Target


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="newsocr-export")
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("model", help="export a detector or upscaler checkpoint to ONNX")
    exp.add_argument("checkpoint", type=Path)
    exp.add_argument("--target", choices=[t.value for t in Target], required=True)
    exp.add_argument("--out", type=Path, required=True)
    exp.add_argument("--input-size", type=int, default=640)
    exp.add_argument("--scale", type=int, default=4)
    exp.add_argument("--opset", type=int, default=OPSET)

    lab = sub.add_parser("labels", help="convert an annotation export to YOLO labels and a manifest")
    lab.add_argument("export", type=Path)
    lab.add_argument("--images", type=Path, required=True)
    lab.add_argument("--out", type=Path, required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "model":
            spec = ExportSpec(args.checkpoint, Target(args.target), args.out, args.input_size, args.scale, args.opset)
            report = export_model(spec)
            return 0 if report.passed else 1
        result = convert_labels(args.export, args.images, args.out)
        return 1 if result.dangling else 0
    except (NotImplementedError, ValueError) as e:
        print(f"newsocr-export: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
