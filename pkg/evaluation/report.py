"""
Plain-text evaluation report.

    class 0 ap50 0.8125
    class 1 ap50 n/a
    map50 0.8125

`eval --by-visibility` appends one recall line per visibility mode:

    recall both 0.9000
    recall rgb-only 0.5000
    recall ir-only n/a
"""

from typing import Dict, Optional

from detection.synth import Visibility

from .metrics import EvaluationResult

UNDEFINED = 'n/a'


def format_value(value) -> str:
    return UNDEFINED if value is None else f"{value:.4f}"


def format_report(result: EvaluationResult) -> str:
    lines = [f"class {class_id} ap50 {format_value(ap)}" for class_id, ap in sorted(result.per_class.items())]
    lines.append(f"map50 {format_value(result.map50)}")
    return '\n'.join(lines) + '\n'


def format_recall(recall: Dict[Visibility, Optional[float]]) -> str:
    return ''.join(f"recall {mode.value} {format_value(recall.get(mode))}\n" for mode in Visibility)
