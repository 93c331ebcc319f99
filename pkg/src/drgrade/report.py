"""Grading report assembly and rendering.

The classifier ensemble's 3-class decision and the lesion-based stage are
reported side by side; a combined field takes the more severe of the two
(screening-safe), never silently replacing either.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .features import ClassLabel
from .lesions import LesionKind, SeverityStage
from .trust import TABLE_ORDER, TrustReport

LABEL_NAMES = {0: "NoDR", 1: "MildDR", 2: "SevereDR"}
STAGE_NAMES = {0: "S0", 1: "S1", 2: "S2", 3: "S3", 4: "S4"}


@dataclass
class GradingReport:
    source_id: str
    ensemble_label: ClassLabel
    ensemble_scores: list[float]
    lesion_counts: dict[LesionKind, int]
    quadrant_counts: dict[LesionKind, dict[int, int]]
    stage: SeverityStage
    trust: TrustReport | None
    config_fingerprint: str
    timings_ms: dict[str, float]

    @property
    def combined_label(self) -> ClassLabel:
        return ClassLabel(max(int(self.ensemble_label), int(self.stage.three_level)))


def report_to_dict(report: GradingReport, include_timings: bool = True) -> dict:
    doc = {
        "source_id": report.source_id,
        "ensemble": {
            "label": int(report.ensemble_label),
            "label_name": LABEL_NAMES[int(report.ensemble_label)],
            "scores": [float(s) for s in report.ensemble_scores],
        },
        "lesions": {
            kind.value: {
                "components": report.lesion_counts[kind],
                "quadrant_counts": {
                    str(q): report.quadrant_counts[kind][q] for q in (1, 2, 3, 4)
                },
            }
            for kind in LesionKind
        },
        "stage": {
            "five_level": int(report.stage.five_level),
            "five_level_name": STAGE_NAMES[int(report.stage.five_level)],
            "three_level": int(report.stage.three_level),
            "three_level_name": LABEL_NAMES[int(report.stage.three_level)],
            "reason": report.stage.reason,
        },
        "combined": {
            "label": int(report.combined_label),
            "label_name": LABEL_NAMES[int(report.combined_label)],
            "rule": "max severity of ensemble decision and lesion stage",
        },
        "config_fingerprint": report.config_fingerprint,
    }
    if report.trust is not None:
        doc["trust"] = {
            "weights": {
                "quality": report.trust.weights.w_quality,
                "f1": report.trust.weights.w_f1,
                "confidence": report.trust.weights.w_conf,
            },
            "per_lesion": {
                kind.value: {
                    "confidence": report.trust.per_lesion[kind].confidence,
                    "quality": report.trust.per_lesion[kind].quality,
                    "f1": report.trust.per_lesion[kind].f1,
                    "iou": report.trust.per_lesion[kind].iou,
                    "trust_pct": report.trust.per_lesion[kind].trust_pct,
                }
                for kind in TABLE_ORDER
                if kind in report.trust.per_lesion
            },
        }
    if include_timings:
        doc["timings_ms"] = dict(report.timings_ms)
    return doc


def report_to_json(report: GradingReport, include_timings: bool = True) -> str:
    return json.dumps(report_to_dict(report, include_timings), indent=2) + "\n"


def render_report_text(doc: dict) -> str:
    """Human-readable rendering of a report dict (decision, stage, trust)."""
    lines = [
        f"source: {doc['source_id']}",
        f"ensemble decision: {doc['ensemble']['label_name']} "
        f"(scores {', '.join(f'{s:.4f}' for s in doc['ensemble']['scores'])})",
        f"lesion stage: {doc['stage']['five_level_name']} -> "
        f"{doc['stage']['three_level_name']} ({doc['stage']['reason']})",
        f"combined: {doc['combined']['label_name']}",
        "",
        "lesions:",
    ]
    for kind, entry in doc["lesions"].items():
        quad = entry["quadrant_counts"]
        lines.append(
            f"  {kind:3s} components={entry['components']:3d} "
            f"quadrants={quad['1']}/{quad['2']}/{quad['3']}/{quad['4']}"
        )
    if "trust" in doc:
        lines.append("")
        lines.append("trust:")
        header = "  Lesion       " + "".join(
            f"{k:>8s}" for k in doc["trust"]["per_lesion"]
        )
        conf = "  Confidence   " + "".join(
            f"{v['confidence']:8.2f}" for v in doc["trust"]["per_lesion"].values()
        )
        iou_row = "  IoU score    " + "".join(
            f"{v['iou']:8.2f}" for v in doc["trust"]["per_lesion"].values()
        )
        trust_row = "  Module Trust " + "".join(
            f"{v['trust_pct']:7d}%" for v in doc["trust"]["per_lesion"].values()
        )
        lines.extend([header, conf, iou_row, trust_row])
    return "\n".join(lines) + "\n"
