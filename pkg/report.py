"""
Report documents and their JSON / CSV renderings.

Rendering is byte-deterministic and nothing time-dependent is written. JSON
keys are sorted and floats are rounded to six decimals, then printed in
shortest form rather than padded; non-finite values become null. CSV
P-values always carry six places.
"""
import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

import config
from battery import BatteryReport, TestResult
from qkd_sim import PHASES, PipelineReport, RoundRecord

logger = logging.getLogger(__name__)

JSON = "json"
CSV = "csv"
REPORT_FORMATS = (JSON, CSV)
DECIMALS = 6

ATTRITION_HEADER = ("round", "phase", "bits")
BATTERY_HEADER = ("round", "test", "pvalue_index", "pvalue", "verdict")


class AttritionRow(BaseModel):
    round: int = Field(..., ge=0)
    phase: str
    bits: int = Field(..., ge=0)


class RoundSummary(BaseModel):
    round: int
    qber: Optional[float] = None
    sampled_bits: int = 0
    corrected_errors: int = 0
    leaked_bits: int = 0
    residual_errors: int = 0
    keys_match: bool = False
    aborted: bool = False
    abort_reason: Optional[str] = None


class BatteryEntry(BaseModel):
    round: int = Field(default=0, ge=0, description="Pipeline round, 0 for external input")
    series: int = Field(default=1, ge=1)
    source: str = "pipeline"
    n: int = 0
    test: str
    params: Dict[str, Any] = Field(default_factory=dict)
    statistics: Dict[str, Optional[float]] = Field(default_factory=dict)
    p_values: List[float] = Field(default_factory=list)
    verdict: str
    reason: Optional[str] = None


class ReportDocument(BaseModel):
    tool: str = config.TOOL_NAME
    version: str = config.__version__
    config: Dict[str, Any] = Field(default_factory=dict, description="Echo of the run configuration")
    attrition: List[AttritionRow] = Field(default_factory=list)
    rounds: List[RoundSummary] = Field(default_factory=list)
    battery: List[BatteryEntry] = Field(default_factory=list)


def attrition_rows(pipeline: PipelineReport) -> List[AttritionRow]:
    return [AttritionRow(round=r, phase=phase, bits=bits) for r, phase, bits in pipeline.attrition_rows()]


def round_summary(record: RoundRecord) -> RoundSummary:
    return RoundSummary(
        round=record.round_index,
        qber=record.qber.E if record.qber is not None else None,
        sampled_bits=record.qber.sampled_bits if record.qber is not None else 0,
        corrected_errors=record.corrected_errors,
        leaked_bits=record.leaked_bits,
        residual_errors=record.residual_errors,
        keys_match=record.keys_match,
        aborted=record.aborted,
        abort_reason=record.abort_reason,
    )


def battery_entry(result: TestResult, report: BatteryReport) -> BatteryEntry:
    meta = report.metadata
    return BatteryEntry(
        round=int(meta.get("round", 0)),
        series=int(meta.get("series", 1)),
        source=str(meta.get("source", "pipeline")),
        n=report.n,
        test=result.test_id,
        params=result.params,
        statistics=result.statistics,
        p_values=result.p_values,
        verdict=result.verdict,
        reason=result.reason,
    )


def build_report(config_echo: Dict[str, Any], pipelines: Sequence[PipelineReport] = (),
                 batteries: Sequence[BatteryReport] = ()) -> ReportDocument:
    doc = ReportDocument(config=config_echo)
    for pipeline in pipelines:
        doc.attrition.extend(attrition_rows(pipeline))
        doc.rounds.extend(round_summary(r) for r in pipeline.rounds)
    for battery in batteries:
        doc.battery.extend(battery_entry(result, battery) for result in battery.results)
    return doc


def _normalize(value: Any) -> Any:
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        return round(value, DECIMALS) if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if hasattr(value, "item"):
        return _normalize(value.item())
    return value


def render_json(doc: ReportDocument) -> str:
    return json.dumps(_normalize(doc.model_dump()), indent=2, sort_keys=True) + "\n"


def render_csv(doc: ReportDocument) -> str:
    """Attrition table, a blank line, then the battery table."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ATTRITION_HEADER)
    for row in doc.attrition:
        writer.writerow((row.round, row.phase, row.bits))
    writer.writerow(())
    writer.writerow(BATTERY_HEADER)
    for entry in doc.battery:
        if not entry.p_values:
            writer.writerow((entry.round, entry.test, "", "", entry.verdict))
        for i, p in enumerate(entry.p_values):
            writer.writerow((entry.round, entry.test, i, f"{p:.{DECIMALS}f}", entry.verdict))
    return buf.getvalue()


def emit_report(doc: ReportDocument, fmt: str, path: Union[str, Path]) -> None:
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"Unknown report format: {fmt}")
    text = render_json(doc) if fmt == JSON else render_csv(doc)
    try:
        Path(path).write_text(text, encoding="utf-8", newline="")
    except OSError as e:
        logger.error(f"Failed to write report {path}: {str(e)}")
        raise
    logger.info(f"Wrote {fmt} report to {path}")


def read_csv_report(path: Union[str, Path]) -> Tuple[List[Tuple[int, str, int]], List[Tuple[int, str, Optional[int], Optional[float], str]]]:
    """Parse a CSV report back into (attrition rows, battery rows)."""
    attrition: List[Tuple[int, str, int]] = []
    battery: List[Tuple[int, str, Optional[int], Optional[float], str]] = []
    section = None
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if tuple(row) == ATTRITION_HEADER:
                section = "attrition"
            elif tuple(row) == BATTERY_HEADER:
                section = "battery"
            elif section == "attrition":
                attrition.append((int(row[0]), row[1], int(row[2])))
            elif section == "battery":
                index = int(row[2]) if row[2] else None
                pvalue = float(row[3]) if row[3] else None
                battery.append((int(row[0]), row[1], index, pvalue, row[4]))
    return attrition, battery


def phase_order_ok(doc: ReportDocument) -> bool:
    """True when every round's attrition counts never increase along the phases."""
    by_round: Dict[int, Dict[str, int]] = {}
    for row in doc.attrition:
        by_round.setdefault(row.round, {})[row.phase] = row.bits
    for counts in by_round.values():
        values = [counts[p] for p in PHASES if p in counts]
        if any(b > a for a, b in zip(values, values[1:])):
            return False
    return True
