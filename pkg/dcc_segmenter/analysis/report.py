import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

from dcc_segmenter.trainer.metrics import MetricsReport
from dcc_segmenter.utils.io_utils import read_json, write_csv, write_json

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("seed", "organ", "metric", "value")


def report_rows(report: MetricsReport) -> List[Tuple]:
    """Flatten one report into (seed, organ, metric, value) rows in a fixed order"""
    rows: List[Tuple] = []
    for organ, dice in sorted(report.per_organ_dice.items(), key=lambda item: int(item[0])):
        rows.append((report.seed, organ, "dice", dice))
    for organ, score in sorted(report.silhouette.items(), key=lambda item: int(item[0])):
        rows.append((report.seed, organ, "silhouette", score))
    for phase, dice in sorted(report.per_phase_dice.items()):
        rows.append((report.seed, "all", f"dice_{phase}", dice))
    rows.append((report.seed, "all", "mean_dice", report.mean_dice))
    return rows


def emit_report(reports: Sequence[MetricsReport], path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write ``<path>.json`` with the full reports and ``<path>.csv`` with flat metric rows"""
    base = Path(path)
    json_path = base.with_suffix(".json")
    csv_path = base.with_suffix(".csv")
    write_json(json_path, [report.model_dump(mode="json") for report in reports])
    write_csv(csv_path, REPORT_COLUMNS, (row for report in reports for row in report_rows(report)))
    logger.info(f"Wrote {len(reports)} reports to {json_path} and {csv_path}")
    return json_path, csv_path


def read_reports(path: Union[str, Path]) -> List[MetricsReport]:
    return [MetricsReport.model_validate(item) for item in read_json(Path(path).with_suffix(".json"))]
