import csv
import logging
from pathlib import Path
from typing import List, Optional, Union

from app.core.exceptions import CorpusError
from app.schemas.metrics import METRIC_COLUMNS, MetricRow, Phase

logger = logging.getLogger(__name__)


def _opt(value: str) -> Optional[float]:
    return float(value) if value != "" else None


def read_metrics(path: Union[str, Path]) -> List[MetricRow]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"Metrics file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRIC_COLUMNS:
            raise CorpusError(f"{path} does not carry the metric header {','.join(METRIC_COLUMNS)}")
        return [
            MetricRow(
                step=int(r[0]),
                epoch=int(r[1]),
                phase=Phase(r[2]),
                loss=_opt(r[3]),
                mean_reward=_opt(r[4]),
                dev_bleu=_opt(r[5]),
            )
            for r in reader
        ]


class MetricsLogger:
    """Appends one CSV row per update or evaluation; ``step`` counts rows.

    With ``resume_step`` the existing file is cut back to that step and
    counting continues from there.
    """

    def __init__(self, path: Union[str, Path], resume_step: Optional[int] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.rows: List[MetricRow] = []
        if resume_step is not None and self.path.exists():
            self.rows = [row for row in read_metrics(self.path) if row.step <= resume_step]
        self.step = self.rows[-1].step if self.rows else 0
        with self.path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRIC_COLUMNS)
            writer.writerows(row.as_csv() for row in self.rows)

    def log(
        self,
        epoch: int,
        phase: Phase,
        loss: Optional[float] = None,
        mean_reward: Optional[float] = None,
        dev_bleu: Optional[float] = None,
    ) -> MetricRow:
        self.step += 1
        row = MetricRow(step=self.step, epoch=epoch, phase=phase, loss=loss, mean_reward=mean_reward, dev_bleu=dev_bleu)
        with self.path.open("a", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(row.as_csv())
        self.rows.append(row)
        return row
