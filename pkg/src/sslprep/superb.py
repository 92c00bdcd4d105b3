"""Ten-task benchmark score aggregation.

A row holds one model's per-task results on the usual percent scale.
Error-type metrics count against the model, so they enter the average as
100 - x; accuracy-type metrics and the x100-scaled retrieval metric enter
as-is.  The summary score is the plain mean of the ten aligned values.
"""

from __future__ import annotations

import csv
import dataclasses
import io

from .errors import ConfigError

# Field order is the canonical column order for CSV input and output.
FIELDS = ("pr", "asr", "ks", "qbe", "ic", "sf_f1", "sf_cer", "asv", "sd", "er")

# Metrics where lower is better: phone/word error rates, slot character
# error rate, speaker-verification EER, diarization error rate.
ERROR_FIELDS = frozenset({"pr", "asr", "sf_cer", "asv", "sd"})


@dataclasses.dataclass
class SuperbRow:
    """One model's results: error rates, accuracies, F1, and MTWV x100."""

    pr: float
    asr: float
    ks: float
    qbe: float
    ic: float
    sf_f1: float
    sf_cer: float
    asv: float
    sd: float
    er: float
    name: str = ""

    def __post_init__(self) -> None:
        for field in FIELDS:
            value = float(getattr(self, field))
            if not 0.0 <= value <= 100.0:
                raise ConfigError(
                    f"{field} must be in [0, 100], got {value}"
                    + (f" (row {self.name!r})" if self.name else "")
                )
            setattr(self, field, value)


def superb_score(row: SuperbRow) -> float:
    """Mean of the ten aligned values; error metrics flipped to 100 - x.

    Returned at full precision; display rounds to one decimal.
    """
    values = [
        100.0 - getattr(row, field) if field in ERROR_FIELDS else getattr(row, field)
        for field in FIELDS
    ]
    return sum(values) / len(values)


def parse_rows(text: str) -> list[SuperbRow]:
    """Parse CSV with a header naming the ten metric columns.

    An optional "name" column labels each row.  Column order is free;
    all ten metrics must be present.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ConfigError("empty metrics CSV")
    header = [column.strip().lower() for column in reader.fieldnames]
    missing = [field for field in FIELDS if field not in header]
    if missing:
        raise ConfigError(f"metrics CSV is missing columns: {', '.join(missing)}")
    rows = []
    for record in reader:
        record = {key.strip().lower(): value for key, value in record.items() if key}
        try:
            values = {field: float(record[field]) for field in FIELDS}
        except (ValueError, TypeError) as err:
            raise ConfigError(f"bad metric value in CSV row: {err}") from err
        rows.append(SuperbRow(name=(record.get("name") or "").strip(), **values))
    return rows
