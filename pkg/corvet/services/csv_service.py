import io
from pathlib import Path
from typing import List, Sequence
import pandas as pd

from ..core.exceptions import LoadError
from ..core.logging import app_logger
from ..core.storage import atomic_write
from ..models.engine import TraceEvent
from ..schemas.schemas import CycleReport, SweepRow

TRACE_COLUMNS = ["cycle", "signal", "value"]


class CSVService:

    @staticmethod
    def cycles_frame(report: CycleReport) -> pd.DataFrame:
        """One row per layer"""
        return pd.DataFrame([lc.model_dump() for lc in report.per_layer])

    @staticmethod
    def trace_frame(trace: Sequence[TraceEvent]) -> pd.DataFrame:
        return pd.DataFrame(list(trace), columns=TRACE_COLUMNS)

    @staticmethod
    def sweep_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
        df = pd.DataFrame([row.model_dump() for row in rows])
        if "tanh_max_error" in df and df["tanh_max_error"].isna().all():
            df = df.drop(columns=["tanh_max_error"])
        return df

    @staticmethod
    def write_frame(df: pd.DataFrame, path) -> Path:
        try:
            out = atomic_write(path, df.to_csv(index=False, lineterminator="\n"))
            app_logger.info(f"Wrote {len(df)} rows to {out}")
            return out
        except OSError as e:
            app_logger.error(f"Error writing CSV {path}: {str(e)}")
            raise

    @staticmethod
    def read_trace(path) -> List[TraceEvent]:
        """Parse a trace CSV back into events"""
        path = Path(path)
        if not path.exists():
            raise LoadError("file not found", path=str(path))
        try:
            df = pd.read_csv(io.StringIO(path.read_text(encoding="utf-8")))
        except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise LoadError(f"unreadable trace: {str(e)}", path=str(path)) from e

        missing = [c for c in TRACE_COLUMNS if c not in df.columns]
        if missing:
            raise LoadError(f"missing columns: {', '.join(missing)}", path=str(path))
        return [TraceEvent(int(r.cycle), str(r.signal), int(r.value)) for r in df.itertuples(index=False)]
