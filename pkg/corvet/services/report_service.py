import os
from pathlib import Path
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from ..core.logging import app_logger
from ..core.storage import atomic_write
from ..schemas.schemas import EvalResult


class ReportService:

    def __init__(self):
        # Setup Jinja2 environment
        template_dir = os.path.join(os.path.dirname(__file__), '..', 'templates')
        self.jinja_env = Environment(loader=FileSystemLoader(template_dir), keep_trailing_newline=True)

    def render_report(self, result: EvalResult) -> str:
        template = self.jinja_env.get_template('report.md.j2')
        return template.render(result=result)

    def write_report(self, result: EvalResult, path) -> Path:
        try:
            out = atomic_write(path, self.render_report(result))
            app_logger.info(f"Wrote report {out}")
            return out
        except Exception as e:
            app_logger.error(f"Error writing report {path}: {str(e)}")
            raise

    @staticmethod
    def plot_sweep(df: pd.DataFrame, axis: str, path) -> Path:
        """Accuracy and cycles per sweep point as a static PNG."""
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax1 = plt.subplots(figsize=(6, 4))
        points = df["point"].astype(str)
        ax1.plot(points, df["accuracy"], marker="o", color="tab:blue")
        ax1.set_xlabel(axis)
        ax1.set_ylabel("top-1 accuracy (%)", color="tab:blue")
        ax2 = ax1.twinx()
        ax2.plot(points, df["total_cycles"], marker="s", color="tab:red")
        ax2.set_ylabel("cycles per inference", color="tab:red")
        fig.tight_layout()

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path)
        plt.close(fig)
        app_logger.info(f"Wrote plot {path}")
        return path
