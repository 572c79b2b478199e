"""Run reports: named pass/fail checks, echoed inputs and timings, as JSON or HTML."""

import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Any

from jinja2 import Environment
from jinja2 import FileSystemLoader
from jinja2 import select_autoescape
from pydantic import BaseModel
from pydantic import Field
from pydantic import computed_field

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"


class Check(BaseModel):
    """One pass/fail flag and the criterion it was judged by."""

    name: str
    criterion: str
    value: float | str | bool | None = None
    tolerance: float | None = None
    passed: bool


class Report(BaseModel):
    """Structured summary of one subcommand run."""

    command: str
    generated: str = Field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    inputs: dict[str, Any] = Field(default_factory=dict)
    checks: list[Check] = Field(default_factory=list)
    results: dict[str, Any] = Field(default_factory=dict)
    timings: dict[str, float] = Field(default_factory=dict)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed_checks(self) -> list[Check]:
        return [check for check in self.checks if not check.passed]

    def add_check(
        self,
        name: str,
        criterion: str,
        passed: bool,
        value: float | str | bool | None = None,
        tolerance: float | None = None,
    ) -> Check:
        """Record a check and return it."""
        check = Check(
            name=name, criterion=criterion, value=value, tolerance=tolerance, passed=bool(passed)
        )
        self.checks.append(check)
        logger.debug(f"Check {name}: {'passed' if check.passed else 'FAILED'} ({criterion})")
        return check

    @contextmanager
    def timed(self, label: str) -> Iterator[None]:
        """Record the wall-clock time of the enclosed block under ``label``."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = time.perf_counter() - start

    def write_json(self, path: Path | str) -> Path:
        """Write the report as indented JSON."""
        output_file = Path(path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        output_file.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"Wrote report: {output_file.absolute()}")
        return output_file


class ReportGenerator:
    """Render reports through Jinja2 templates."""

    def __init__(self, template_dir: Path | str = TEMPLATE_DIR):
        """Initialize report generator.

        Args:
            template_dir: Directory containing Jinja2 templates
        """
        self.template_dir = Path(template_dir)
        self.jinja_env = Environment(
            loader=FileSystemLoader(str(self.template_dir)),
            autoescape=select_autoescape(["html", "xml"]),
            trim_blocks=True,
            lstrip_blocks=True,
        )
        self.jinja_env.filters["format_number"] = format_number

    def render(self, report: Report, template_name: str = "report.html") -> str:
        template = self.jinja_env.get_template(template_name)
        return template.render(report=report, passed=report.passed)

    def generate_html_report(self, report: Report, output_path: Path | str) -> Path:
        """Render ``report`` to an HTML file.

        Returns:
            Path to the generated file
        """
        try:
            html_content = self.render(report)
            output_file = Path(output_path)
            output_file.parent.mkdir(parents=True, exist_ok=True)
            with open(output_file, "w", encoding="utf-8") as f:
                f.write(html_content)
        except Exception as e:
            logger.error(f"Failed to generate HTML report: {e}")
            raise

        logger.info(f"Generated HTML report: {output_file.absolute()}")
        return output_file


def format_number(value: Any) -> str:
    """Format numbers with 10 significant digits; pass other values through."""
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, int | float):
        return format(value, ".10g")
    return str(value)
