"""Tests for report_generator module."""

import json
import tempfile
import time
from pathlib import Path

import pytest
from jinja2 import TemplateNotFound

from kerr_stability.report_generator import TEMPLATE_DIR
from kerr_stability.report_generator import Report
from kerr_stability.report_generator import ReportGenerator
from kerr_stability.report_generator import format_number


@pytest.fixture
def sample_report() -> Report:
    report = Report(command="stability", inputs={"M": 1.0, "a": 0.5, "m": 1})
    report.add_check(
        "mass_bound_positivity",
        "min eig >= -tol",
        True,
        value=0.0123456789012,
        tolerance=1e-8,
    )
    report.add_check("lower_bound_alpha", "min eig(A_h) >= alpha - 1e-6", True, value=-0.0179)
    report.results["mu_new"] = 0.4641016151377546
    return report


def test_report_passed_tracks_checks(sample_report: Report) -> None:
    """Test that a report passes only while every check passes."""
    assert sample_report.passed
    assert sample_report.failed_checks == []

    failed = sample_report.add_check("shift_certificate", "best min eig >= -tol", False)
    assert not failed.passed
    assert not sample_report.passed
    assert [check.name for check in sample_report.failed_checks] == ["shift_certificate"]


def test_empty_report_passes() -> None:
    """Test that a report without checks counts as passed."""
    assert Report(command="pencil").passed


def test_add_check_coerces_flags() -> None:
    """Test that numpy-like truthy values are stored as plain booleans."""
    report = Report(command="pencil")
    check = report.add_check("count", "nonzero", 3)  # type: ignore[arg-type]
    assert check.passed is True


def test_timed_records_duration() -> None:
    """Test that timed blocks record wall-clock durations, even on errors."""
    report = Report(command="evolve")
    with report.timed("sleep"):
        time.sleep(0.01)
    assert report.timings["sleep"] >= 0.005

    with pytest.raises(RuntimeError):
        with report.timed("failing"):
            raise RuntimeError("boom")
    assert "failing" in report.timings


def test_write_json(sample_report: Report) -> None:
    """Test JSON output including the computed verdict."""
    with tempfile.TemporaryDirectory() as temp_dir:
        path = sample_report.write_json(Path(temp_dir) / "nested" / "report.json")
        data = json.loads(path.read_text(encoding="utf-8"))

    assert data["command"] == "stability"
    assert data["passed"] is True
    assert data["inputs"]["a"] == 0.5
    assert [check["name"] for check in data["checks"]] == [
        "mass_bound_positivity",
        "lower_bound_alpha",
    ]
    assert data["checks"][0]["tolerance"] == 1e-8
    assert data["results"]["mu_new"] == pytest.approx(0.4641016151377546)


def test_report_generator_initialization() -> None:
    """Test ReportGenerator initialization."""
    generator = ReportGenerator()

    assert generator.template_dir == TEMPLATE_DIR
    assert generator.jinja_env is not None
    assert "format_number" in generator.jinja_env.filters


def test_format_number() -> None:
    """Test number formatting with 10 significant digits."""
    assert format_number(0.0123456789012) == "0.0123456789"
    assert format_number(1e-8) == "1e-08"
    assert format_number(3) == "3"
    assert format_number(True) == "True"
    assert format_number(None) == "None"
    assert format_number("error") == "error"


def test_render_report(sample_report: Report) -> None:
    """Test that rendered HTML shows checks, inputs and results."""
    html = ReportGenerator().render(sample_report)

    assert "<title>kerr-stability stability report</title>" in html
    assert "all checks passed" in html
    assert "mass_bound_positivity" in html
    assert "0.0123456789" in html
    assert "mu_new" in html
    assert "class=\"pass\"" in html


def test_render_failed_report(sample_report: Report) -> None:
    """Test that failed checks are counted and escaped criteria are preserved."""
    sample_report.add_check("shift_certificate", "min eig <s> < 0", False)
    html = ReportGenerator().render(sample_report)

    assert "1 check(s) failed" in html
    assert "FAIL" in html
    assert "min eig &lt;s&gt; &lt; 0" in html


def test_generate_html_report(sample_report: Report) -> None:
    """Test writing the HTML report to a new directory."""
    with tempfile.TemporaryDirectory() as temp_dir:
        output_path = Path(temp_dir) / "reports" / "stability.html"
        result = ReportGenerator().generate_html_report(sample_report, output_path)

        assert result == output_path
        assert output_path.exists()
        content = output_path.read_text(encoding="utf-8")
        assert "<!DOCTYPE html>" in content
        assert "lower_bound_alpha" in content


def test_missing_template_raises(sample_report: Report) -> None:
    """Test that a missing template directory surfaces the Jinja2 error."""
    with tempfile.TemporaryDirectory() as temp_dir:
        generator = ReportGenerator(template_dir=temp_dir)
        with pytest.raises(TemplateNotFound, match="report.html"):
            generator.generate_html_report(sample_report, Path(temp_dir) / "out.html")
