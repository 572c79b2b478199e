"""Command-line interface for the Kerr Klein-Gordon stability lab."""

import csv
import logging
import math
from collections.abc import Callable
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import click
import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn
from rich.progress import MofNCompleteColumn
from rich.progress import Progress
from rich.progress import SpinnerColumn
from rich.progress import TextColumn
from rich.progress import TimeElapsedColumn
from rich.table import Table
from scipy import linalg

from .config import Config
from .config import get_default_config_path
from .evolution import EvolutionConfig
from .evolution import certify_bounds
from .evolution import conserved_series_check
from .evolution import evolve
from .evolution import growth_rate_estimate
from .evolution import write_trajectory_csv
from .exceptions import ConfigError
from .exceptions import EigenSolverError
from .exceptions import KerrStabilityError
from .kerr_geometry import KerrParams
from .kerr_geometry import ModeSpec
from .kerr_geometry import Point
from .kerr_geometry import connection_identity_residual
from .kerr_geometry import inclusion_spin_condition
from .kerr_geometry import killing_norm
from .kerr_geometry import metric_components
from .kerr_geometry import mu_bounds
from .kerr_geometry import positivity_identity_residual
from .kerr_geometry import potential_scale
from .kerr_geometry import potential_Vs
from .kerr_geometry import region_membership
from .kerr_geometry import sample_points
from .kerr_geometry import special_s
from .matrix_io import read_matrix
from .pencil import HermitianOperator
from .pencil import PencilSpectrum
from .pencil import QuadraticState
from .pencil import Stability
from .pencil import StabilityCertificate
from .pencil import best_shift
from .pencil import char_poly_coefficients
from .pencil import char_poly_value
from .pencil import commutator_norm
from .pencil import commutator_tolerance
from .pencil import commuting_stability
from .pencil import energy
from .pencil import example_stable
from .pencil import example_unstable
from .pencil import pencil_eigenvalues
from .pencil import root_residuals
from .pencil import stability_search
from .report_generator import Report
from .report_generator import ReportGenerator
from .rkg_discretization import DENSE_LIMIT
from .rkg_discretization import DiscretizedSystem
from .rkg_discretization import assemble
from .rkg_discretization import discrete_mass_threshold
from .rkg_discretization import min_eigenvalue_shifted
from .rkg_discretization import min_eigenvalue_with_b_squared
from .rkg_discretization import scan_mass_bounds
from .rkg_discretization import verify_mass_bound
from .sweeps import run_sweep

console = Console()
logger = logging.getLogger(__name__)

EXIT_FAILED = 1
EXIT_CONFIG = 2


def setup_logging(verbose: bool = False) -> None:
    """Set up logging with Rich formatting."""
    level = logging.DEBUG if verbose else logging.INFO

    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True)],
    )

    # Suppress noisy third-party loggers
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("numba").setLevel(logging.WARNING)


def common_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Attach the options shared by every analysis subcommand."""
    options = [
        click.option(
            "--config",
            "-c",
            type=click.Path(path_type=Path),
            help="Path to configuration file (default: platform-specific config directory)",
        ),
        click.option(
            "--out",
            "-o",
            type=click.Path(path_type=Path),
            help="Output directory (overrides config setting)",
        ),
        click.option("--seed", type=click.IntRange(min=0), help="Seed of the random samplers"),
        click.option(
            "--threads",
            "-j",
            type=click.IntRange(1, 64),
            help="Worker threads for parameter sweeps (overrides config setting)",
        ),
        click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load_config(
    config: Path | None, out: Path | None, seed: int | None, threads: int | None
) -> Config:
    """Load configuration and apply command-line overrides."""
    app_config = Config(config)
    if app_config.explicit:
        console.print(f"[green]✓[/green] Loaded configuration from {app_config.config_file}")
    if app_config.app_config:
        if out is not None:
            app_config.app_config.output.directory = str(out)
        if seed is not None:
            app_config.app_config.seed = seed
        if threads is not None:
            app_config.app_config.threads = threads
    return app_config


@contextmanager
def _command_errors(verbose: bool) -> Iterator[None]:
    """Map exceptions of a subcommand onto exit codes."""
    try:
        yield
    except (ConfigError, ValidationError, FileNotFoundError) as e:
        console.print(f"[red]Configuration error: {e}[/red]")
        raise SystemExit(EXIT_CONFIG) from e
    except KeyboardInterrupt:
        console.print("\n[yellow]Operation cancelled by user[/yellow]")
        raise click.Abort() from None
    except (click.Abort, click.ClickException):
        raise
    except KerrStabilityError as e:
        console.print(f"\n[red]Error: {e}[/red]")
        if verbose:
            console.print_exception()
        raise SystemExit(EXIT_FAILED) from e
    except Exception as e:
        console.print(f"\n[red]Error: {e}[/red]")
        if verbose:
            console.print_exception()
        raise click.Abort() from e


def _finish(report: Report, path: Path) -> None:
    """Write the report, show its checks and exit 1 if any check failed."""
    report.write_json(path)
    _display_checks(report)
    if not report.passed:
        for check in report.failed_checks:
            console.print(f"[red]✗ {check.name}: violated {check.criterion}[/red]")
        raise SystemExit(EXIT_FAILED)


def _display_checks(report: Report) -> None:
    """Display the checks of a report in a table."""
    table = Table(title=f"{report.command} checks")
    table.add_column("Check", style="cyan", no_wrap=True)
    table.add_column("Criterion")
    table.add_column("Value", justify="right", style="magenta")
    table.add_column("Tolerance", justify="right")
    table.add_column("Result", justify="center")

    for check in report.checks:
        value = format(check.value, ".6g") if isinstance(check.value, float) else str(check.value)
        tolerance = "-" if check.tolerance is None else format(check.tolerance, ".3g")
        result = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.name, check.criterion, value, tolerance, result)

    console.print(table)


@click.group()
@click.version_option()
def cli() -> None:
    """Stability lab for massive scalar fields on Kerr backgrounds.

    Evaluates the Kerr geometry entering the reduced Klein-Gordon equation,
    analyses finite-dimensional quadratic operator pencils, discretizes the
    reduced operator to check positivity at the improved mass bound, and
    integrates the second-order evolution with conserved-quantity tracking.

    Create a configuration file with: kerr-stability config generate
    """
    pass


@cli.command("geometry-map")
@common_options
def geometry_map(
    config: Path | None, out: Path | None, seed: int | None, threads: int | None, verbose: bool
) -> None:
    """Write Killing-field norms and region membership over an (r, theta) lattice."""
    setup_logging(verbose)

    with _command_errors(verbose):
        app_config = _load_config(config, out, seed, threads)
        p = app_config.get_kerr_params()
        mode = app_config.get_mode()
        gm = app_config.get_geometry_map_config()
        s = gm.s if gm.s is not None else special_s(p)
        out_dir = app_config.get_output_dir()
        out_dir.mkdir(parents=True, exist_ok=True)

        report = Report(
            command="geometry-map",
            inputs={"M": p.M, "a": p.a, "m": mode.m, "mu": mode.mu, "s": s, "seed": app_config.get_seed()},
        )

        r = p.r_plus + (gm.r_max * p.M - p.r_plus) * np.arange(1, gm.nr + 1) / gm.nr
        theta = (np.arange(gm.ntheta) + 0.5) * math.pi / gm.ntheta
        rr, tt = np.meshgrid(r, theta, indexing="ij")
        lattice = Point(r=rr.ravel(), theta=tt.ravel())

        with report.timed("lattice"):
            g_tt = np.atleast_1d(metric_components(p, lattice).g_tt)
            norm = np.atleast_1d(killing_norm(p, s, lattice).direct)
            regions = region_membership(p, lattice)
            in_ergo = np.atleast_1d(regions.in_ergoregion)
            in_e2 = np.atleast_1d(regions.in_omega_e2)

        csv_path = out_dir / "geometry_map.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["r", "theta", "g_tt", "killing_norm", "in_ergoregion", "in_omega_e2"])
            for k in range(lattice.r.size):
                writer.writerow(
                    [
                        format(float(lattice.r[k]), ".17g"),
                        format(float(lattice.theta[k]), ".17g"),
                        format(float(g_tt[k]), ".17g"),
                        format(float(norm[k]), ".17g"),
                        "true" if in_ergo[k] else "false",
                        "true" if in_e2[k] else "false",
                    ]
                )
        console.print(f"[green]✓[/green] Wrote {lattice.r.size} lattice points to {csv_path}")

        inclusion = inclusion_spin_condition(p)
        report.results.update(
            {
                "ergoregion_points": int(np.count_nonzero(in_ergo)),
                "omega_e2_points": int(np.count_nonzero(in_e2)),
                "inclusion_simple": inclusion.simple,
                "inclusion_sharp": inclusion.sharp,
            }
        )
        if inclusion.simple or inclusion.sharp:
            report.add_check(
                "ergoregion_inclusion",
                "in_ergoregion implies in_omega_e2 on the lattice",
                bool(np.all(in_e2[in_ergo])),
                value=int(np.count_nonzero(in_ergo & ~in_e2)),
                tolerance=0.0,
            )

        if gm.samples > 0:
            rng = np.random.default_rng(app_config.get_seed())
            pts = sample_points(p, gm.samples, rng, r_max=gm.r_max * p.M)
            with report.timed("identities"):
                _identity_checks(report, p, mode, s, pts)

        _finish(report, out_dir / "geometry_map_report.json")


def _identity_checks(report: Report, p: KerrParams, mode: ModeSpec, s: float, pts: Point) -> None:
    """Add the algebraic identity checks on sampled points to ``report``."""
    pos = positivity_identity_residual(p, mode.m, pts)
    worst = float(np.max(np.asarray(pos.value) / np.asarray(pos.scale)))
    report.add_check(
        "positivity_identity",
        "|lhs - rhs| <= 1e-10 * scale",
        worst <= 1e-10,
        value=worst,
        tolerance=1e-10,
    )
    report.add_check(
        "positivity_identity_sign",
        "lhs >= 0 at every sample",
        bool(np.all(np.asarray(pos.lhs) >= 0.0)),
        value=float(np.min(pos.lhs)),
        tolerance=0.0,
    )

    conn = connection_identity_residual(p, mode, s, pts)
    worst = float(np.max(np.asarray(conn.value) / np.asarray(conn.scale)))
    report.add_check(
        "connection_identity",
        "|coefficient - (m^2 g(xi, xi) + mu^2 rho) / (-g_phph)| <= 1e-10 * scale",
        worst <= 1e-10,
        value=worst,
        tolerance=1e-10,
    )

    vs = potential_Vs(p, mode, s, pts)
    scale = np.asarray(potential_scale(p, mode, s, pts))
    worst = float(np.max(np.abs(np.asarray(vs.form1) - np.asarray(vs.form2)) / scale))
    report.add_check(
        "potential_forms",
        "|V_s form1 - (V_s1 + V_s2)| <= 1e-10 * scale",
        worst <= 1e-10,
        value=worst,
        tolerance=1e-10,
    )


def _load_pencil(app_config: Config) -> tuple[str, HermitianOperator, HermitianOperator]:
    pc = app_config.get_pencil_config()
    if pc.atil_file and pc.b_file:
        atil = HermitianOperator(read_matrix(pc.atil_file, square=True))
        b = HermitianOperator(read_matrix(pc.b_file, square=True))
        return f"{pc.atil_file}, {pc.b_file}", atil, b
    if pc.example == "unstable":
        return "example_unstable", *example_unstable()
    return "example_stable", *example_stable()


def _spectrum_results(spectrum: PencilSpectrum) -> dict[str, Any]:
    return {
        "eigenvalues": [[float(z.real), float(z.imag)] for z in spectrum.eigenvalues],
        "classification": spectrum.classification.value,
        "growth_rate": spectrum.growth_rate,
        "real_eigenvalue_count": int(spectrum.real_eigenvalues.size),
    }


def _display_spectrum(title: str, spectrum: PencilSpectrum) -> None:
    """Display pencil roots in a table."""
    table = Table(title=title)
    table.add_column("#", justify="right", style="dim")
    table.add_column("Re λ", justify="right", style="cyan")
    table.add_column("Im λ", justify="right", style="magenta")
    table.add_column("Mode", justify="center")

    for k, lam in enumerate(spectrum.eigenvalues):
        growing = -lam.imag > spectrum.tol_imag
        kind = "[red]growing[/red]" if growing else (
            "oscillating" if abs(lam.imag) <= spectrum.tol_imag else "decaying"
        )
        table.add_row(str(k + 1), f"{lam.real:.10g}", f"{lam.imag:.10g}", kind)

    table.add_section()
    table.add_row("", "[bold]classification[/bold]", f"[bold]{spectrum.classification.value}[/bold]", "")
    table.add_row("", "growth rate", f"{spectrum.growth_rate:.6g}", "")
    console.print(table)


@cli.command()
@common_options
def pencil(
    config: Path | None, out: Path | None, seed: int | None, threads: int | None, verbose: bool
) -> None:
    """Compute the roots of a quadratic pencil and scan for a stability certificate."""
    setup_logging(verbose)

    with _command_errors(verbose):
        app_config = _load_config(config, out, seed, threads)
        source, atil, b = _load_pencil(app_config)
        s_grid = app_config.get_s_grid()

        report = Report(command="pencil", inputs={"source": source, "n": atil.n})
        with report.timed("eigenvalues"):
            spectrum = pencil_eigenvalues(atil, b)
        with report.timed("stability_search"):
            cert = stability_search(atil, b, s_grid, threads=app_config.get_threads())

        report.results.update(_spectrum_results(spectrum))
        report.results.update(
            {
                "best_s": cert.best_s,
                "min_eig_at_best": cert.min_eig_at_best,
                "certificate": cert.certificate,
                "commutator_norm": commutator_norm(atil, b),
                "commuting_criterion": commuting_stability(atil, b),
            }
        )
        if atil.n <= 6:
            coeffs = np.real_if_close(char_poly_coefficients(atil, b))
            report.results["char_poly"] = [float(np.real(c)) for c in coeffs]
            worst = float(np.max(root_residuals(atil, b, spectrum.eigenvalues)))
            report.add_check(
                "root_residual",
                "|det(Atil - lam B - lam^2)| <= 1e-6 * coefficient scale",
                worst <= 1e-6,
                value=worst,
                tolerance=1e-6,
            )
        report.add_check(
            "certificate_consistency",
            "shift certificate implies Stable classification",
            (not cert.certificate) or spectrum.classification is Stability.STABLE,
            value=cert.certificate,
            tolerance=spectrum.tol_imag,
        )

        _display_spectrum(f"Pencil roots ({source})", spectrum)
        out_dir = app_config.get_output_dir()
        _finish(report, out_dir / "pencil_spectrum.json")


@cli.command("evolve")
@common_options
def evolve_command(
    config: Path | None, out: Path | None, seed: int | None, threads: int | None, verbose: bool
) -> None:
    """Integrate u'' + iBu' + Atil u = 0 and write the trajectory as CSV."""
    setup_logging(verbose)

    with _command_errors(verbose):
        app_config = _load_config(config, out, seed, threads)
        ev = app_config.get_evolution_section()
        cfg = app_config.get_evolution_config()

        weight = None
        drift_tol = 1e-8
        if ev.system == "discretized":
            p = app_config.get_kerr_params()
            sys = assemble(p, app_config.get_mode(), app_config.get_grid(p))
            atil_op: Any = sys.A_h
            b_op: Any = sys.B_h
            weight = sys.W
            gamma = min_eigenvalue_shifted(sys, 0.0)
            drift_tol = 1e-6
        else:
            if ev.system == "files":
                atil = HermitianOperator(read_matrix(str(ev.atil_file), square=True))
                b = HermitianOperator(read_matrix(str(ev.b_file), square=True))
            elif ev.system == "example_unstable":
                atil, b = example_unstable()
            else:
                atil, b = example_stable()
            atil_op, b_op = atil.entries, b.entries
            gamma = float(linalg.eigvalsh(atil.entries)[0])

        n = atil_op.shape[0]
        rng = np.random.default_rng(app_config.get_seed())
        u0 = np.asarray(ev.u0, dtype=float) if ev.u0 is not None else rng.standard_normal(n)
        du0 = np.asarray(ev.du0, dtype=float) if ev.du0 is not None else np.zeros(n)
        if u0.size != n or du0.size != n:
            raise ConfigError(f"Invalid configuration: initial data must have length {n}")

        report = Report(
            command="evolve",
            inputs={
                "system": ev.system,
                "n": int(n),
                "dt": cfg.dt,
                "T": cfg.T,
                "record_every": cfg.record_every,
                "s_list": list(cfg.s_list),
                "seed": app_config.get_seed(),
            },
        )
        with report.timed("evolve"):
            traj = evolve(atil_op, b_op, weight, QuadraticState(u=u0, du=du0), cfg)

        out_dir = app_config.get_output_dir()
        out_dir.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(traj, out_dir / "trajectory.csv")

        drift = conserved_series_check(traj)
        report.add_check(
            "energy_conservation",
            "max |E_u(t) - E_u(0)| / |E_u(0)| <= tol",
            drift.max_rel_drift_E <= drift_tol,
            value=drift.max_rel_drift_E,
            tolerance=drift_tol,
        )
        if cfg.s_list:
            report.add_check(
                "shifted_energy_conservation",
                "max relative drift of E_{s,u} <= tol",
                drift.max_rel_drift_Es <= drift_tol,
                value=drift.max_rel_drift_Es,
                tolerance=drift_tol,
            )
        with report.timed("certify_bounds"):
            certified = certify_bounds(traj, gamma)
        report.add_check(
            "energy_bound",
            "||u(t2)|| <= Gronwall bound from ||u(t1)|| for all recorded t1 <= t2",
            certified,
            value=gamma,
            tolerance=1e-9,
        )

        report.results.update(
            {
                "gamma": gamma,
                "initial_energy": float(traj.energies[0]),
                "final_norm": float(traj.norms[-1]),
                "max_norm": float(np.max(traj.norms)),
            }
        )
        if len(traj) >= 4:
            report.results["growth_rate_estimate"] = growth_rate_estimate(traj, 0.5)

        console.print(
            Panel(
                f"[green]✓ Evolved {len(traj)} snapshots to T={cfg.T}[/green]\n\n"
                f"E_u(0) = {traj.energies[0]:.10g}\n"
                f"max ||u|| = {np.max(traj.norms):.6g}\n"
                f"Trajectory: {out_dir / 'trajectory.csv'}",
                title="Evolution Complete",
                border_style="green",
            )
        )
        _finish(report, out_dir / "evolve_report.json")


@cli.command()
@common_options
@click.option(
    "--html",
    type=click.Path(path_type=Path),
    help="Also render the report as HTML to this path",
)
def stability(
    config: Path | None,
    out: Path | None,
    seed: int | None,
    threads: int | None,
    verbose: bool,
    html: Path | None,
) -> None:
    """Check discrete positivity at the improved mass bound and scan shifts."""
    setup_logging(verbose)

    with _command_errors(verbose):
        app_config = _load_config(config, out, seed, threads)
        p = app_config.get_kerr_params()
        mode = app_config.get_mode()
        grid = app_config.get_grid(p)
        st = app_config.get_stability_config()
        n_threads = app_config.get_threads()
        m = mode.m

        bounds = mu_bounds(p, m)
        shift = m * special_s(p)
        report = Report(
            command="stability",
            inputs={
                "M": p.M,
                "a": p.a,
                "m": m,
                "mu": mode.mu,
                "Nr": grid.Nr,
                "Ntheta": grid.Ntheta,
                "r_min": grid.r_min,
                "r_max": grid.r_max,
            },
        )
        report.results.update(
            {
                "mu_old": bounds.mu_old,
                "mu_new": bounds.mu_new,
                "alpha": bounds.alpha,
                "special_s": special_s(p),
            }
        )

        with report.timed("verify_mass_bound"):
            positivity = verify_mass_bound(p, m, grid)
        report.results["min_eigenvalue_at_mu_new"] = positivity.min_eigenvalue
        report.add_check(
            "mass_bound_positivity",
            "min eig(A_h + s B_h - s^2) >= -tol at mu = mu_new, s = m * special_s",
            positivity.passed,
            value=positivity.min_eigenvalue,
            tolerance=positivity.tolerance,
        )

        with report.timed("lower_bounds"):
            sys = assemble(p, mode, grid)
            lowest = min_eigenvalue_shifted(sys, 0.0)
            with_b = min_eigenvalue_with_b_squared(sys)
            scale_tol = 1e-8 * sys.stiffness_scale()
        report.add_check(
            "lower_bound_alpha",
            "min eig(A_h) >= alpha - 1e-6",
            lowest >= bounds.alpha - 1e-6,
            value=lowest,
            tolerance=1e-6,
        )
        report.add_check(
            "b_squared_positivity",
            "min eig(A_h + B_h^2 / 4) >= -1e-8 * scale",
            with_b >= -scale_tol,
            value=with_b,
            tolerance=scale_tol,
        )

        with report.timed("stability_search"):
            s_grid = np.unique(np.append(app_config.get_s_grid(), shift))
            cert = _shift_scan(assemble(p, ModeSpec(m=m, mu=bounds.mu_new), grid), s_grid, n_threads)
        report.results.update(
            {"best_s": cert.best_s, "min_eig_at_best": cert.min_eig_at_best, "certificate": cert.certificate}
        )
        report.add_check(
            "shift_certificate",
            "max over s of min eig(A_h + s B_h - s^2) >= -tol at mu = mu_new",
            cert.min_eig_at_best >= -positivity.tolerance,
            value=cert.min_eig_at_best,
            tolerance=positivity.tolerance,
        )

        if st.threshold:
            with report.timed("mass_threshold"):
                threshold = discrete_mass_threshold(p, m, grid)
            report.results["discrete_mass_threshold"] = threshold
            report.add_check(
                "mass_threshold",
                "discrete threshold <= mu_new + 1e-8",
                threshold <= bounds.mu_new + 1e-8,
                value=threshold,
                tolerance=1e-8,
            )

        if st.sweep_a and st.sweep_m:
            _run_sweep_checks(report, app_config, p, st.sweep_a, st.sweep_m, n_threads)

        out_dir = app_config.get_output_dir()
        if html is not None:
            ReportGenerator().generate_html_report(report, html)
            console.print(f"[green]✓[/green] HTML report: {html}")
        _finish(report, out_dir / "stability_report.json")


def _shift_scan(
    sys: DiscretizedSystem, s_grid: np.ndarray, n_threads: int
) -> StabilityCertificate:
    """Scan shifts of a discretized system, densely when it is small enough."""
    if sys.n <= DENSE_LIMIT:
        scaled = sys.scaled_operator(0.0).toarray()
        return stability_search(
            0.5 * (scaled + scaled.T), np.diag(sys.b), s_grid, threads=n_threads
        )

    outcomes = run_sweep(
        lambda s: min_eigenvalue_shifted(sys, s), [float(s) for s in s_grid], threads=n_threads
    )
    failed = [outcome for outcome in outcomes if not outcome.ok]
    if failed:
        raise EigenSolverError(f"Eigen-solve failed for s={failed[0].item}", {"n": sys.n})
    return best_shift(s_grid, [outcome.result for outcome in outcomes])


def _run_sweep_checks(
    report: Report,
    app_config: Config,
    p: KerrParams,
    spins: list[float],
    modes: list[int],
    n_threads: int,
) -> None:
    """Run the mass-bound sweep over (a, m) with a progress bar."""
    grid_cfg = app_config.app.grid
    params = [KerrParams(M=p.M, a=a) for a in spins]
    total = len(params) * len(modes)

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(bar_width=None),
        MofNCompleteColumn(),
        "•",
        TimeElapsedColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("Mass bound sweep", total=total)

        def update_progress(completed: int, description: str) -> None:
            progress.update(task, completed=completed, description=description)

        with report.timed("sweep"):
            results = scan_mass_bounds(
                params,
                modes,
                grid_cfg.Nr,
                grid_cfg.Ntheta,
                grid_cfg.eps_h,
                grid_cfg.r_max,
                threads=n_threads,
                progress_callback=update_progress,
            )

    pairs = [(q, m) for q in params for m in modes]
    for (q, m), result in zip(pairs, results, strict=True):
        name = f"mass_bound[a={q.a:g},m={m}]"
        criterion = "min eig(A_h + s B_h - s^2) >= -tol at mu = mu_new"
        if result is None:
            report.add_check(name, criterion, False, value="error")
        else:
            report.add_check(
                name, criterion, result.passed, value=result.min_eigenvalue, tolerance=result.tolerance
            )


@cli.command("demo-examples")
@common_options
def demo_examples(
    config: Path | None, out: Path | None, seed: int | None, threads: int | None, verbose: bool
) -> None:
    """Reproduce both 2x2 pencil examples end to end and print a pass/fail table."""
    setup_logging(verbose)

    with _command_errors(verbose):
        app_config = _load_config(config, out, seed, threads)
        report = Report(command="demo-examples")
        rows: list[list[str]] = []

        with report.timed("example_stable"):
            rows.append(_demo_stable(report))
        with report.timed("example_unstable"):
            rows.append(_demo_unstable(report))

        table = Table(title="Pencil examples")
        table.add_column("Example", style="cyan", no_wrap=True)
        table.add_column("Classification")
        table.add_column("Real roots", justify="right")
        table.add_column("Growth (pencil)", justify="right")
        table.add_column("Growth (fit)", justify="right")
        table.add_column("Evolution")
        table.add_column("Checks", justify="center")
        for row in rows:
            table.add_row(*row)
        console.print(table)

        out_dir = app_config.get_output_dir()
        _finish(report, out_dir / "demo_report.json")


def _positive_definite_check(report: Report, name: str, criterion: str, matrix: np.ndarray) -> None:
    lowest = float(linalg.eigvalsh(matrix)[0])
    report.add_check(name, criterion, lowest > 0.0, value=lowest, tolerance=0.0)


def _non_commuting_check(
    report: Report, name: str, atil: HermitianOperator, b: HermitianOperator
) -> None:
    report.add_check(
        name,
        "commuting-case criterion does not apply",
        not commuting_stability(atil, b),
        value=commutator_norm(atil, b),
        tolerance=commutator_tolerance(atil, b),
    )


def _demo_stable(report: Report) -> list[str]:
    """Negative energy, yet four real roots and bounded evolution."""
    atil, b = example_stable()
    spectrum = pencil_eigenvalues(atil, b)
    real = spectrum.real_eigenvalues
    intervals = [(-5.0, -4.0), (-4.0, -1.0), (-1.0, 0.0), (0.0, 1.0)]
    first = len(report.checks)

    report.add_check(
        "stable.real_roots",
        "4 real roots, one in each of (-5,-4), (-4,-1), (-1,0), (0,1)",
        real.size == 4 and all(lo < x < hi for x, (lo, hi) in zip(real, intervals, strict=False)),
        value=int(real.size),
        tolerance=spectrum.tol_imag,
    )
    _positive_definite_check(report, "stable.B_positive", "B > 0", b.entries)
    _positive_definite_check(
        report,
        "stable.A_plus_B2_positive",
        "Atil + B^2/4 > 0",
        atil.entries + b.entries @ b.entries / 4.0,
    )
    _non_commuting_check(report, "stable.non_commuting", atil, b)

    state = QuadraticState(u=[0.0, 1.0], du=[0.0, 0.0])
    e0 = energy(atil, state)
    report.add_check(
        "stable.negative_energy",
        "E_u = -1 for u = (0, 1), u' = 0",
        abs(e0 + 1.0) <= 1e-12,
        value=e0,
        tolerance=1e-12,
    )

    cfg = EvolutionConfig(dt=1e-3, T=200.0, record_every=10, s_list=[0.7])
    traj = evolve(atil.entries, b.entries, None, state, cfg)
    ratio = float(np.max(traj.norms) / traj.norms[0])
    fit = growth_rate_estimate(traj, 1.0)
    drift = conserved_series_check(traj)
    report.add_check(
        "stable.bounded_evolution",
        "log-norm slope below 1e-3 and sup ||u(t)|| / ||u(0)|| <= 50",
        fit == 0.0 and ratio <= 50.0,
        value=fit,
        tolerance=1e-3,
    )
    report.add_check(
        "stable.energy_conservation",
        "relative drift of E_u and E_{0.7,u} <= 1e-8",
        max(drift.max_rel_drift_E, drift.max_rel_drift_Es) <= 1e-8,
        value=max(drift.max_rel_drift_E, drift.max_rel_drift_Es),
        tolerance=1e-8,
    )
    report.results["example_stable"] = {
        **_spectrum_results(spectrum),
        "energy": e0,
        "char_poly": [float(c) for c in char_poly_coefficients(atil, b)],
        "max_norm_ratio": ratio,
    }

    ok = all(check.passed for check in report.checks[first:])
    return [
        "example_stable",
        spectrum.classification.value,
        str(real.size),
        f"{spectrum.growth_rate:.3g}",
        f"{fit:.3g}",
        "bounded" if fit == 0.0 else "growing",
        "[green]pass[/green]" if ok else "[red]FAIL[/red]",
    ]


def _demo_unstable(report: Report) -> list[str]:
    """Positive Atil + B^2/4, yet a growing mode."""
    atil, b = example_unstable()
    spectrum = pencil_eigenvalues(atil, b)
    real = spectrum.real_eigenvalues
    nonreal = spectrum.nonreal_eigenvalues
    first = len(report.checks)

    report.add_check(
        "unstable.roots",
        "2 real roots in (-4,-3) and (0,1) plus a nonreal conjugate pair",
        real.size == 2
        and -4.0 < real[0] < -3.0
        and 0.0 < real[1] < 1.0
        and nonreal.size == 2
        and abs(nonreal[0] - np.conj(nonreal[1])) <= spectrum.tol_imag,
        value=int(nonreal.size),
        tolerance=spectrum.tol_imag,
    )
    witness = (-69.0 + math.sqrt(1329.0)) / 40.0
    p_witness = char_poly_value(atil, b, witness).real
    report.add_check(
        "unstable.char_poly_witness",
        "p((-69 + sqrt(1329)) / 40) < 0",
        p_witness < 0.0,
        value=p_witness,
        tolerance=0.0,
    )
    _positive_definite_check(
        report,
        "unstable.A_plus_B2_positive",
        "Atil + B^2/4 > 0",
        atil.entries + b.entries @ b.entries / 4.0,
    )
    _non_commuting_check(report, "unstable.non_commuting", atil, b)
    cert = stability_search(atil, b, np.linspace(-5.0, 5.0, 401))
    report.add_check(
        "unstable.no_certificate",
        "no s in 401 points of [-5, 5] makes Atil + sB - s^2 nonnegative",
        not cert.certificate,
        value=cert.min_eig_at_best,
        tolerance=0.0,
    )

    state = QuadraticState(u=[1.0, 0.5], du=[0.3, -0.2])
    cfg = EvolutionConfig(dt=1e-3, T=60.0, record_every=10)
    traj = evolve(atil.entries, b.entries, None, state, cfg)
    fit = growth_rate_estimate(traj, 0.5)
    rel = abs(fit - spectrum.growth_rate) / spectrum.growth_rate if spectrum.growth_rate else math.inf
    report.add_check(
        "unstable.growth_matched",
        "fitted log-norm slope within 5% of the pencil growth rate",
        rel <= 0.05,
        value=fit,
        tolerance=0.05,
    )
    report.results["example_unstable"] = {
        **_spectrum_results(spectrum),
        "growth_rate_fit": fit,
        "char_poly": [float(c) for c in char_poly_coefficients(atil, b)],
    }

    ok = all(check.passed for check in report.checks[first:])
    return [
        "example_unstable",
        spectrum.classification.value,
        str(real.size),
        f"{spectrum.growth_rate:.3g}",
        f"{fit:.3g}",
        "growth matched" if rel <= 0.05 else "mismatch",
        "[green]pass[/green]" if ok else "[red]FAIL[/red]",
    ]


@cli.group()
def config() -> None:
    """Manage configuration files."""
    pass


@config.command()
@click.option(
    "--output",
    "-o",
    type=click.Path(path_type=Path),
    help="Output path for configuration file (default: platform-specific config directory)",
)
@click.option("--force", is_flag=True, help="Overwrite existing configuration file")
def generate(output: Path | None, force: bool) -> None:
    """Generate a configuration file with every option at its default."""
    output_path = Path(output) if output else get_default_config_path()

    if output_path.exists() and not force:
        console.print(f"[red]Configuration file already exists at {output_path}[/red]")
        console.print(
            "[yellow]Use --force to overwrite or specify a different --output path[/yellow]"
        )
        raise click.Abort()

    try:
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", encoding="utf-8") as f:
            f.write(_generate_config_template())

        console.print(
            f"[green]✓ Configuration file created: {output_path.absolute()}[/green]"
        )
        console.print("\n[yellow]Next steps:[/yellow]")
        console.print("1. Review the Kerr parameters, mode and grid")
        console.print(
            f"2. Reproduce the pencil examples: [cyan]kerr-stability demo-examples -c {output_path}[/cyan]"
        )
        console.print(
            f"3. Check the mass bound: [cyan]kerr-stability stability -c {output_path}[/cyan]"
        )

    except Exception as e:
        console.print(f"[red]Error creating configuration file: {e}[/red]")
        raise click.Abort() from e


def _generate_config_template() -> str:
    """Generate configuration file template content."""
    return """# Kerr stability lab configuration
# Radii are given in units of the mass M.

# Black-hole parameters (0 <= a <= M)
kerr:
  M: 1.0
  a: 0.5

# Azimuthal mode number and field mass of the reduced equation
mode:
  m: 1
  mu: 0.0

# Truncated (r, theta) grid: r_min = r_plus + eps_h * M, r_max * M outer cutoff
grid:
  Nr: 40
  Ntheta: 20
  eps_h: 0.001
  r_max: 20.0

# Time integration (evolve subcommand)
evolution:
  # example_stable | example_unstable | discretized | files
  system: example_stable
  # atil_file: atil.txt
  # b_file: b.txt
  # Initial data; u0 is drawn from the seeded generator when omitted
  # u0: [0.0, 1.0]
  # du0: [0.0, 0.0]
  dt: 0.001
  T: 10.0
  record_every: 10
  # Shifts s whose energies E_{s,u} are tracked
  s_list: []

# Shift scan and mass-bound sweep (stability and pencil subcommands)
stability:
  s_min: -1.0
  s_max: 1.0
  s_points: 41
  # Sweep verify_mass_bound over these spins and modes (both lists non-empty)
  sweep_a: []
  sweep_m: []
  # Also locate the discrete mass threshold by root bracketing
  threshold: false

# Lattice of the geometry-map subcommand
geometry_map:
  nr: 50
  ntheta: 25
  r_max: 10.0
  # Killing shift; the horizon angular velocity when omitted
  # s: 0.1
  # Random points used for the algebraic identity checks
  samples: 0

# Pencil input: a built-in example or two matrix files
pencil:
  example: stable
  # atil_file: atil.txt
  # b_file: b.txt

output:
  directory: kerr_stability_output

seed: 0
threads: 1
"""


if __name__ == "__main__":
    cli()
