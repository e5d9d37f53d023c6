"""Pipeline orchestration and the ``reconstruct`` command line tool.

Flow: load target -> pick truncation degree -> build minimal-norm source
density h -> regularize into a bounded potential q_delta -> verify with the
independent forward solver -> report pass/fail against the requested
pattern tolerance.  All artifacts are plain-text and byte-reproducible
(fixed summation orders, no timestamps).

Exit codes: 0 pass, 2 residual above epsilon, 3 configuration error,
4 forward solver did not converge.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import forward, reconstruction, sht, synthesis
from .quadrature import (BallField, make_ball_grid, make_radial_rule,
                         make_sphere_rule, norm_s2, save_field)
from .specfun import UnitVector, sph_harm_samples


class ConfigError(Exception):
    """Invalid configuration; carries every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class PipelineError(Exception):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass
class ScatteringConfig:
    k: float = 1.0
    alpha: UnitVector = field(default_factory=lambda: UnitVector(0.0, 0.0))
    R: float = 1.0
    epsilon: float = 0.05
    L_max: int = 8
    delta: float | str = "auto"
    n_radial: int = 24
    sphere_degree: int | None = None   # default 2*L_max + 4
    solver_tol: float = 1e-8
    solver_maxiter: int = 500
    target: str = "preset:Y00"
    output_dir: str = "out"

    def resolved_degree(self) -> int:
        return self.sphere_degree if self.sphere_degree is not None else 2 * self.L_max + 4


_CONFIG_KEYS = {"k", "alpha", "R", "epsilon", "L_max", "delta", "n_radial",
                "sphere_degree", "solver_tol", "solver_maxiter", "target",
                "output_dir"}

PRESETS = ("Y00", "Y21", "gaussian-cap")


def _parse_value(key, raw, lineno, errors):
    try:
        if key in ("k", "R", "epsilon", "solver_tol"):
            return float(raw)
        if key in ("L_max", "n_radial", "sphere_degree", "solver_maxiter"):
            return int(raw)
        if key == "delta":
            return "auto" if raw.strip().lower() == "auto" else float(raw)
        if key == "alpha":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 3:
                raise ValueError("need a comma triple")
            return UnitVector.from_xyz(parts)
        return raw.strip()
    except (ValueError, ZeroDivisionError) as err:
        errors.append(f"line {lineno}: key '{key}': {err}")
        return None


def load_config(path) -> ScatteringConfig:
    """Parse a ``key = value`` config file, reporting every violation at once."""
    path = Path(path)
    errors: list[str] = []
    seen: dict[str, object] = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as err:
        raise ConfigError([f"cannot read config: {err}"]) from err
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _CONFIG_KEYS:
            errors.append(f"line {lineno}: unknown key '{key}'")
            continue
        val = _parse_value(key, raw, lineno, errors)
        if val is not None:
            seen[key] = val

    # semantic checks run on whatever parsed, so one pass reports everything
    cfg = ScatteringConfig(**seen)
    if cfg.k <= 0:
        errors.append("key 'k': must be > 0")
    if cfg.R <= 0:
        errors.append("key 'R': must be > 0")
    if cfg.epsilon <= 0:
        errors.append("key 'epsilon': must be > 0")
    if cfg.L_max < 0:
        errors.append("key 'L_max': must be >= 0")
    if cfg.n_radial < 1:
        errors.append("key 'n_radial': must be >= 1")
    if cfg.solver_tol <= 0:
        errors.append("key 'solver_tol': must be > 0")
    if cfg.solver_maxiter < 1:
        errors.append("key 'solver_maxiter': must be >= 1")
    if isinstance(cfg.delta, float) and cfg.delta <= 0:
        errors.append("key 'delta': must be > 0 or 'auto'")
    if cfg.resolved_degree() < 2 * cfg.L_max:
        errors.append(
            f"key 'sphere_degree': {cfg.resolved_degree()} < 2*L_max = {2 * cfg.L_max}")
    if not (cfg.target.startswith("preset:") or cfg.target.startswith("coeffs:")):
        errors.append("key 'target': must be 'preset:<name>' or 'coeffs:<path>'")
    elif cfg.target.startswith("preset:") and cfg.target[7:] not in PRESETS:
        errors.append(
            f"key 'target': unknown preset '{cfg.target[7:]}' (have {', '.join(PRESETS)})")
    if errors:
        raise ConfigError(errors)
    return cfg


def target_samples(cfg: ScatteringConfig, rule) -> np.ndarray:
    """Evaluate the requested target pattern on the rule's nodes."""
    kind, _, spec = cfg.target.partition(":")
    if kind == "preset":
        if spec == "Y00":
            return sph_harm_samples(0, 0, rule.theta, rule.phi)
        if spec == "Y21":
            return sph_harm_samples(2, 1, rule.theta, rule.phi)
        if spec == "gaussian-cap":
            return np.exp(-2.0 * (1.0 - np.cos(rule.theta))).astype(complex)
        raise ConfigError([f"unknown preset '{spec}'"])
    coeffs = sht.load_coefficients(spec)
    if coeffs.L > rule.exact_degree:
        raise ConfigError(
            [f"coefficient file degree L={coeffs.L} exceeds rule degree {rule.exact_degree}"])
    return sht.synthesize(coeffs, rule)


@dataclass
class ReconstructionReport:
    """Everything the pipeline measured, plus the pass/fail verdict."""

    L: int
    tail_norm: float
    tail_target: float
    tail_attained: bool
    synthesis_residual: float
    delta: float
    zero_fraction: float
    n_excised: int
    min_abs_u: float
    max_im_q: float
    im_q_nonpositive: bool
    solver: forward.SolveStats
    final_residual: float
    epsilon: float
    passed: bool
    target_norm: float
    delta_sweep: list = field(default_factory=list)


def _format_report(report: ReconstructionReport) -> str:
    lines = [
        "reconstruction report",
        f"chosen_L = {report.L}",
        f"tail_norm = {report.tail_norm:.16e}",
        f"tail_target = {report.tail_target:.16e}",
        f"tail_attained = {report.tail_attained}",
        f"synthesis_residual = {report.synthesis_residual:.16e}",
        f"delta = {report.delta:.16e}",
        f"zero_set_fraction = {report.zero_fraction:.16e}",
        f"zero_set_nodes = {report.n_excised}",
        f"min_abs_u = {report.min_abs_u:.16e}",
        f"max_im_q_delta = {report.max_im_q:.16e}",
        f"im_q_nonpositive = {report.im_q_nonpositive}",
        f"solver_iterations = {report.solver.iterations}",
        f"solver_residual = {report.solver.final_residual:.16e}",
        f"solver_converged = {report.solver.converged}",
        f"target_norm = {report.target_norm:.16e}",
        f"final_residual = {report.final_residual:.16e}",
        f"epsilon = {report.epsilon:.16e}",
        f"passed = {report.passed}",
    ]
    if report.delta_sweep:
        lines.append("delta_sweep: delta residual zero_fraction")
        for d, res, frac in report.delta_sweep:
            lines.append(f"  {d:.16e} {res:.16e} {frac:.16e}")
    return "\n".join(lines) + "\n"


def export_report(report: ReconstructionReport, outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "report.txt"
    path.write_text(_format_report(report))
    return path


def _export_amplitude(path, rule, amplitude, target, residual):
    with open(path, "w") as f:
        f.write("# columns: theta phi reA imA reF imF\n")
        for t, p, a, g in zip(rule.theta, rule.phi, amplitude, target):
            f.write(f"{t:.16e} {p:.16e} {a.real:.16e} {a.imag:.16e} "
                    f"{g.real:.16e} {g.imag:.16e}\n")
        f.write(f"# residual_norm = {residual:.16e}\n")


def run_pipeline(cfg: ScatteringConfig, delta_sweep=(), export_fields=False,
                 verify_tail=False) -> ReconstructionReport:
    """Execute the full design-verify pipeline and write all artifacts."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    stage = "setup"
    try:
        radial = make_radial_rule(cfg.n_radial, cfg.R)
        rule = make_sphere_rule(cfg.resolved_degree())
        grid = make_ball_grid(radial, rule)

        stage = "target"
        f_samples = target_samples(cfg, rule)
        target_norm = norm_s2(rule, f_samples)

        stage = "truncation"
        choice = sht.choose_L(rule, f_samples, cfg.epsilon, cfg.L_max)
        if verify_tail:
            fine_rule = make_sphere_rule(cfg.resolved_degree() + 8)
            fine_f = target_samples(cfg, fine_rule)
            fine = sht.choose_L(fine_rule, fine_f, cfg.epsilon, cfg.L_max)
            if fine.L > choice.L:
                choice = sht.TruncationChoice(fine.L, fine.tail_norm, fine.attained)
        coeffs = sht.analyze(rule, f_samples, choice.L)

        stage = "synthesis"
        profiles = synthesis.radial_profiles(coeffs, cfg.k, radial)
        h = synthesis.assemble_h(profiles, grid)
        a_h = synthesis.amplitude_from_h(h, cfg.k, rule)
        f_l = sht.synthesize(coeffs, rule)
        synthesis_residual = norm_s2(rule, a_h - f_l)

        stage = "regularization"
        delta = (reconstruction.default_delta(h) if cfg.delta == "auto"
                 else float(cfg.delta))
        reg = reconstruction.regularize(h, cfg.k, cfg.alpha, delta)
        max_im_q = float(np.max(reg.q_delta.values.imag)) if grid.n else 0.0

        stage = "forward solve"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            u_solved, stats = forward.solve_scattering(
                reg.q_delta, cfg.k, cfg.alpha,
                tol=cfg.solver_tol, maxiter=cfg.solver_maxiter)

        stage = "verification"
        amplitude = forward.amplitude_from_q(reg.q_delta, u_solved, cfg.k, rule)
        final_residual = forward.residual_norm(rule, amplitude, f_samples)

        report = ReconstructionReport(
            L=choice.L, tail_norm=choice.tail_norm, tail_target=0.5 * cfg.epsilon,
            tail_attained=choice.attained, synthesis_residual=synthesis_residual,
            delta=delta, zero_fraction=reg.report.fraction,
            n_excised=int(reg.report.nodes_in_N.size),
            min_abs_u=reg.report.min_abs_u, max_im_q=max_im_q,
            im_q_nonpositive=max_im_q <= 0.0, solver=stats,
            final_residual=final_residual, epsilon=cfg.epsilon,
            passed=final_residual < cfg.epsilon, target_norm=target_norm)

        stage = "delta sweep"
        for d in delta_sweep:
            reg_d = reconstruction.regularize(h, cfg.k, cfg.alpha, float(d))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                u_d, _ = forward.solve_scattering(
                    reg_d.q_delta, cfg.k, cfg.alpha,
                    tol=cfg.solver_tol, maxiter=cfg.solver_maxiter)
            amp_d = forward.amplitude_from_q(reg_d.q_delta, u_d, cfg.k, rule)
            report.delta_sweep.append(
                (float(d), forward.residual_norm(rule, amp_d, f_samples),
                 reg_d.report.fraction))

        stage = "export"
        export_report(report, outdir)
        _export_amplitude(outdir / "amplitude.txt", rule, amplitude,
                          f_samples, final_residual)
        if export_fields:
            common = {"k": repr(cfg.k), "alpha_theta": repr(cfg.alpha.theta),
                      "alpha_phi": repr(cfg.alpha.phi)}
            save_field(outdir / "h_field.txt", h, common)
            save_field(outdir / "u_field.txt", reg.u_delta, common)
            save_field(outdir / "q_field.txt", reg.q_delta,
                       {**common, "delta": repr(delta)})
        if delta_sweep:
            with open(outdir / "delta_sweep.txt", "w") as f:
                f.write("# columns: delta residual zero_fraction\n")
                for d, res, frac in report.delta_sweep:
                    f.write(f"{d:.16e} {res:.16e} {frac:.16e}\n")
        return report
    except ConfigError:
        raise
    except Exception as err:
        raise PipelineError(stage, err) from err


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="reconstruct",
        description="Design a ball-supported potential matching a prescribed "
                    "far-field pattern and verify it with a forward solver.")
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--delta-sweep", default="",
                        help="comma-separated excision thresholds to sweep")
    parser.add_argument("--verify-tail", action="store_true",
                        help="recheck the truncation tail on a finer rule")
    parser.add_argument("--export-fields", action="store_true",
                        help="write h, u, q field tables")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        for msg in err.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 3

    sweep = tuple(float(s) for s in args.delta_sweep.split(",") if s.strip())
    try:
        report = run_pipeline(cfg, delta_sweep=sweep,
                              export_fields=args.export_fields,
                              verify_tail=args.verify_tail)
    except ConfigError as err:
        for msg in err.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 3
    except PipelineError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4 if err.stage == "forward solve" else 2

    print(_format_report(report), end="")
    if not report.solver.converged:
        print("forward solver did not converge", file=sys.stderr)
        return 4
    if not report.passed:
        print(f"residual {report.final_residual:.3e} >= epsilon "
              f"{report.epsilon:.3e}: increase resolution (n_radial, "
              "sphere_degree) or relax epsilon", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
