"""Command-line interface: ``robustgate <command> [options]``.

Commands
--------
evaluate     objectives and a sampled profile of a coefficient file
optimize     seeded optimizer runs, merged front and knee point
robustness   fidelity versus detuning (constant and random) as CSV
verify       expansion identities on the square and a stored robust pulse
front        ``merge`` several front CSVs or pick the ``knee`` of one

Exit codes: 0 success, 1 usage, 2 invalid input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import artifacts
from .errors import NumericError, ValidationError
from .expansions import (
    dyson_terms,
    fidelity_expansion_terms,
    interaction_hamiltonian,
    robustness_functionals,
    verify_magnus_dyson,
)
from .mocma import MOCMAConfig, ParetoArchive, evolve, knee_point, merge_fronts
from .objectives import (
    OBJECTIVE_LABELS,
    OBJECTIVES,
    PerturbationSpec,
    PulseProblem,
    evaluate,
    fidelity_under_perturbation,
    max_rabi,
    square_pulse_fidelity,
)
from .pulse import ROBUST_PULSE, PulseCoefficients, profile, propagator, validate
from .su2core import NOT_GATE, SIGMA_Z, fro, herm_part

logger = logging.getLogger("robustgate")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_EVAL_GRID = 4096
DEFAULT_THRESHOLD = 5e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for invalid input here
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Optimization experiment read from a JSON document."""

    objectives: tuple[str, str] = ("JdH", "JOmega")
    n_harmonics: int = 3
    population: int = 100
    generations: int = 300
    runs: int = 10
    seed: int = 0
    grid: int = 512
    bounds: float = 2 * math.pi
    output_dir: str = "runs"
    threshold: float = DEFAULT_THRESHOLD
    sigma0: float = 0.6
    penalty: float = 1.0
    jobs: int = 1
    symmetric: bool = True

    def __post_init__(self):
        obj = tuple(self.objectives)
        object.__setattr__(self, "objectives", obj)
        if len(obj) != 2 or len(set(obj)) != 2 or not set(obj) <= set(OBJECTIVES):
            raise ValidationError(
                f"objectives must be two distinct names from {list(OBJECTIVE_LABELS)}, got {list(obj)}")
        for name in ("n_harmonics", "population", "generations", "runs", "jobs"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.population < 2:
            raise ValidationError("population must be >= 2")
        if not (self.bounds > 0 and math.isfinite(self.bounds)):
            raise ValidationError("bounds must be a positive finite number")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown configuration keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad configuration: {exc}") from None

    def problem(self) -> PulseProblem:
        return PulseProblem(self.objectives, self.n_harmonics, self.grid, self.bounds,
                            self.penalty, self.symmetric)

    def mocma(self) -> MOCMAConfig:
        return MOCMAConfig(mu=self.population, generations=self.generations, sigma0=self.sigma0,
                           lower=-self.bounds, upper=self.bounds, penalty=self.penalty,
                           labels=self.objectives)


def run_seed(seed: int, run: int) -> int:
    """Independent 64-bit seed for run ``run`` of an experiment."""
    return int(np.random.SeedSequence(seed, spawn_key=(run,)).generate_state(1, np.uint64)[0])


def load_coefficients(path: str, raw: bool) -> PulseCoefficients:
    doc = artifacts.read_json(path)
    if raw:
        doc = dict(doc, mode="raw")
    c = PulseCoefficients.from_dict(doc)
    report = validate(c)
    if not report.valid:
        if not raw:
            raise ValidationError(f"{path}: {report} (use --raw to evaluate anyway)")
        logger.warning("%s: %s", path, report)
    return c


# -- front files -------------------------------------------------------------

def front_rows(archive: ParetoArchive):
    s = archive.sorted()
    return [list(f) + list(x) for f, x in zip(s.f, s.x)]


def write_front(path, archive: ParetoArchive) -> None:
    labels = list(archive.labels or ("f1", "f2"))
    dim = archive.x.shape[1] if len(archive) else 0
    artifacts.write_csv(path, labels + [f"x{i + 1}" for i in range(dim)], front_rows(archive))


def read_front(path) -> ParetoArchive:
    header, data = artifacts.read_csv(path)
    if len(header) < 2:
        raise ValidationError(f"{path}: a front needs two objective columns")
    archive = ParetoArchive(header[:2])
    archive.update(data[:, 2:], data[:, :2])
    return archive


# -- commands ----------------------------------------------------------------

def cmd_evaluate(args) -> int:
    c = load_coefficients(args.coeff_file, args.raw)
    grid = args.grid or DEFAULT_EVAL_GRID
    values = evaluate(c, OBJECTIVE_LABELS, grid)
    for name, v in values.items():
        print(f"{name} = {v!r}")
    out = Path(args.out or Path(args.coeff_file).with_suffix(".profile.csv").name)
    p = profile(c, np.linspace(0.0, math.pi, args.samples), grid)
    rows = zip(p.theta, p.L, p.R, p.Omega, p.nu, p.Phi)
    artifacts.write_csv(out, ["theta", "L", "R", "Omega", "nu", "Phi"], rows)
    print(f"profile written to {out}")
    return EXIT_OK


def _one_run(cfg: RunConfig, run: int):
    seed = run_seed(cfg.seed, run)
    res = evolve(cfg.problem(), cfg.problem().dim, cfg.mocma(), seed)
    return run, seed, res


def cmd_optimize(args) -> int:
    doc = artifacts.read_json(args.config)
    overrides = {k: v for k, v in (("seed", args.seed), ("grid", args.grid), ("output_dir", args.out),
                                   ("jobs", args.jobs)) if v is not None}
    cfg = RunConfig.from_dict({**doc, **overrides})
    out = Path(cfg.output_dir)
    stamp = artifacts.run_stamp()
    if cfg.jobs > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_one_run, [cfg] * cfg.runs, range(cfg.runs)))
    else:
        results = [_one_run(cfg, r) for r in range(cfg.runs)]

    archives = []
    for run, seed, res in results:
        rdir = out / f"run_{run:03d}"
        md = dict(res.metadata, run=run, experiment_seed=cfg.seed, run_config=asdict(cfg),
                  events=len(res.events), **stamp)
        artifacts.write_json(rdir / "metadata.json", md)
        artifacts.write_csv(rdir / "history.csv", ["generation", "hypervolume", "best_f1", "best_f2"],
                            res.history)
        write_front(rdir / "front.csv", res.archive)
        archives.append(res.archive)
        print(f"run {run}: seed {seed}, {len(res.archive)} non-dominated points")

    merged = merge_fronts(archives)
    write_front(out / "merged_front.csv", merged)
    knee = _knee_report(merged, cfg.threshold)
    artifacts.write_json(out / "knee.json", knee)
    print(f"merged front: {len(merged)} points -> {out / 'merged_front.csv'}")
    _print_knee(knee)
    return EXIT_OK


def _knee_report(front: ParetoArchive, threshold: float) -> dict:
    labels = list(front.labels or ("f1", "f2"))
    try:
        x, f = knee_point(front, threshold)
    except ValueError as exc:
        return {"threshold": threshold, "labels": labels, "found": False, "reason": str(exc)}
    return {"threshold": threshold, "labels": labels, "found": True,
            "f": [float(v) for v in f], "x": [float(v) for v in x]}


def _print_knee(knee: dict) -> None:
    if not knee["found"]:
        print(f"knee: none ({knee['reason']})")
        return
    vals = ", ".join(f"{n} = {v!r}" for n, v in zip(knee["labels"], knee["f"]))
    print(f"knee (threshold {knee['threshold']:g}): {vals}; x = {knee['x']}")


def cmd_robustness(args) -> int:
    if not (math.isfinite(args.eps_min) and math.isfinite(args.eps_max)):
        raise ValidationError("epsilon range must be finite")
    if args.points < 2:
        raise ValidationError("points must be >= 2")
    if args.random_samples < 0:
        raise ValidationError("random-samples must be >= 0")
    c = load_coefficients(args.coeff_file, args.raw)
    peak = max_rabi(c)
    if peak <= 0:
        raise NumericError("degenerate pulse: maximum Rabi frequency is zero")
    seed = args.seed if args.seed is not None else 0
    steps = args.grid or DEFAULT_EVAL_GRID
    eps_norm = np.linspace(args.eps_min, args.eps_max, args.points)
    rows = []
    for i, en in enumerate(eps_norm):
        eps = float(en) * peak
        row = [float(en), fidelity_under_perturbation(c, PerturbationSpec(eps), steps)]
        for j in range(args.random_samples):
            s = int(np.random.SeedSequence(seed, spawn_key=(i, j)).generate_state(1, np.uint64)[0])
            spec = PerturbationSpec(eps, "gaussian", args.segments, s)
            row.append(fidelity_under_perturbation(c, spec, steps))
        row.append(float(square_pulse_fidelity(en)))
        rows.append(row)
    header = (["epsilon_normalized", "J_constant"]
              + [f"J_random_sample_{j + 1}" for j in range(args.random_samples)]
              + ["J_square_analytic"])
    out = Path(args.out or "robustness.csv")
    artifacts.write_csv(out, header, rows)
    print(f"{len(rows)} rows written to {out}")
    return EXIT_OK


def _verify_pulse(name, c, eps, grid, checks):
    u = lambda t: propagator(c, t)
    dh_hat = interaction_hamiltonian(u, SIGMA_Z / 2)
    md = verify_magnus_dyson(dh_hat, math.pi, eps, grid)
    rf = robustness_functionals(u, SIGMA_Z / 2, math.pi, grid)
    d = dyson_terms(dh_hat, (0.0, math.pi), 4, grid)
    terms = fidelity_expansion_terms(NOT_GATE, propagator(c, math.pi), d.scaled(eps))
    p1 = d.P[0]
    # <(-i)^2 P2>_H = P1^2 / 2 exactly; what remains is quadrature error
    herm_gap = float(fro(herm_part(-d.P[1]) + 0.5 * (p1 @ p1)))
    print(f"[{name}]")
    print(f"  magnus-dyson  log residual {md.log_residual:.3e}  dyson residual {md.dyson_residual:.3e}")
    print(f"  |P1| = {rf.normP1:.9g}  |<(-i)^2 P2>_H| = {rf.normHermP2:.3e}  |P2| = {rf.normP2:.6g}")
    print(f"  |<(-i)^2 P2>_H + P1^2/2| = {herm_gap:.3e}")
    print("  fidelity terms (orders 2..4): " + ", ".join(f"{t:.3e}" for t in terms))
    checks.append((f"{name}: Magnus-Dyson residuals <= {md.tol:g}", md.passed))
    checks.append((f"{name}: P2 Hermitian part follows P1", herm_gap <= 1e-6))
    return rf


def cmd_verify(args) -> int:
    eps = args.eps
    if not 0 <= eps <= 0.3:
        raise ValidationError("--eps must lie in [0, 0.3]")
    grid = args.grid or DEFAULT_EVAL_GRID
    checks: list[tuple[str, bool]] = []
    sq = _verify_pulse("square", PulseCoefficients.square(), eps, grid, checks)
    checks.append(("square: |P1| = sqrt(2) +- 1e-4", abs(sq.normP1 - math.sqrt(2)) <= 1e-4))
    rb = _verify_pulse("robust", ROBUST_PULSE, eps, grid, checks)
    checks.append(("robust: |P1| <= 1e-3", rb.normP1 <= 1e-3))
    for label, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_NUMERIC


def cmd_front(args) -> int:
    if args.tool == "merge":
        merged = merge_fronts([read_front(p) for p in args.inputs])
        out = Path(args.out or "merged_front.csv")
        write_front(out, merged)
        print(f"{len(merged)} non-dominated points written to {out}")
        return EXIT_OK
    if len(args.inputs) != 1:
        raise ValidationError("knee takes exactly one front file")
    knee = _knee_report(read_front(args.inputs[0]), args.threshold)
    if args.out:
        artifacts.write_json(args.out, knee)
    _print_knee(knee)
    if not knee["found"]:
        raise ValidationError(knee["reason"])
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--grid", type=int, help="quadrature / propagation grid")
    common.add_argument("--seed", type=int, help="64-bit seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="robustgate", description="Robust NOT-gate pulse design tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("evaluate", parents=[common], help="objectives and profile of a pulse")
    p.add_argument("coeff_file")
    p.add_argument("--raw", action="store_true", help="use coefficients as printed, skip the sum rule")
    p.add_argument("--samples", type=int, default=513, help="profile rows")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", parents=[common], help="run the optimizer")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, help="parallel runs")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("robustness", parents=[common], help="fidelity vs detuning sweep")
    p.add_argument("coeff_file")
    p.add_argument("--raw", action="store_true")
    p.add_argument("--eps-min", type=float, default=0.0)
    p.add_argument("--eps-max", type=float, default=0.2)
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--random-samples", type=int, default=5)
    p.add_argument("--segments", type=int, default=20)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("verify", parents=[common], help="check expansion identities")
    p.add_argument("--eps", type=float, default=0.05)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("front", parents=[common], help="merge fronts or pick a knee point")
    p.add_argument("tool", choices=["merge", "knee"])
    p.add_argument("inputs", nargs="+")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_front)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
