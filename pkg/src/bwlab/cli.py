"""Command line entry point: ``bwlab <command> [options]``.

Exit codes: 0 success, 2 solver/numerical failure, 3 configuration error.
Every output file carries the run configuration and package version.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .models import ConfigurationError, Family, ModelSpec

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    spec: dict
    options: dict = field(default_factory=dict)
    out: str = "."
    seed: int = 0
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_header(self) -> str:
        return f"# bwlab {self.version}\n# run_config: {self.to_json()}\n"

    def markdown_header(self) -> str:
        return f"<!-- bwlab {self.version} run_config: {self.to_json()} -->\n"


def _pair(text: str) -> complex:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        return complex(float(parts[0]), 0.0)
    if len(parts) == 2:
        return complex(float(parts[0]), float(parts[1]))
    raise ValueError(f"expected RE or RE,IM, got {text!r}")


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def threads() -> int:
    """Worker cap from BWLAB_THREADS (default 1)."""
    raw = os.environ.get("BWLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"BWLAB_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"BWLAB_THREADS must be a positive integer, got {raw!r}")
    return n


def build_spec(args: argparse.Namespace) -> ModelSpec:
    fam = args.family
    try:
        if fam == "hbar":
            return ModelSpec.hbar_family(args.hbar if args.hbar is not None else 1.0)
        if fam == "beta":
            return ModelSpec.beta_family(_pair(args.beta) if args.beta is not None else 0j)
        if fam == "alpha":
            return ModelSpec.alpha_family(_pair(args.alpha) if args.alpha is not None else 0j)
        if fam == "kdelta":
            return ModelSpec.kdelta_family(args.k if args.k is not None else 1.0, args.delta or 0.0)
        if fam == "real":
            return ModelSpec.real_cubic(args.hbar if args.hbar is not None else 1.0)
    except (ValueError, ConfigurationError) as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown family {fam!r}")


def _common(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    """Shared flags.  They are accepted before or after the subcommand; the
    subcommand copy suppresses its defaults so it cannot overwrite a value
    given before the subcommand."""

    def d(value: Any) -> Any:
        return value if defaults else argparse.SUPPRESS

    g = p.add_argument_group("model and numerics")
    g.add_argument("--family", default=d("hbar"), help="hbar | beta | alpha | kdelta | real")
    g.add_argument("--hbar", type=float, default=d(None))
    g.add_argument("--beta", default=d(None), help="RE,IM")
    g.add_argument("--alpha", default=d(None), help="RE,IM")
    g.add_argument("--k", type=float, default=d(None))
    g.add_argument("--delta", type=float, default=d(None))
    g.add_argument("--tol", type=float, default=d(1e-12))
    g.add_argument("--out", default=d(None), help="output directory (files are written only when given)")
    g.add_argument("--seed", type=int, default=d(0))
    g.add_argument("--window", default=d(None), help="RE_MIN,RE_MAX[,IM_MIN,IM_MAX]")


def make_parser() -> argparse.ArgumentParser:
    top = _Parser(add_help=False)
    _common(top)
    common = _Parser(add_help=False)
    _common(common, defaults=False)
    parser = _Parser(prog="bwlab", description="Levels, crossings and Stokes geometry of the cubic oscillator family.",
                     parents=[top])
    parser.add_argument("--version", action="version", version=f"bwlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", parents=[common], help="all levels in an energy window")
    p.add_argument("--max-levels", type=int, default=50)
    p.add_argument("--nodes", action="store_true", help="attach node-count labels")

    p = sub.add_parser("branchpoint", parents=[common], help="locate the crossing of levels (2n, 2n+1)")
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--monodromy", action="store_true")
    p.add_argument("--radius", type=float, default=None, help="monodromy radius (default 0.1 hbar_n)")

    p = sub.add_parser("stokes", parents=[common], help="Stokes diagram or the critical energy")
    p.add_argument("--E", dest="energy", default=None, help="RE,IM")
    p.add_argument("--E-critical", dest="critical", action="store_true")

    p = sub.add_parser("zeros", parents=[common], help="zeros and node counts of an eigenfunction")
    p.add_argument("--m", type=int, default=None, help="rank of a real level (PT-symmetric specs)")
    p.add_argument("--E", dest="energy", default=None, help="energy guess RE,IM")

    p = sub.add_parser("wkb", parents=[common], help="semiclassical level")
    p.add_argument("--label", type=int, default=0)
    p.add_argument("--quantization", choices=["CC1", "CC3"], default="CC1")
    p.add_argument("--branch", choices=["plus", "minus"], default="plus")
    p.add_argument("--exact", action="store_true", help="also solve exactly and report the difference")

    p = sub.add_parser("report", parents=[common], help="crossing table for n = 0..n-max")
    p.add_argument("--n-max", type=int, default=3)
    return parser


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------
def _complex(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


class Output:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out) if cfg.out else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict) -> dict:
        doc = {"run_config": self.cfg.to_dict(), **payload}
        if self.dir is not None:
            (self.dir / name).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
        return doc

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        if self.dir is None:
            return
        lines = [self.cfg.csv_header().rstrip("\n"), ",".join(header)]
        lines += [",".join(repr(v) if isinstance(v, float) else str(v) for v in r) for r in rows]
        (self.dir / name).write_text("\n".join(lines) + "\n")

    def markdown(self, name: str, text: str) -> None:
        if self.dir is not None:
            (self.dir / name).write_text(self.cfg.markdown_header() + text + "\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def _window(args: argparse.Namespace, spec: ModelSpec):
    from .eigensolver import Window

    if args.window:
        v = _floats(args.window)
        if len(v) == 2:
            v += [-1.0, 1.0]
        if len(v) != 4 or v[0] >= v[1] or v[2] >= v[3]:
            raise ConfigError(f"bad window {args.window!r}")
        return Window(*v)
    if spec.family is Family.HBAR and spec.hbar.real < 1.0:
        return Window(-5.0, 5.0, -1.0, 1.0)
    return Window(1e-3, 30.0, -1.0, 1.0)


def cmd_spectrum(args, spec, out: Output) -> int:
    from .eigensolver import spectrum_scan

    res = spectrum_scan(spec, _window(args, spec), max_levels=args.max_levels, tol=args.tol, seed=args.seed,
                        count_nodes=args.nodes)
    pairs = [p.to_dict() for p in res.pairs]
    out.json("spectrum.json", {"count": res.count, "levels": pairs})
    out.csv("spectrum.csv", ["re_E", "im_E", "label", "branch", "residual_w"],
            [[p.E.real, p.E.imag, p.label, p.branch, p.residual_w] for p in res.pairs])
    for p in res.pairs:
        lab = "" if p.label is None else f"  m={p.label}"
        print(f"{p.E.real:.12f} {p.E.imag:+.12f}i  {p.branch}{lab}")
    return EXIT_OK


def cmd_branchpoint(args, spec, out: Output) -> int:
    from .continuation import locate_branch_point, monodromy_loop

    if spec.family is not Family.HBAR:
        raise ConfigError("branchpoint needs --family hbar")
    if args.n < 0:
        raise ConfigError("--n must be >= 0")
    bp = locate_branch_point(args.n, ModelSpec.hbar_family(1.0))
    payload: dict[str, Any] = {"branch_point": bp.to_dict(), "issues": bp.check()}
    print("| n | hbar_n | E_c | pair | exponent |")
    print("|---|---|---|---|---|")
    print(bp.markdown_row())
    if args.monodromy:
        mono = monodromy_loop(args.n, args.radius, bp=bp)
        payload["monodromy"] = {
            "permutation": mono.permutation,
            "radius": mono.radius,
            "start": {str(k): _complex(v) for k, v in mono.start.items()},
            "end": {str(k): _complex(v) for k, v in mono.end.items()},
            "closure": mono.closure,
        }
        print(f"monodromy: {mono.permutation}")
    out.json(f"branchpoint_n{args.n}.json", payload)
    out.csv(f"branchpoint_n{args.n}_fit.csv", ["offset", "gap"], [[o, g] for o, g in zip(bp.fit.offsets, bp.fit.gaps)])
    out.markdown(f"branchpoint_n{args.n}.md", "| n | hbar_n | E_c | pair | exponent |\n|---|---|---|---|---|\n"
                 + bp.markdown_row())
    return EXIT_OK


def cmd_stokes(args, spec, out: Output) -> int:
    from .semiclassics import critical_energy, trace_stokes_lines

    if args.critical:
        target = spec if spec.family in (Family.HBAR, Family.REAL) else ModelSpec.hbar_family(1.0)
        ce = critical_energy(target)
        out.json("critical_energy.json", {
            "E_critical": ce.value, "bracket": list(ce.bracket), "method": ce.method,
            "sign_changes": ce.sign_changes,
        })
        print(f"E_critical = {ce.value:.8f}")
        return EXIT_OK
    if args.energy is None:
        raise ConfigError("stokes needs --E RE,IM or --E-critical")
    try:
        E = _pair(args.energy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    diag = trace_stokes_lines(spec, E)
    out.json("stokes.json", {"topology": diag.topology()})
    rows = [[i, float(z.real), float(z.imag)] for i, ln in enumerate(diag.lines) for z in ln.points]
    out.csv("stokes.csv", ["line_id", "re", "im"], rows)
    for i, ln in enumerate(diag.lines):
        print(f"line {i}: from {ln.start_label} dir {ln.direction} -> {ln.terminus} (length {ln.length:.3f})")
    print("connections:", ", ".join("-".join(c) for c in diag.connections) or "none")
    return EXIT_OK


def cmd_zeros(args, spec, out: Output) -> int:
    from .eigensolver import SolveOptions, solve_eigenvalue
    from .continuation import real_levels
    from .zeros import _box_size, classify_zeros, locate_zeros, node_counts

    if args.m is not None:
        if args.m < 0:
            raise ConfigError("--m must be >= 0")
        pair = real_levels(spec, args.m + 1)[args.m]
        pair = solve_eigenvalue(spec, pair.E, SolveOptions(tol=args.tol))
    elif args.energy is not None:
        pair = solve_eigenvalue(spec, _pair(args.energy), SolveOptions(tol=args.tol))
    else:
        raise ConfigError("zeros needs --m or --E")
    counts = node_counts(pair)
    R = _box_size(spec, pair.E)
    zs = classify_zeros(locate_zeros(pair, (-R, R, -R, R), pair=pair))
    out.json("zeros.json", {
        "level": pair.to_dict(),
        "nodes": counts.label, "nodes_lower": counts.lower, "nodes_upper": counts.upper,
        "imaginary_nodes": counts.imag,
        "zeros": [{"re": q.z.real, "im": q.z.imag, "class": q.kind.value, "residual": q.residual} for q in zs.zeros],
    })
    out.csv("zeros.csv", ["re", "im", "class", "residual"],
            [[q.z.real, q.z.imag, q.kind.value, q.residual] for q in zs.zeros])
    print(f"E = {pair.E.real:.12f} {pair.E.imag:+.12f}i")
    print(f"nodes: {counts.label} (lower {counts.lower}, upper {counts.upper}, imaginary {counts.imag})")
    for q in zs.zeros:
        print(f"  {q.z.real:+.10f} {q.z.imag:+.10f}i  {q.kind.value}")
    return EXIT_OK


def cmd_wkb(args, spec, out: Output) -> int:
    from .eigensolver import SolveOptions, solve_eigenvalue
    from .semiclassics import solve_wkb_level

    if args.label < 0:
        raise ConfigError("--label must be >= 0")
    E = solve_wkb_level(spec, args.label, quantization=args.quantization, branch=args.branch)
    payload = {"E_wkb": _complex(E), "label": args.label, "quantization": args.quantization, "branch": args.branch}
    print(f"E_wkb = {E.real:.12f} {E.imag:+.12f}i")
    if args.exact:
        pair = solve_eigenvalue(spec, E, SolveOptions(tol=args.tol, count_nodes=False))
        payload["E_exact"] = _complex(pair.E)
        payload["difference"] = abs(pair.E - E)
        print(f"E_exact = {pair.E.real:.12f} {pair.E.imag:+.12f}i  |diff| = {abs(pair.E - E):.3e}")
    out.json("wkb.json", payload)
    return EXIT_OK


def cmd_report(args, spec, out: Output) -> int:
    from .continuation import crossing_report

    if not 0 <= args.n_max <= 5:
        raise ConfigError("--n-max must be in 0..5")
    rep = crossing_report(args.n_max, workers=threads())
    md = rep.markdown()
    out.markdown("report.md", md)
    out.json("report.json", rep.to_dict())
    print(md)
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "branchpoint": cmd_branchpoint,
    "stokes": cmd_stokes,
    "zeros": cmd_zeros,
    "wkb": cmd_wkb,
    "report": cmd_report,
}

SOLVER_ERRORS: tuple[type[BaseException], ...] = (RuntimeError, ArithmeticError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        threads()
        spec = build_spec(args)
        opts = {k: v for k, v in vars(args).items() if k not in ("command",)}
        cfg = RunConfig(args.command, spec.to_dict(), opts, args.out or "", args.seed)
        out = Output(cfg)
        return COMMANDS[args.command](args, spec, out)
    except ConfigError as exc:
        print(f"bwlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"bwlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"bwlab: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
