"""``conemorse`` command-line front end.

Exit codes: 0 success, 1 I/O error, 2 invalid data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

from conemorse.complex_core import (
    ChainMapPair,
    cohomology_dims,
    decompose_cohomology,
    mapping_cone,
    morse_equalities,
    morse_inequalities,
    random_chain_map_pair,
)
from conemorse.morse_model import BUILTINS, MorseData, MorseDataError, ValidationError, builtin, load, validate

SCHEMA_VERSION = 1
EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

SPECTRUM_COLUMNS = [
    "T", "S", "log_S", "degree", "dim", "low_count", "gap_ratio", "gap_mode_low_count", "gap_mode_ratio",
    "split_agrees", "zero_count", "min_eigenvalue", "instanton_dim", "R", "instanton_cohomology",
    "combinatorial_cohomology", "leakage", "error",
]
DEFECT_COLUMNS = ["T", "point", "index", "slot", "defect"]
PRESETS = {"t2_cos_dx": "dx", "t2_cos_zero": "zero"}
OMEGAS = {"dx": {(0,): 1.0}, "dy": {(1,): 1.0}, "zero": {(0,): 0.0}}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def fmt(x) -> str:
    """Floats with 12 significant digits; everything else via ``str``."""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return "" if x is None else str(x)


def _jsonable(x):
    if isinstance(x, float):
        return fmt(x) if not math.isfinite(x) else float(fmt(x))
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_json(path: Path, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _print_table(rows: list[list], header: list[str], out) -> None:
    cells = [header] + [[fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)), file=out)


# -- dataset commands --------------------------------------------------------

def load_dataset(source: str) -> MorseData:
    """A builtin name or a path to a dataset file."""
    if source in BUILTINS:
        return builtin(source)
    try:
        return load(source)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {source}: {exc.strerror or exc}") from None
    except MorseDataError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None


def load_pair(source: str) -> tuple[MorseData, ChainMapPair]:
    data = load_dataset(source)
    try:
        return data, validate(data)
    except ValidationError as exc:
        raise CliError(EXIT_INVALID, f"invalid dataset {source}: {exc}") from None


def cmd_validate(args, out) -> int:
    data, _ = load_pair(args.dataset)
    print(f"{data.name or args.dataset}: valid (manifold dim {data.manifold_dim}, ell = {data.ell})", file=out)
    _print_table([[k, n] for k, n in data.mu.items()], ["k", "mu_k"], out)
    return EXIT_OK


def cohomology_table(data: MorseData, pair: ChainMapPair) -> dict:
    cone = mapping_cone(pair)
    bw = cohomology_dims(cone)
    base = cohomology_dims(pair.base_complex())
    eq = morse_equalities(pair)
    ineq = morse_inequalities(pair)
    rows = []
    for i, k in enumerate(cone.degrees):
        rows.append({
            "degree": k,
            "mu": data.mu.get(k, 0),
            "betti": base.get(k, 0),
            "cone_betti": bw[k],
            "R": eq.R[i],
            "v": ineq.v[i],
        })
    return {"dataset": data.name, "ell": data.ell, "rows": rows}


def cmd_cohomology(args, out) -> int:
    data, pair = load_pair(args.dataset)
    table = cohomology_table(data, pair)
    cols = ["degree", "mu", "betti", "cone_betti", "R", "v"]
    _print_table([[r[c] for c in cols] for r in table["rows"]], cols, out)
    if args.json:
        _write(lambda p: write_json(p, table), args.json)
    return EXIT_OK


def corollary_report(pair: ChainMapPair) -> dict:
    eq = morse_equalities(pair)
    ineq = morse_inequalities(pair)
    dec = decompose_cohomology(pair)
    return {
        "degrees": list(eq.degrees),
        "equality_residues": list(eq.residues),
        "inequality_slacks": list(ineq.slacks),
        "decomposition": [
            {"degree": r.degree, "coker": r.coker_dim, "ker": r.ker_dim, "cone_betti": r.cone_betti,
             "consistent": r.consistent} for r in dec
        ],
        "passed": eq.passed and ineq.passed and all(r.consistent for r in dec),
    }


def cmd_corollaries(args, out) -> int:
    if args.random:
        rng = random.Random(args.seed)
        reports = [corollary_report(random_chain_map_pair(rng)) for _ in range(args.random)]
        passed = sum(r["passed"] for r in reports)
        print(f"random batch (seed {args.seed}): {passed}/{len(reports)} passed", file=out)
        payload = {"seed": args.seed, "count": len(reports), "passed": passed, "reports": reports}
        ok = passed == len(reports)
    else:
        if not args.dataset:
            raise CliError(EXIT_INVALID, "corollaries needs a dataset or --random N")
        _, pair = load_pair(args.dataset)
        payload = corollary_report(pair)
        dec = {d["degree"]: d for d in payload["decomposition"]}
        rows = []
        for k, res, sl in zip(payload["degrees"], payload["equality_residues"], payload["inequality_slacks"]):
            d = dec.get(k)
            rows.append([k, res, sl, f"({d['coker']},{d['ker']})" if d else "-", d["cone_betti"] if d else "-"])
        _print_table(rows, ["degree", "residue", "slack", "(coker,ker)", "cone_betti"], out)
        print("PASS" if payload["passed"] else "FAIL", file=out)
        ok = payload["passed"]
    if args.json:
        _write(lambda p: write_json(p, payload), args.json)
    return EXIT_OK if ok else EXIT_NUMERIC


# -- spectral scans ----------------------------------------------------------

@dataclass
class RunConfig:
    preset: str = "t2_cos_dx"
    n: int = 16
    T: list[float] = field(default_factory=lambda: [4.0, 6.0, 8.0, 10.0, 12.0])
    c0: float | None = None
    threshold: float = 1.0
    omega: str | None = None
    out_dir: str = "."
    threads: int | None = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise CliError(EXIT_INVALID, f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.n < 4:
            raise CliError(EXIT_INVALID, f"grid size n must be >= 4, got {self.n}")
        if not self.T:
            raise CliError(EXIT_INVALID, "T list must be nonempty")
        if any(t < 0 for t in self.T):
            raise CliError(EXIT_INVALID, "T values must be nonnegative")
        if self.omega is None:
            self.omega = PRESETS[self.preset]
        if self.omega not in OMEGAS:
            raise CliError(EXIT_INVALID, f"unknown omega {self.omega!r}; choose from {sorted(OMEGAS)}")


def resolve_config(args) -> RunConfig:
    """Config file values, overridden by any flag given on the command line."""
    values: dict = {}
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {args.config}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_INVALID, f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(values, dict):
            raise CliError(EXIT_INVALID, f"{args.config}: expected a JSON object")
        unknown = set(values) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise CliError(EXIT_INVALID, f"{args.config}: unknown keys {sorted(unknown)}")
    for key in RunConfig.__dataclass_fields__:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "T" in values:
        values["T"] = [float(t) for t in values["T"]]
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise CliError(EXIT_INVALID, f"bad configuration: {exc}") from None


def run_spectrum(cfg: RunConfig) -> tuple[list[dict], list[dict], dict]:
    from conemorse.dec_grid import PeriodicGrid, sample_form
    from conemorse.witten_spectral import default_c0, scan, torus_cos

    grid = PeriodicGrid(2, cfg.n)
    f = torus_cos(grid)
    omega = sample_form(grid, 1, OMEGAS[cfg.omega])
    c0 = default_c0(f) if cfg.c0 is None else cfg.c0
    combinatorial = {}
    if cfg.omega in ("dx", "zero"):
        data = builtin("t2_cos_dx" if cfg.omega == "dx" else "t2_cos_zero")
        combinatorial = cohomology_dims(mapping_cone(validate(data)))

    points = scan(grid, f, omega, cfg.T, c0=c0, threshold=cfg.threshold, threads=cfg.threads)
    rows, defects = [], []
    for p in points:
        inst = p.instanton
        for k in sorted(p.spectra):
            s = p.spectra[k]
            g = p.gap_splits[k]
            rows.append({
                "T": float(p.T), "S": float(p.params.S), "log_S": float(p.params.log_S), "degree": k,
                "dim": len(s.eigenvalues), "low_count": s.low_count, "gap_ratio": float(s.gap_ratio),
                "gap_mode_low_count": g.low_count, "gap_mode_ratio": float(g.gap_ratio),
                "split_agrees": int(g.low_count == s.low_count), "zero_count": s.zero_count(),
                "min_eigenvalue": float(s.eigenvalues[0]),
                "instanton_dim": inst.dims[k] if inst else None,
                "R": inst.ranks[k] if inst else None,
                "instanton_cohomology": inst.cohomology[k] if inst else None,
                "combinatorial_cohomology": combinatorial.get(k),
                "leakage": float(inst.leakage[k]) if inst else None,
                "error": p.error or "",
            })
        for (name, slot), value in sorted(p.defects.items()):
            index = int(name[1:name.index("@")])
            defects.append({"T": float(p.T), "point": name, "index": index, "slot": slot, "defect": float(value)})
    meta = {"grid_n": cfg.n, "c0": float(c0), "threshold": float(cfg.threshold), "omega": cfg.omega,
            "preset": cfg.preset, "T": [float(t) for t in cfg.T]}
    return rows, defects, meta


def _csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def _write(writer, path) -> None:
    try:
        writer(Path(path))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def cmd_spectrum(args, out) -> int:
    from conemorse.witten_spectral import OverflowRisk, SpectralError

    cfg = resolve_config(args)
    try:
        rows, defects, meta = run_spectrum(cfg)
    except (SpectralError, OverflowRisk, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out_dir = Path(cfg.out_dir)

    def emit(_):
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "spectrum.csv").write_text(_csv_text(rows, SPECTRUM_COLUMNS))
        (out_dir / "defects.csv").write_text(_csv_text(defects, DEFECT_COLUMNS))
        write_json(out_dir / "spectrum.json", {"config": meta, "spectrum": rows, "defects": defects})

    _write(emit, out_dir)
    cols = ["T", "degree", "low_count", "gap_ratio", "instanton_cohomology", "combinatorial_cohomology", "error"]
    _print_table([[r[c] for c in cols] for r in rows], cols, out)
    print(f"wrote {out_dir / 'spectrum.csv'}, {out_dir / 'defects.csv'}, {out_dir / 'spectrum.json'}", file=out)
    failed = [r for r in rows if r["error"]]
    if failed:
        print(f"numerical failure: {failed[0]['error']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conemorse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset and print its critical point counts")
    p.add_argument("dataset", help=f"dataset file or builtin ({', '.join(BUILTINS)})")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("cohomology", help="per-degree mu, Betti numbers, cone Betti numbers, R_k and v_k")
    p.add_argument("dataset")
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_cohomology)

    p = sub.add_parser("corollaries", help="Morse equalities, inequalities and the coker/ker decomposition")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--random", type=int, metavar="N", help="check N seeded random datasets instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_corollaries)

    p = sub.add_parser("spectrum", help="deformed Laplacian scan on the torus grid; writes CSV and JSON")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--n", type=int)
    p.add_argument("--T", type=float, nargs="+")
    p.add_argument("--c0", type=float, help="schedule constant, S = exp(c0 T)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--omega", choices=sorted(OMEGAS))
    p.add_argument("--config", metavar="JSON", help="config file; flags override its values")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--threads", type=int, help="parallel scan points (default: CONEMORSE_THREADS or 1)")
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
