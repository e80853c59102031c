"""Command-line driver for convergence studies.

    python -m hdivwg --example ex1 --family hdiv --degree 2 --levels 2..5 --out results/

Writes ``table.md``, ``table.csv`` and ``field_u.dat`` / ``field_p.dat``
(finest level, sampled on a uniform lattice) into the output directory.
A ``key=value`` config file may supply any long option; flags win.
"""
import argparse
import importlib
import math
import sys
from pathlib import Path

import numpy as np

from .assembly import BOUNDARY_AVERAGES, assemble
from .errors import ConfigurationError, NumericalError, SolverError, StructuralError
from .mesh import CUBE_LEVELS, SQUARE_LEVELS, unit_cube_mesh, unit_square_mesh
from .postproc import ErrorReport, error_norms
from .problems import EXAMPLES, ExampleSpec, get_example
from .solver import solve_saddle
from .spaces import eval_field
from .taylor_hood import assemble_taylor_hood

FAMILIES = ("hdiv", "taylor-hood")
SOLVERS = ("direct", "minres")
ALLOWED_DEGREES = {
    ("hdiv", 2): (1, 2, 3, 4),
    ("hdiv", 3): (2,),
    ("taylor-hood", 2): (2, 3),
}
COLUMNS = [("l2_u", "‖u−u_h‖₀"), ("energy_u", "⦀u−u_h⦀"), ("l2_p", "‖p−p_h‖₀")]
DEFAULTS = {
    "example": "ex1",
    "family": "hdiv",
    "degree": "1",
    "levels": "2..5",
    "mu": "1.0",
    "quad-degree": None,
    "solver": "direct",
    "out": "results",
    "sample": "16",
    "boundary-average": "lifted",
    "custom": None,
}


def parse_levels(text):
    """'a..b' (inclusive) or a single integer."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigurationError(f"levels must look like 'a..b', got '{text}'") from None
    if lo > hi:
        raise ConfigurationError(f"empty level range {text}")
    return list(range(lo, hi + 1))


def read_config(path):
    """key=value lines; '#' starts a comment; underscores and dashes are interchangeable."""
    cfg = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in DEFAULTS:
            raise ConfigurationError(f"{path}:{n}: unknown key '{key}'")
        cfg[key] = value
    return cfg


def load_custom(ref):
    """Resolve 'package.module:NAME' to an ExampleSpec."""
    if not ref or ":" not in ref:
        raise ConfigurationError("custom example needs --custom module:NAME")
    mod, name = ref.split(":", 1)
    try:
        spec = getattr(importlib.import_module(mod), name)
    except (ImportError, AttributeError) as exc:
        raise ConfigurationError(f"cannot load custom example {ref}: {exc}") from exc
    if not isinstance(spec, ExampleSpec):
        raise ConfigurationError(f"{ref} is not an ExampleSpec")
    return spec


def validate(family, k, dim, levels, mu):
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown family '{family}' (choose from {', '.join(FAMILIES)})")
    if k < 1:
        raise ConfigurationError(f"degree must be >= 1, got {k}")
    allowed = ALLOWED_DEGREES.get((family, dim), ())
    if k not in allowed:
        raise ConfigurationError(f"{family} in {dim}D supports degrees {list(allowed)}, got {k}")
    if not (mu > 0 and math.isfinite(mu)):
        raise ConfigurationError(f"mu must be positive and finite, got {mu}")
    lo, hi = SQUARE_LEVELS if dim == 2 else CUBE_LEVELS
    bad = [lv for lv in levels if not lo <= lv <= hi]
    if bad:
        raise ConfigurationError(f"levels {bad} outside {lo}..{hi} for {dim}D meshes")


def make_mesh(dim, level):
    return unit_square_mesh(level) if dim == 2 else unit_cube_mesh(level)


def solve_level(spec, family, k, level, mu, quad_degree=None, solver="direct",
                boundary_average="lifted"):
    mesh = make_mesh(spec.dim, level)
    if family == "hdiv":
        system = assemble(mesh, k, mu, spec.f(mu), spec.g, quad_degree, boundary_average)
    else:
        system = assemble_taylor_hood(mesh, k, mu, spec.f(mu), spec.g, quad_degree)
    u_h, p_h, report = solve_saddle(system, method=solver)
    return u_h, p_h, report


def run_convergence(spec, family, k, levels, mu=1.0, quad_degree=None, solver="direct",
                    boundary_average="lifted"):
    """One ErrorReport row per level; also returns the finest-level fields."""
    validate(family, k, spec.dim, levels, mu)
    report = ErrorReport()
    fields = None
    for level in levels:
        u_h, p_h, _ = solve_level(spec, family, k, level, mu, quad_degree, solver, boundary_average)
        report.append(error_norms(spec, u_h, p_h, level, spec.g))
        fields = (u_h, p_h)
    return report, fields


def sci_number(x):
    """Fortran-style 0.dddd E+xx with four significant digits."""
    if x == 0 or not math.isfinite(x):
        return "0.0000E+00" if x == 0 else str(x)
    sign = "-" if x < 0 else ""
    x = abs(x)
    e = math.floor(math.log10(x)) + 1
    m = round(x / 10.0 ** e, 4)
    if m >= 1.0:
        m, e = m / 10, e + 1
    return f"{sign}{m:.4f}E{e:+03d}"


def _rate(r):
    return "" if not math.isfinite(r) else f"{r:.2f}"


def table_rows(report):
    rates = {name: report.rates(name) for name, _ in COLUMNS}
    for i, row in enumerate(report.rows):
        cells = [str(row.level)]
        for name, _ in COLUMNS:
            cells += [sci_number(getattr(row, name)), _rate(rates[name][i])]
        cells.append(sci_number(row.div_sup))
        yield cells


def header():
    h = ["level"]
    for _, label in COLUMNS:
        h += [label, "rate"]
    return h + ["max div u_h"]


def format_markdown(report, title=""):
    lines = [f"**{title}**", ""] if title else []
    lines.append("| " + " | ".join(header()) + " |")
    lines.append("|" + "---|" * len(header()))
    lines += ["| " + " | ".join(r) + " |" for r in table_rows(report)]
    return "\n".join(lines) + "\n"


def format_csv(report):
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header())
    w.writerows(table_rows(report))
    return buf.getvalue()


def sample_lattice(dim, n):
    axes = [np.linspace(0.0, 1.0, n + 1)] * dim
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)


def sample_field(field, points):
    """Field values at arbitrary points: (npts,) or (npts, ncomp)."""
    mesh = field.space.mesh
    cells = mesh.locate(points)
    if (cells < 0).any():
        raise StructuralError("sample point outside the mesh")
    out = None
    for c in np.unique(cells):
        sel = np.flatnonzero(cells == c)
        vals = np.asarray(eval_field(field, int(c), points[sel]))
        if out is None:
            out = np.zeros((len(points),) + vals.shape[1:])
        out[sel] = vals
    return out


def export_field(field, path, n=16):
    """Plain-text x, y(, z), value columns on a uniform (n+1)^d lattice."""
    dim = field.space.mesh.dim
    pts = sample_lattice(dim, n)
    vals = sample_field(field, pts)
    vals = vals.reshape(len(pts), -1)
    names = "xyz"[:dim]
    cols = [f"v{i + 1}" for i in range(vals.shape[1])] if vals.shape[1] > 1 else ["v"]
    np.savetxt(path, np.hstack([pts, vals]), fmt="%.10e", header=" ".join(list(names) + cols))
    return Path(path)


def build_parser():
    p = argparse.ArgumentParser(prog="hdivwg", description="Weak-gradient H(div) Stokes convergence study")
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--example", choices=sorted(EXAMPLES) + ["custom"])
    p.add_argument("--custom", help="module:NAME of an ExampleSpec (with --example custom)")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--degree", type=int)
    p.add_argument("--levels", help="inclusive range a..b")
    p.add_argument("--mu", type=float)
    p.add_argument("--quad-degree", type=int, help="default 2k+6")
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--boundary-average", choices=BOUNDARY_AVERAGES,
                   help="boundary face value in the weak gradient (hdiv only)")
    p.add_argument("--sample", type=int, help="lattice intervals per axis for field export")
    p.add_argument("--out", help="output directory")
    return p


def resolve_options(args):
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            opts[key] = val
    try:
        resolved = {
            "example": str(opts["example"]),
            "family": str(opts["family"]),
            "degree": int(opts["degree"]),
            "levels": parse_levels(opts["levels"]),
            "mu": float(opts["mu"]),
            "quad_degree": None if opts["quad-degree"] in (None, "") else int(opts["quad-degree"]),
            "solver": str(opts["solver"]),
            "out": Path(opts["out"]),
            "sample": int(opts["sample"]),
            "boundary_average": str(opts["boundary-average"]),
            "custom": opts["custom"],
        }
    except ValueError as exc:
        raise ConfigurationError(f"bad option value: {exc}") from exc
    if resolved["solver"] not in SOLVERS:
        raise ConfigurationError(f"unknown solver '{resolved['solver']}'")
    if resolved["boundary_average"] not in BOUNDARY_AVERAGES:
        raise ConfigurationError(f"unknown boundary average '{resolved['boundary_average']}'")
    if resolved["sample"] < 1:
        raise ConfigurationError("sample must be >= 1")
    return resolved


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        o = resolve_options(args)
        spec = load_custom(o["custom"]) if o["example"] == "custom" else get_example(o["example"])
        report, (u_h, p_h) = run_convergence(spec, o["family"], o["degree"], o["levels"], o["mu"],
                                             o["quad_degree"], o["solver"], o["boundary_average"])
        out = o["out"]
        out.mkdir(parents=True, exist_ok=True)
        title = f"{spec.name}, {o['family']} k={o['degree']}, mu={o['mu']:g}"
        (out / "table.md").write_text(format_markdown(report, title), encoding="utf-8")
        (out / "table.csv").write_text(format_csv(report), encoding="utf-8")
        export_field(u_h, out / "field_u.dat", o["sample"])
        export_field(p_h, out / "field_p.dat", o["sample"])
    except (ConfigurationError, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, NumericalError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    sys.stdout.write(format_markdown(report, title))
    return 0


if __name__ == "__main__":
    sys.exit(main())
