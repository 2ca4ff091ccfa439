"""Command-line front end: generate / criteria / wiener / bounds /
simulate / sweep / experiment, all emitting JSON (CSV for sweep tables).

Parallelism is controlled only by the CHAMPAGNE_WORKERS environment
variable; results are bit-identical for any worker count.
"""

import csv
import json
import sys

import click
import numpy as np

from . import bounds as bounds_mod
from .criteria import equivalence_check, integral_report, shell_series
from .errors import SchemaError
from .experiment import run_experiment, validate_spec
from .field import (ObstacleField, PowerLawProfile, PowerLogProfile,
                    ShellGeometry, TableProfile, generate_regular_field,
                    validate_spacing)
from .whitney import ConeWindow, wiener_series
from .wos import WalkConfig, depth_sweep, run_walks, _env_workers


def parse_profile(text):
    """Parse 'powerlaw:c=0.01,alpha=2' / 'powerlog:c=...,beta=...' /
    'table:[[t,v],...]' into a profile object."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "table":
        return TableProfile(tuple((t, v) for t, v in json.loads(rest)))
    kv = {}
    for part in rest.split(","):
        if not part.strip():
            continue
        k, _, v = part.partition("=")
        kv[k.strip()] = float(v)
    if kind == "powerlaw":
        return PowerLawProfile(kv["c"], kv["alpha"])
    if kind == "powerlog":
        return PowerLogProfile(kv["c"], kv["beta"])
    raise SchemaError(f"unknown profile kind {kind!r}")


def _parse_point(text, d=None):
    vec = np.array([float(v) for v in text.split(",")])
    if d is not None and vec.shape != (d,):
        raise SchemaError(f"expected {d} comma-separated coordinates")
    return vec


def _emit(doc, out):
    payload = json.dumps(doc, sort_keys=True, indent=1)
    if out:
        with open(out, "w") as fh:
            fh.write(payload + "\n")
    else:
        click.echo(payload)


@click.group()
def main():
    """Obstacle-field avoidability toolkit."""
    _env_workers()


@main.command()
@click.option("--dim", type=int, default=3, show_default=True)
@click.option("--k", "K", type=float, required=True, help="Shell ratio K > 1.")
@click.option("--profile", required=True, help="e.g. powerlaw:c=0.01,alpha=2")
@click.option("--sep", type=float, required=True, help="Target separation in (0,1).")
@click.option("--jmin", type=int, default=1, show_default=True)
@click.option("--jmax", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--subshells", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Field JSON path.")
def generate(dim, K, profile, sep, jmin, jmax, seed, subshells, out):
    """Generate a regularly spaced obstacle field."""
    prof = parse_profile(profile)
    shells = ShellGeometry(K, jmin, jmax)
    field = generate_regular_field(dim, shells, prof, sep, seed,
                                   subshells=subshells)
    field.save(out)
    report = validate_spacing(field, probe_count=1024, seed=seed + 1)
    click.echo(json.dumps({
        "obstacles": field.n_obstacles,
        "epsilon": field.epsilon,
        "densityR": field.density_r,
        "epsilonEmpirical": report.epsilon_empirical,
        "densityREmpirical": report.density_r_empirical,
        "violations": len(report.violations),
        "out": out,
    }, sort_keys=True, indent=1))


@main.command()
@click.option("--profile", required=True)
@click.option("--dim", type=int, default=3, show_default=True)
@click.option("--k", "K", type=float, default=5.0, show_default=True)
@click.option("--jmax", type=int, default=32, show_default=True)
@click.option("--tau", default=None, help="Boundary point x,y,z for the Wiener check.")
@click.option("--field", "field_path", type=click.Path(exists=True), default=None)
@click.option("--max-level", type=int, default=9, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def criteria(profile, dim, K, jmax, tau, field_path, max_level, out):
    """Classify the avoidability series/integral for a profile."""
    prof = parse_profile(profile)
    shells = ShellGeometry(K, 1, jmax)
    series = shell_series(prof, dim, shells)
    integral = integral_report(prof, dim, K=K, levels=max(jmax, 8))
    doc = {"series": series.to_dict(), "integral": integral.to_dict()}
    if field_path and tau:
        fld = ObstacleField.load(field_path)
        eq = equivalence_check(fld, _parse_point(tau, fld.d),
                               max_level=max_level)
        doc["equivalence"] = eq.to_dict()
    _emit(doc, out)


@main.command()
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--tau", required=True, help="Boundary point, e.g. 1,0,0")
@click.option("--max-level", type=int, default=9, show_default=True)
@click.option("--cone-factor", type=float, default=None,
              help="Restrict to a cone around tau (windowed evaluation).")
@click.option("--out", type=click.Path(), default=None)
def wiener(field_path, tau, max_level, cone_factor, out):
    """Wiener-type series report at a boundary point."""
    field = ObstacleField.load(field_path)
    tau_vec = _parse_point(tau, field.d)
    window = None
    if cone_factor is not None:
        window = ConeWindow(tuple(tau_vec), factor=cone_factor)
    rep = wiener_series(field, tau_vec, max_level, window=window)
    _emit(rep.to_dict(), out)


@main.command()
@click.option("--field", "field_path", type=click.Path(exists=True), default=None)
@click.option("--kind", type=click.Choice(["union", "product", "sandwich"]),
              required=True)
@click.option("--from-depth", type=int, default=None)
@click.option("--parity", type=click.Choice(["even", "odd"]), default="even",
              show_default=True)
@click.option("--center", default=None, help="Obstacle centre (sandwich).")
@click.option("--radius", type=float, default=None, help="Obstacle radius (sandwich).")
@click.option("--at", "at_point", default=None,
              help="Evaluation point (sandwich); defaults to the origin.")
@click.option("--dim", type=int, default=3, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def bounds(field_path, kind, from_depth, parity, center, radius, at_point,
           dim, out):
    """Certified harmonic-measure bounds."""
    if kind == "sandwich":
        if center is None or radius is None:
            raise click.UsageError("sandwich needs --center and --radius")
        c = _parse_point(center)
        x = _parse_point(at_point) if at_point else np.zeros(len(c))
        _emit(bounds_mod.sandwich(c, radius, x, dim).to_dict(), out)
        return
    if field_path is None:
        raise click.UsageError(f"{kind} bound needs --field")
    field = ObstacleField.load(field_path)
    if kind == "union":
        depth = field.shells.j_min if from_depth is None else from_depth
        _emit(bounds_mod.union_tail_bound(field, depth).to_dict(), out)
    else:
        _emit(bounds_mod.product_avoidance_bound(field, parity).to_dict(), out)


@main.command()
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--trials", type=int, required=True)
@click.option("--eta", type=float, default=1e-6, show_default=True)
@click.option("--depth", type=int, default=None, help="Truncation depth J.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--x0", default=None, help="Start point; defaults to the origin.")
@click.option("--out", type=click.Path(), default=None)
def simulate(field_path, trials, eta, depth, seed, x0, out):
    """Walk-on-spheres estimate of the escape probability."""
    field = ObstacleField.load(field_path)
    cfg = WalkConfig(trials=trials, boundary_tol=eta, truncation_depth=depth,
                     seed=seed)
    start = _parse_point(x0, field.d) if x0 else np.zeros(field.d)
    _emit(run_walks(field, start, cfg).to_dict(), out)


@main.command()
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--depths", required=True, help="Comma list, e.g. 4,6,8,10")
@click.option("--trials", type=int, required=True)
@click.option("--eta", type=float, default=1e-6, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def sweep(field_path, depths, trials, eta, seed, csv_path, out):
    """Coupled depth sweep (common random numbers across depths)."""
    field = ObstacleField.load(field_path)
    depth_list = [int(v) for v in depths.split(",")]
    cfg = WalkConfig(trials=trials, boundary_tol=eta, seed=seed)
    estimates = depth_sweep(field, cfg, depth_list)
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["depth", "pHat", "ciLow", "ciHigh", "tailBound"])
            for e in estimates:
                wr.writerow([e.depth, repr(e.p_hat), repr(e.ci_low),
                             repr(e.ci_high), repr(e.tail_bound)])
    _emit([e.to_dict() for e in estimates], out)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Overrides the spec's outputDir.")
def experiment(spec_path, out_dir):
    """Run a full experiment bundle (field, criteria, wiener, bounds, sweep)."""
    with open(spec_path) as fh:
        spec = json.load(fh)
    try:
        validate_spec(spec)
    except SchemaError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    target = out_dir or spec.get("outputDir")
    if not target:
        click.echo("no output directory: pass --out-dir or set outputDir",
                   err=True)
        sys.exit(1)
    code, summary = run_experiment(spec, target)
    click.echo(json.dumps({"name": summary["name"],
                           "consistent": summary["consistent"],
                           "outputDir": target}, sort_keys=True))
    sys.exit(code)


if __name__ == "__main__":
    main()
