"""Command line front end: adaptive runs, pencil root tables, validation
suites, and bit-stable CSV emission.

Configuration is flat ``key = value`` text with optional ``[section]``
headers; resolution order is preset defaults, then file values, then
command-line overrides. Every float in the output files is printed with
17 significant digits so runs round-trip exactly.
"""

import argparse
import concurrent.futures
import dataclasses
import math
import os
import sys

import numpy as np

from .knowledge import (
    KnowledgeTerm,
    biharmonic_exponents,
    corner_columns,
    laplace_exponents,
    pencil_residual,
)
from .presets import (
    LAMBDA_EDDY,
    LAMBDA_REENTRANT,
    load_preset,
    preset_parameters,
)
from .solver import run_adaptive
from .validation import (
    domain_bbox,
    error_table,
    gradient_deviation,
    pde_residual_probe,
)


class ConfigError(Exception):
    """Bad configuration; the message names the offending key."""


def _fmt(x):
    return "%.17g" % x


# ---------------------------------------------------------------------------
# configuration


def _ge(bound):
    return lambda v: v >= bound, f"must be >= {bound}"


def _gt(bound):
    return lambda v: v > bound, f"must be > {bound}"


def _in(*opts):
    return lambda v: v in opts, "must be one of " + ", ".join(map(str, opts))


_ANY = (lambda v: True, "")

_SCHEMA = {
    "form.beta": (float, _ge(0.0)),
    "form.delta": (float, _gt(0.0)),
    "form.sb": (int, _in(0, 1)),
    "quad.interior_n": (int, _ge(1)),
    "quad.boundary_n": (int, _ge(1)),
    "quad.circle_rule": (str, _in("gauss", "riemann")),
    "train.width_base": (int, _ge(1)),
    "train.width_growth": (float, _gt(0.0)),
    "train.depth": (int, _ge(1)),
    "train.scale_base": (float, _gt(0.0)),
    "train.scale_rate": (float, _ANY),
    "train.lr_base": (float, _gt(0.0)),
    "train.lr_decay": (float, _gt(0.0)),
    "train.gradient_steps": (int, _ge(1)),
    "train.momentum": (float, _ge(0.0)),
    "train.seed": (int, _ge(0)),
    "train.svd_rtol": (float, _gt(0.0)),
    "train.tol": (float, _ge(0.0)),
    "train.max_basis": (int, _ge(0)),
    "output.grid_n": (int, _ge(2)),
    "output.fields": (bool, _ANY),
    "output.timings": (bool, _ANY),
}

_TRAIN_FIELDS = (
    "width_base",
    "width_growth",
    "depth",
    "scale_base",
    "scale_rate",
    "lr_base",
    "lr_decay",
    "gradient_steps",
    "momentum",
    "seed",
    "svd_rtol",
    "tol",
    "max_basis",
)


def parse_config_text(text):
    """Raw key -> string map from flat key = value text with [section]s."""
    raw = {}
    section = ""
    for ln, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            continue
        if "=" not in s:
            raise ConfigError(f"line {ln}: expected key = value, got {s!r}")
        k, v = s.split("=", 1)
        key = f"{section}.{k.strip()}" if section else k.strip()
        raw[key] = v.strip()
    return raw


def _convert(key, value, typ):
    if isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}")
    try:
        if typ is bool:
            lowered = value.lower()
            if lowered not in ("true", "false"):
                raise ValueError
            return lowered == "true"
        return typ(value)
    except ValueError:
        raise ConfigError(
            f"{key}: expected {typ.__name__}, got {value!r}"
        ) from None


def _apply(resolved, key, value):
    if key not in _SCHEMA:
        raise ConfigError(f"{key}: unknown configuration key")
    typ, (check, msg) = _SCHEMA[key]
    v = _convert(key, value, typ)
    if not check(v):
        raise ConfigError(f"{key}: {msg}, got {v}")
    resolved[key] = v


def resolve_config(preset=None, config_path=None, overrides=None):
    """Preset defaults overlaid with file values, then explicit overrides.

    Returns a flat key -> typed value dict covering every run setting;
    unknown keys and ill-typed values raise ConfigError naming the key.
    """
    raw = {}
    if config_path is not None:
        try:
            with open(config_path) as f:
                raw = parse_config_text(f.read())
        except OSError as exc:
            raise ConfigError(f"config file {config_path}: {exc}") from None
    raw.update(overrides or {})
    name = preset if preset is not None else raw.pop("preset", None)
    raw.pop("preset", None)
    if name is None:
        raise ConfigError("preset: required (pass --preset or a 'preset =' line)")
    try:
        params = preset_parameters(name)
    except ValueError as exc:
        raise ConfigError(f"preset: {exc}") from None
    for key in [k for k in raw if k.startswith("preset.")]:
        p = key[len("preset."):]
        if p not in params:
            raise ConfigError(f"{key}: unknown parameter for preset {name}")
        params[p] = _convert(key, raw.pop(key), type(params[p]))
    pre = load_preset(name, **params)

    resolved = {"preset": name}
    for p in sorted(params):
        resolved[f"preset.{p}"] = params[p]
    resolved["form.beta"] = float(pre.beta)
    resolved["form.delta"] = float(pre.delta)
    resolved["form.sb"] = int(pre.sb)
    resolved["quad.interior_n"] = int(pre.interior_n)
    resolved["quad.boundary_n"] = int(pre.boundary_n)
    resolved["quad.circle_rule"] = pre.circle_rule
    for f in _TRAIN_FIELDS:
        resolved[f"train.{f}"] = getattr(pre.train, f)
    resolved["output.grid_n"] = 64
    resolved["output.fields"] = True
    resolved["output.timings"] = False

    for key, value in raw.items():
        _apply(resolved, key, value)
    return resolved


def emit_config(resolved):
    """Resolved configuration as config text; parses back identically."""
    lines = [f"preset = {resolved['preset']}"]
    for key in resolved:
        if key.startswith("preset."):
            lines.append(f"{key} = {_value_text(resolved[key])}")
    section = None
    for key in _SCHEMA:
        sec, _, base = key.partition(".")
        if sec != section:
            lines.append(f"\n[{sec}]")
            section = sec
        lines.append(f"{base} = {_value_text(resolved[key])}")
    return "\n".join(lines) + "\n"


def _value_text(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


# ---------------------------------------------------------------------------
# run orchestration


def build_run(resolved):
    """(preset, FormSpec, TrainConfig) for a resolved configuration."""
    params = {
        k[len("preset."):]: v
        for k, v in resolved.items()
        if k.startswith("preset.")
    }
    pre = load_preset(resolved["preset"], **params)
    if resolved["quad.circle_rule"] != pre.circle_rule:
        pre = dataclasses.replace(pre, circle_rule=resolved["quad.circle_rule"])
    spec = pre.form_spec(
        interior_n=resolved["quad.interior_n"],
        boundary_n=resolved["quad.boundary_n"],
        beta=resolved["form.beta"],
        delta=resolved["form.delta"],
        sb=resolved["form.sb"],
    )
    cfg = dataclasses.replace(
        pre.train, **{f: resolved[f"train.{f}"] for f in _TRAIN_FIELDS}
    )
    return pre, spec, cfg


def _history_line(row):
    cells = [str(row["iter"])]
    for key in ("eta", "energy_error", "l2_error", "h1_error", "h2_error"):
        v = row[key]
        cells.append("" if v is None else _fmt(v))
    cells.append(str(row["width"]))
    cells.append(_fmt(row["lr"]))
    cells.append(_fmt(row["seconds"]))
    return ",".join(cells) + "\n"


def _write_fields(out_dir, spec, subspace, iteration, grid_n):
    x0, x1, y0, y1 = domain_bbox(spec.domain)
    xs = np.linspace(x0, x1, grid_n)
    ys = np.linspace(y0, y1, grid_n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    outside = ~spec.domain.contains(pts)
    comps = subspace.evaluate(pts)
    for name in spec.components:
        vals = np.array(comps[name].val, dtype=float)
        vals[outside] = np.nan
        path = os.path.join(out_dir, f"field_{name}_iter{iteration}.csv")
        with open(path, "w") as f:
            f.write("x,y,value\n")
            for (px, py), v in zip(pts, vals):
                f.write(f"{_fmt(px)},{_fmt(py)},{_fmt(v)}\n")


def run_one(resolved, out_dir):
    """Execute one adaptive run, writing all output files into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    pre, spec, cfg = build_run(resolved)
    with open(os.path.join(out_dir, "config.txt"), "w") as f:
        f.write(emit_config(resolved))
    hist = open(os.path.join(out_dir, "history.csv"), "w")
    mut = open(os.path.join(out_dir, "mu_trace.csv"), "w")
    hist.write("iter,eta,energy_error,l2_error,h1_error,h2_error,width,lr,seconds\n")
    mut.write("step,term_id,re_mu,im_mu\n")

    def on_row(row):
        hist.write(_history_line(row))
        hist.flush()

    def on_mu(iteration, step, term_id, mu):
        g = (iteration - 1) * cfg.gradient_steps + step
        mu = complex(mu)
        mut.write(f"{g},{term_id},{_fmt(mu.real)},{_fmt(mu.imag)}\n")

    try:
        history, subspace = run_adaptive(
            spec,
            pre.data,
            cfg,
            exact=pre.data.exact,
            on_row=on_row,
            on_mu=on_mu,
            timings=resolved["output.timings"],
        )
    finally:
        hist.close()
        mut.close()
    if resolved["output.fields"] and history.rows:
        _write_fields(
            out_dir, spec, subspace, len(history.rows), resolved["output.grid_n"]
        )
    if any(not np.isfinite(e) for e in history.column("eta")):
        print(f"numerical abort: non-finite estimator in {out_dir}", file=sys.stderr)
        return 1
    return 0


def _worker_cap(n_jobs):
    cap = os.cpu_count() or 1
    env = os.environ.get("XGNN_THREADS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"XGNN_THREADS: expected int, got {env!r}") from None
        if cap < 1:
            raise ConfigError(f"XGNN_THREADS: must be >= 1, got {cap}")
    return max(1, min(n_jobs, cap))


def _parse_seed_range(text):
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ConfigError(f"--seeds: expected N..M, got {text!r}")
    try:
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"--seeds: expected N..M, got {text!r}") from None
    if hi < lo:
        raise ConfigError(f"--seeds: empty range {text!r}")
    return list(range(lo, hi + 1))


def run_sweep(resolved, out_dir, seeds):
    """Independent per-seed runs in seed_<n> subdirectories."""
    jobs = []
    for s in seeds:
        sub = dict(resolved)
        sub["train.seed"] = s
        jobs.append((sub, os.path.join(out_dir, f"seed_{s}")))
    workers = _worker_cap(len(jobs))
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        codes = list(pool.map(lambda job: run_one(*job), jobs))
    return max(codes, default=0)


# ---------------------------------------------------------------------------
# pencil tables


def pencil_rows(alpha, operator="biharmonic", want_complex=False, count=5):
    """(alpha, re_lambda, im_lambda, residual) rows for one opening angle."""
    if alpha <= 0 or alpha > 2 * math.pi:
        raise ConfigError(f"--alpha: must be in (0, 2*pi], got {alpha}")
    rows = []
    if operator == "laplace":
        for root in laplace_exponents(alpha, count):
            rows.append((alpha, root.xi, 0.0, abs(math.sin(root.xi * alpha))))
    else:
        for root in biharmonic_exponents(alpha, count, want_complex=want_complex):
            lam = root.value
            rows.append(
                (alpha, lam.real, lam.imag, abs(pencil_residual(lam, alpha)))
            )
    return rows


def write_pencil_csv(rows, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "pencil.csv")
    with open(path, "w") as f:
        f.write("alpha,re_lambda,im_lambda,residual\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    return path


# ---------------------------------------------------------------------------
# validation suites


def _suite_pencil():
    checks = []
    lam = laplace_exponents(1.5 * math.pi, 1)[0].xi
    checks.append(("laplace root at 3*pi/2 is 2/3", lam == 2 / 3, f"lambda = {lam}"))
    alpha = math.pi + math.atan(3.0)
    root = biharmonic_exponents(alpha, 1)[0]
    err = abs(root.xi - LAMBDA_REENTRANT)
    checks.append(
        ("pencil root at pi+arctan(3)", err < 1e-10, f"|defect| = {err:.2e}")
    )
    tip = 2.0 * math.atan(1.0 / 3.0)
    croot = biharmonic_exponents(tip, 1, want_complex=True)[0].value
    err = abs(croot - LAMBDA_EDDY)
    checks.append(
        ("complex pencil root at 2*arctan(1/3)", err < 1e-8, f"|defect| = {err:.2e}")
    )
    res = abs(pencil_residual(croot, tip))
    checks.append(("complex root residual", res < 1e-10, f"|p| = {res:.2e}"))
    return checks


def _corner_probe_points(corner, r_lo, r_hi, n, seed):
    rng = np.random.default_rng(seed)
    r = rng.uniform(r_lo, r_hi, n)
    th = rng.uniform(0.05, corner.alpha - 0.05, n) + corner.frame_rotation
    return np.column_stack(
        [corner.vertex[0] + r * np.cos(th), corner.vertex[1] + r * np.sin(th)]
    )


def _probe_term(term, pts, h):
    n_cols = len(corner_columns(term, pts[:1]))
    worst = {"momentum_x": 0.0, "momentum_y": 0.0, "divergence": 0.0}
    for j in range(n_cols):
        fields = {
            name: (lambda q, j=j, name=name: corner_columns(term, q)[j][name])
            for name in ("u1", "u2", "p")
        }
        res = pde_residual_probe(fields, "stokes", pts, h=h)
        for k in worst:
            worst[k] = max(worst[k], res[k])
    return worst


def _suite_fields():
    from .geometry import make_preset_domain

    checks = []
    cases = [
        ("stokes_noslip", "sector", complex(LAMBDA_REENTRANT), (0.3, 0.95)),
        ("stokes_moffatt", "wedge", LAMBDA_EDDY, (0.8, 2.5)),
        ("stokes_dirichlet4", "channel_cavity", complex(LAMBDA_REENTRANT), (0.3, 0.95)),
    ]
    for family, dom_name, mu, (r_lo, r_hi) in cases:
        dom = make_preset_domain(dom_name)
        corner = dom.corners[0]
        term = KnowledgeTerm(family, mu, corner)
        pts = _corner_probe_points(corner, r_lo, r_hi, 60, seed=2)
        res = _probe_term(term, pts, h=2e-3)
        mom = max(res["momentum_x"], res["momentum_y"])
        ok = mom < 1e-6 and res["divergence"] < 1e-8
        checks.append(
            (
                f"{family} satisfies the momentum and divergence equations",
                ok,
                f"momentum {mom:.2e}, divergence {res['divergence']:.2e}",
            )
        )
    dom = make_preset_domain("sector")
    corner = dom.corners[0]
    term = KnowledgeTerm("stokes_noslip", complex(LAMBDA_REENTRANT), corner)
    r = np.linspace(0.05, 0.95, 40)
    worst = 0.0
    for th in (0.0, corner.alpha):
        ray = np.column_stack(
            [
                corner.vertex[0] + r * np.cos(th + corner.frame_rotation),
                corner.vertex[1] + r * np.sin(th + corner.frame_rotation),
            ]
        )
        col = corner_columns(term, ray)[0]
        worst = max(worst, np.abs(col["u1"].val).max(), np.abs(col["u2"].val).max())
    checks.append(
        ("no-slip velocities vanish on both wedge edges", worst < 1e-8, f"max |u| = {worst:.2e}")
    )
    return checks


def _suite_gradients():
    checks = []
    for problem in ("poisson", "stokes"):
        worst = max(gradient_deviation(problem, seed) for seed in range(4))
        checks.append(
            (
                f"{problem} objective gradient matches finite differences",
                worst < 1e-5,
                f"worst deviation {worst:.2e}",
            )
        )
    return checks


def _suite_errors():
    from .fields import DerivativeBundle
    from .forms import FormSpec
    from .geometry import make_preset_domain
    from .presets import harmonic_mode
    from .quadrature import boundary_rule, interior_rule

    dom = make_preset_domain("unit_circle")
    spec = FormSpec("poisson", dom, interior_rule(dom, 32), boundary_rule(dom, 48))
    fine = FormSpec("poisson", dom, interior_rule(dom, 64), boundary_rule(dom, 96))
    exact = {"u": harmonic_mode(1)}

    def zero(pts):
        return {"u": DerivativeBundle.zeros(len(np.asarray(pts)))}

    tab = error_table(zero, exact, spec)
    target = math.sqrt(math.pi / 4)
    checks = [
        (
            "L2 error of the zero field against r sin(theta)",
            abs(tab["l2"] - target) < 1e-9,
            f"{tab['l2']:.12g} vs {target:.12g}",
        )
    ]
    fn = harmonic_mode(3)
    tab2 = error_table(lambda pts: {"u": fn(pts)}, {"u": fn}, spec)
    worst = max(tab2[k] for k in ("l2", "h1", "h2", "energy"))
    checks.append(("exact field has zero errors", worst < 1e-10, f"max {worst:.2e}"))
    tab3 = error_table(zero, exact, spec, fine_spec=fine)
    rel = max(
        abs(tab3[k] - tab3["fine"][k]) / tab3["fine"][k]
        for k in ("l2", "h1", "h2", "energy")
    )
    checks.append(
        ("training and fine rules agree", rel < 5e-3, f"max rel spread {rel:.2e}")
    )
    return checks


_SUITES = {
    "pencil": _suite_pencil,
    "fields": _suite_fields,
    "gradients": _suite_gradients,
    "errors": _suite_errors,
}


def run_suite(name):
    """Run one validation suite (or all); returns (checks, ok)."""
    names = list(_SUITES) if name == "all" else [name]
    checks = []
    for n in names:
        checks.extend(_SUITES[n]())
    return checks, all(ok for _, ok, _ in checks)


# ---------------------------------------------------------------------------
# entry points


def _cmd_run(args):
    overrides = {}
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    if args.tol is not None:
        overrides["train.tol"] = args.tol
    if args.max_basis is not None:
        overrides["train.max_basis"] = args.max_basis
    resolved = resolve_config(args.preset, args.config, overrides)
    out_dir = args.out or os.path.join("runs", resolved["preset"])
    if args.seeds:
        return run_sweep(resolved, out_dir, _parse_seed_range(args.seeds))
    return run_one(resolved, out_dir)


def _cmd_pencil(args):
    try:
        rows = pencil_rows(
            args.alpha,
            operator=args.operator,
            want_complex=getattr(args, "complex"),
            count=args.count,
        )
    except RuntimeError as exc:
        print(f"root search failed: {exc}", file=sys.stderr)
        return 1
    print(f"{'alpha':>12} {'re_lambda':>20} {'im_lambda':>20} {'residual':>12}")
    for alpha, re, im, res in rows:
        print(f"{alpha:>12.8g} {re:>20.12g} {im:>20.12g} {res:>12.3e}")
    if args.out:
        print(f"wrote {write_pencil_csv(rows, args.out)}")
    return 0


def _cmd_validate(args):
    checks, ok = run_suite(args.suite)
    for label, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {label} ({detail})")
    return 0 if ok else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="xgnn",
        description="Adaptive neural + singular-enrichment least-squares solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an adaptive run")
    p_run.add_argument("--preset", help="named problem setup")
    p_run.add_argument("--config", help="key = value configuration file")
    p_run.add_argument("--out", help="output directory (default runs/<preset>)")
    p_run.add_argument("--tol", type=float, help="stopping tolerance on eta")
    p_run.add_argument("--max-basis", type=int, dest="max_basis",
                       help="maximum number of basis functions")
    g = p_run.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int, help="training seed")
    g.add_argument("--seeds", help="seed sweep N..M in seed_<n> subdirectories")

    p_pencil = sub.add_parser("pencil", help="tabulate corner exponent roots")
    p_pencil.add_argument("--alpha", type=float, required=True,
                          help="interior opening angle in radians")
    p_pencil.add_argument("--complex", action="store_true",
                          help="search complex roots of the Stokes pencil")
    p_pencil.add_argument("--operator", choices=("biharmonic", "laplace"),
                          default="biharmonic")
    p_pencil.add_argument("--count", type=int, default=2)
    p_pencil.add_argument("--out", help="also write pencil.csv here")

    p_val = sub.add_parser("validate", help="run a built-in validation suite")
    p_val.add_argument("--suite", required=True,
                       choices=tuple(_SUITES) + ("all",))

    args = parser.parse_args(argv)
    handler = {"run": _cmd_run, "pencil": _cmd_pencil, "validate": _cmd_validate}
    try:
        return handler[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
