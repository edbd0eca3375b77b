"""Command-line interface.

Exit codes: 0 success, 2 validation failure, 3 numeric budget exhausted,
4 usage error.  Every run writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import errors
from .io import manifest, read_csv, write_csv, write_json
from .model import Model, build_model, derived_model, load_model, model_to_json, validate_model

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_USAGE = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# argument parsing helpers

def parse_complex(tok: str) -> complex:
    t = tok.strip().replace(" ", "").replace("i", "j")
    t = re.sub(r"(^|[+-])j", r"\g<1>1j", t)
    try:
        return complex(t)
    except ValueError:
        raise UsageError(f"cannot parse {tok!r} as a complex number") from None


def parse_vector(s: str) -> np.ndarray:
    return np.array([parse_complex(t) for t in s.split(",")], dtype=complex)


def parse_reals(s: str) -> np.ndarray:
    try:
        return np.array([float(Fraction(t.strip())) for t in s.split(",")], dtype=float)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"cannot parse {s!r} as a list of reals") from None


def parse_plane(s: str | None):
    if s is None:
        return None
    rows = [parse_reals(r) for r in s.split(";")]
    if len(rows) != 2 or len(rows[0]) != len(rows[1]):
        raise UsageError("--plane needs two functionals of equal length separated by ';'")
    return np.array(rows)


def parse_beta(s: str) -> tuple:
    m = re.fullmatch(r"\s*(\d+)\s*/\s*(\d+)\s*:\s*(.+)", s)
    if not m:
        raise UsageError("--beta must look like p/q:<direction>")
    return int(m.group(1)), int(m.group(2)), m.group(3).strip()


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


class Run:
    """Bookkeeping for one invocation: inputs, seed, tolerances, outputs."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.out = Path(args.out)
        self.inputs = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",) and v is not None}
        self.files: dict = {}
        self.outputs: list = []
        self.tolerances: dict = {}
        self.seed = None
        self.spec_seed = None

    def model(self, path=None) -> Model:
        path = path or self.args.model
        if path is None:
            raise UsageError("--model is required")
        d = _read_json(path)
        self.files[str(path)] = _sha256(path)
        self.spec_seed = d.get("seed", self.spec_seed)
        return load_model(path)

    def need_seed(self) -> int:
        s = self.args.seed if getattr(self.args, "seed", None) is not None else self.spec_seed
        if s is None:
            raise UsageError("this subcommand is randomized: pass --seed or put a seed in the model file")
        self.seed = int(s)
        return self.seed

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def json(self, name: str, obj: dict) -> None:
        obj = dict(obj)
        obj.setdefault("tolerances", self.tolerances)
        obj.setdefault("seed", self.seed)
        write_json(self.path(name), obj)

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.path(name), header, rows, self.tolerances, self.seed)

    def finish(self) -> None:
        inputs = dict(self.inputs)
        inputs["files"] = self.files
        write_json(self.out / "manifest.json", manifest(self.command, inputs, self.seed, self.tolerances, self.outputs))


def _flow_params(args, **kw):
    from .flow import FlowParams
    return FlowParams(tol_ss=args.tol_ss, max_iter=args.budget, restarts=args.restarts, **kw).validate()


def _alpha(m: Model, s: str | None):
    if s is None:
        return None
    from .gradmap import AVector
    d = parse_reals(s)
    if len(d) == len(m.display_names):
        return AVector.from_display(m, d)
    raise errors.DimMismatch(f"--alpha has {len(d)} entries, display coordinates have {len(m.display_names)}")


def _orbit(m: Model, direction: str):
    from .gradmap import AVector, OrbitRealization, dual_standard_orbit, proj_point
    if direction in ("dual-standard", "dual_standard"):
        return dual_standard_orbit(m)
    d = _read_json(direction)
    om = build_model(d["orbit_model"])
    base = proj_point(om, parse_vector(d["base_point"]) if isinstance(d["base_point"], str) else
                      np.array([complex(*z) if isinstance(z, list) else z for z in d["base_point"]]))
    target = AVector.from_display(om, np.array([float(Fraction(str(t))) for t in d["target"]]))
    return OrbitRealization(om, base, target, int(d.get("sign", -1)))


# ---------------------------------------------------------------------------
# model

def cmd_model_build(args) -> int:
    run = Run(args, "model build")
    spec = _read_json(args.spec)
    run.files[args.spec] = _sha256(args.spec)
    m = build_model(spec)
    rep = validate_model(m)
    run.tolerances = {c.name: c.threshold for c in rep.checks}
    run.seed = spec.get("seed")
    run.json("model.json", model_to_json(m))
    run.json("diagnostics.json", rep.to_json())
    run.finish()
    print(rep.summary())
    print(f"rep_dim {m.rep_dim}, rank {m.rank}, {len(m.weights)} weights")
    return EXIT_OK


def cmd_model_validate(args) -> int:
    run = Run(args, "model validate")
    spec = _read_json(args.spec)
    run.files[args.spec] = _sha256(args.spec)
    try:
        m = load_model(args.spec)
    except (errors.NonCompatible, errors.NonCommutative) as exc:
        print(str(exc))
        out = {"passed": False, "error": type(exc).__name__, "message": str(exc)}
        run.json("diagnostics.json", out)
        run.finish()
        return EXIT_INVALID
    rep = validate_model(m)
    run.tolerances = {c.name: c.threshold for c in rep.checks}
    run.seed = spec.get("seed")
    print(rep.summary())
    print(f"max residual {rep.max_residual:.3e}: {'valid' if rep.passed else 'INVALID'}")
    run.json("diagnostics.json", rep.to_json())
    run.finish()
    return EXIT_OK if rep.passed else EXIT_INVALID


def cmd_model_derive(args) -> int:
    run = Run(args, "model derive")
    m = run.model(args.spec)
    for f in args.functor:
        m = derived_model(m, f)
    rep = validate_model(m)
    run.tolerances = {c.name: c.threshold for c in rep.checks}
    run.json("model.json", model_to_json(m))
    run.finish()
    print(f"derived {m.spec.get('functors')} rep_dim {m.rep_dim}, {len(m.weights)} weights")
    return EXIT_OK


# ---------------------------------------------------------------------------
# A_+(Y)

def _yspec(m: Model, y: str, samples: int, seed: int, run: Run):
    from .flow import YSpec
    if y == "whole":
        return YSpec("whole_space", budget=samples, seed=seed)
    if y.startswith("orbit:"):
        v = parse_vector(y[len("orbit:"):])
        if len(v) != m.rep_dim:
            raise errors.DimMismatch(f"point has {len(v)} entries, model has rep_dim {m.rep_dim}")
        return YSpec("orbit_closure", budget=samples, seed=seed, point=v)
    if y.startswith("cloud:"):
        path = y[len("cloud:"):]
        if not Path(path).exists():
            raise UsageError(f"no such file: {path}")
        run.files[path] = _sha256(path)
        return YSpec("cloud", budget=1, seed=seed, path=path)
    raise UsageError("--y must be whole, orbit:<point> or cloud:<file>")


def cmd_aplus(args) -> int:
    from .flow import compute_A_plus
    run = Run(args, "aplus")
    m = run.model()
    seed = run.need_seed()
    spec = _yspec(m, args.y, args.samples, seed, run)
    res = compute_A_plus(m, spec, probes=args.probes, convexity_tol=args.conv_tol, refine=not args.no_refine)
    run.tolerances = {"hull": res.polytope.tol, "convexity": args.conv_tol, "probes": args.probes}
    P = res.polytope_display()
    names = list(m.display_names)
    run.csv("cloud.csv", names, res.cloud_display)
    run.json("polytope.json", {"coordinates": names, "polytope": P.to_json(), "ortho": res.polytope.to_json()})
    run.json("verdict.json", res.verdict.to_json())
    run.finish()
    print(f"A+ vertices ({', '.join(names)}):")
    for v in P.vertices:
        print("  " + " ".join(f"{x:.6f}" for x in v))
    print("convex" if res.verdict.is_convex else "NOT convex", f"(max gap {res.verdict.max_gap:.3e})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# strata

def _frac_json(x: Fraction) -> list:
    return [x.numerator, x.denominator]


def cmd_strata_enumerate(args) -> int:
    from .strata import enumerate_strata
    run = Run(args, "strata enumerate")
    m = run.model()
    S = enumerate_strata(m)
    rows = [{"support": list(s.support_class), "codim": s.codim,
             "point": [_frac_json(t) for t in s.affine_point],
             "directions": [[_frac_json(t) for t in d] for d in s.affine_directions],
             "isotropy": [[_frac_json(t) for t in d] for d in s.isotropy]} for s in S]
    run.json("strata.json", {"strata": rows})
    run.finish()
    for r in rows:
        print(f"codim {r['codim']}: support {r['support']}")
    return EXIT_OK


def cmd_strata_decompose(args) -> int:
    from .strata import codim1_face_violations, decompose_P0, intersection_closure_violations
    run = Run(args, "strata decompose")
    m = run.model()
    d = decompose_P0(m)
    out = d.to_json()
    out["closure_violations"] = len(intersection_closure_violations(d))
    out["codim1_violations"] = len(codim1_face_violations(d))
    run.json("decomposition.json", out)
    run.finish()
    print(f"{len(d.chambers)} chambers, {len(d.faces)} faces, {len(d.sigma1)} codim-one spans")
    bad = out["closure_violations"] + out["codim1_violations"]
    return EXIT_OK if bad == 0 else EXIT_INVALID


def cmd_strata_facecheck(args) -> int:
    from .strata import decompose_P0, face_isotropy_check
    run = Run(args, "strata facecheck")
    m = run.model()
    seed = run.need_seed()
    rep = face_isotropy_check(m, decompose_P0(m), args.samples, seed)
    run.tolerances = {"exact": True}
    run.json("facecheck.json", rep.to_json())
    run.finish()
    print(f"{rep.n_samples} samples, {len(rep.violations)} violations")
    return EXIT_OK if rep.ok else EXIT_INVALID


# ---------------------------------------------------------------------------
# convexity

def _load_set(path: str, run: Run):
    from .polytope import Polytope
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    run.files[path] = _sha256(path)
    if path.endswith(".csv"):
        _, rows = read_csv(path)
        if len(rows) == 0:
            raise errors.EmptyCloud(f"{path} has no rows")
        return rows
    d = _read_json(path)
    if "polytopes" in d:
        return [Polytope.from_json(p) for p in d["polytopes"]]
    if "polytope" in d:
        return [Polytope.from_json(d["polytope"])]
    if "vertices" in d:
        return [Polytope.from_json(d)]
    raise UsageError(f"{path}: expected a CSV cloud or JSON with 'polytopes', 'polytope' or 'vertices'")


def cmd_convexity(args) -> int:
    from .polytope import union_convexity
    run = Run(args, "convexity")
    seed = run.need_seed()
    S = _load_set(args.input, run)
    v = union_convexity(S, args.tol, args.probes, seed)
    run.tolerances = {"convexity": args.tol, "probes": args.probes}
    run.json("verdict.json", v.to_json())
    run.finish()
    if v.is_convex:
        print(f"convex at tol {args.tol} ({v.probes} probes, max gap {v.max_gap:.3e})")
    else:
        w = v.witness
        print(f"not convex: max gap {v.max_gap:.3e}" + (f", witness ball at {w.center} radius {w.radius:.6f}" if w else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# flows

def _point(m: Model, s: str) -> np.ndarray:
    v = parse_vector(s)
    if len(v) != m.rep_dim:
        raise errors.DimMismatch(f"point has {len(v)} entries, model has rep_dim {m.rep_dim}")
    return v


def cmd_semistable(args) -> int:
    from .flow import semistable_test
    run = Run(args, "semistable")
    m = run.model()
    seed = run.need_seed()
    prm = _flow_params(args)
    v = _point(m, args.point)
    alpha = _alpha(m, args.alpha)
    shift = None
    if args.beta:
        p, q, direction = parse_beta(args.beta)
        shift = (p, q, _orbit(m, direction))
    ver = semistable_test(m, v, alpha, shift, prm, seed)
    run.tolerances = {"tol_ss": prm.tol_ss, "budget": prm.max_iter}
    run.json("verdict.json", ver.to_json())
    run.finish()
    print(ver.label)
    return EXIT_BUDGET if ver.label.startswith("inconclusive") else EXIT_OK


def cmd_flow(args) -> int:
    from .flow import norm_square_flow
    run = Run(args, "flow")
    m = run.model()
    seed = run.need_seed()
    prm = _flow_params(args)
    res = norm_square_flow(m, _point(m, args.point), _alpha(m, args.alpha), prm, seed)
    run.tolerances = {"tol_ss": prm.tol_ss, "budget": prm.max_iter}
    run.json("flow.json", res.to_json())
    run.csv("trajectory.csv", ["step", "f"], [(i, f) for i, f in enumerate(res.trajectory)])
    run.finish()
    print(f"{res.status} after {res.iterations} steps, |mu - alpha|^2 = {res.final_value:.3e}")
    return EXIT_BUDGET if res.status == "budget_exhausted" else EXIT_OK


def cmd_nullcone(args) -> int:
    from .flow import nullcone_numeric, nullcone_torus_exact
    run = Run(args, "nullcone")
    m = run.model()
    v = _point(m, args.vector)
    ver = nullcone_numeric(m, v, args.tol_null, args.tol_ss, args.budget)
    out = ver.to_json()
    if m.kind == "torus":
        out["exact_null"] = bool(nullcone_torus_exact(m, v))
    run.tolerances = {"tol_null": args.tol_null, "tol_ss": args.tol_ss, "budget": args.budget}
    run.json("verdict.json", out)
    run.finish()
    print(ver.verdict + (f" (exact: {'null' if out['exact_null'] else 'not null'})" if "exact_null" in out else ""))
    return EXIT_BUDGET if ver.verdict == "inconclusive" else EXIT_OK


# ---------------------------------------------------------------------------
# properties

def cmd_props(args) -> int:
    from .flow import kostant_check
    from .gradmap import grad_consistency, random_proj_point, segre_residual
    run = Run(args, f"props {args.prop}")
    m = run.model()
    seed = run.need_seed()
    if args.prop == "kostant":
        rep = kostant_check(m, args.samples, seed)
        run.tolerances = {"threshold": rep.threshold}
        out, ok = rep.to_json(), rep.violations == 0
        print(f"{rep.n} triples, min gap {rep.min_gap:.3e}, {rep.violations} violations")
    elif args.prop == "gradcheck":
        rep = grad_consistency(m, args.samples, seed)
        run.tolerances = {"max_residual": 1e-5, "step": rep.step}
        out, ok = rep.to_json(), rep.max_residual < 1e-5
        print(f"{rep.n_samples} samples, max residual {rep.max_residual:.3e}")
    else:
        m2 = run.model(args.model2) if args.model2 else m
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(args.samples):
            v = random_proj_point(m, rng).rep_vector
            w = random_proj_point(m2, rng).rep_vector
            worst = max(worst, segre_residual(m, m2, v, w))
        run.tolerances = {"max_residual": 1e-9}
        out, ok = {"n": args.samples, "max_residual": worst}, worst < 1e-9
        print(f"{args.samples} pairs, max residual {worst:.3e}")
    run.json("props.json", out)
    run.finish()
    return EXIT_OK if ok else EXIT_INVALID


# ---------------------------------------------------------------------------
# plot

def cmd_plot(args) -> int:
    from .plot import build_plot, decomposition_walls, emit_plot, extent, wall_segments
    run = Run(args, "plot")
    m = run.model() if args.model else None
    polys = []
    for path in args.polytope or []:
        S = _load_set(path, run)
        polys += [p.vertices for p in S] if isinstance(S, list) else []
    cloud = None
    if args.cloud:
        if not Path(args.cloud).exists():
            raise UsageError(f"no such file: {args.cloud}")
        run.files[args.cloud] = _sha256(args.cloud)
        _, cloud = read_csv(args.cloud)
    weights = None
    walls = []
    if m is not None:
        if args.strata:
            from .strata import decompose_P0
            d = decompose_P0(m)
            for c in d.chambers:
                V = np.array([m.display(m.rational_to_ortho([float(t) for t in v])) for v in c.vertices])
                polys.append(V)
            walls += decomposition_walls(m, d)
        weights = np.array([m.display(w) for w in m.weights_ortho])
        walls += wall_segments(m, extent(polys, cloud, weights))
    data = build_plot(polys, cloud, weights, walls, parse_plane(args.plane))
    run.tolerances = {"format": "%.17g"}
    emit_plot(data, run.path("plot.svg"), run.path("plot.csv"), run.tolerances, run.seed)
    run.finish()
    print(f"{len(data.polygons)} polygons, {sum(len(p) for _, p in data.points)} points, {len(data.walls)} walls")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gradpoly", description="Gradient maps, A+ polytopes, strata and flows.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(p, model=True, seed=False):
        if model:
            p.add_argument("--model", help="model spec or persisted model (JSON)")
        if seed:
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (default: current directory)")
        p.add_argument("--workers", type=int, default=1, help="worker count (runs are single-threaded)")

    def flowopts(p, budget=100_000):
        p.add_argument("--tol-ss", type=float, default=1e-5)
        p.add_argument("--budget", type=int, default=budget)
        p.add_argument("--restarts", type=int, default=8)

    mp = sub.add_parser("model", help="build, validate or derive models")
    msub = mp.add_subparsers(dest="action", parser_class=_Parser, required=True)
    p = msub.add_parser("build")
    p.add_argument("spec")
    common(p, model=False)
    p.set_defaults(func=cmd_model_build)
    p = msub.add_parser("validate")
    p.add_argument("spec")
    common(p, model=False)
    p.set_defaults(func=cmd_model_validate)
    p = msub.add_parser("derive")
    p.add_argument("spec")
    p.add_argument("--functor", action="append", required=True, help="sym:k, ext:k, dual, conj or a JSON object")
    common(p, model=False)
    p.set_defaults(func=cmd_model_derive)

    p = sub.add_parser("aplus", help="sample A+(Y), hull it and test convexity")
    common(p, seed=True)
    p.add_argument("--y", default="whole", help="whole | orbit:<point> | cloud:<file>")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--probes", type=int, default=2000)
    p.add_argument("--conv-tol", type=float, default=1e-2)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(func=cmd_aplus)

    sp = sub.add_parser("strata", help="strata, decomposition of P0, face isotropy")
    ssub = sp.add_subparsers(dest="action", parser_class=_Parser, required=True)
    p = ssub.add_parser("enumerate")
    common(p)
    p.set_defaults(func=cmd_strata_enumerate)
    p = ssub.add_parser("decompose")
    common(p)
    p.set_defaults(func=cmd_strata_decompose)
    p = ssub.add_parser("facecheck")
    common(p, seed=True)
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_strata_facecheck)

    p = sub.add_parser("convexity", help="convexity verdict for a cloud or a union of polytopes")
    common(p, model=False, seed=True)
    p.add_argument("--input", required=True, help="CSV point cloud or JSON polytopes")
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--probes", type=int, default=2000)
    p.set_defaults(func=cmd_convexity)

    p = sub.add_parser("semistable", help="alpha-semistability by norm-square flow")
    common(p, seed=True)
    p.add_argument("--point", required=True, help="comma-separated complex entries, e.g. 1,i")
    p.add_argument("--alpha", default=None, help="target in display coordinates")
    p.add_argument("--beta", default=None, help="p/q:<direction>; direction is dual-standard or an orbit JSON file")
    flowopts(p)
    p.set_defaults(func=cmd_semistable)

    p = sub.add_parser("nullcone", help="null-cone test by the vector-space flow")
    common(p)
    p.add_argument("--vector", required=True)
    p.add_argument("--tol-null", type=float, default=1e-6)
    p.add_argument("--tol-ss", type=float, default=1e-5)
    p.add_argument("--budget", type=int, default=100_000)
    p.set_defaults(func=cmd_nullcone)

    p = sub.add_parser("flow", help="run the norm-square flow and record its trajectory")
    common(p, seed=True)
    p.add_argument("--point", required=True)
    p.add_argument("--alpha", default=None)
    flowopts(p)
    p.set_defaults(func=cmd_flow)

    pp = sub.add_parser("props", help="property checks")
    psub = pp.add_subparsers(dest="prop", parser_class=_Parser, required=True)
    for name, n in (("kostant", 10_000), ("gradcheck", 500), ("segre", 100)):
        p = psub.add_parser(name)
        common(p, seed=True)
        p.add_argument("--samples", type=int, default=n)
        if name == "segre":
            p.add_argument("--model2", default=None, help="second model of the same group")
        p.set_defaults(func=cmd_props)

    p = sub.add_parser("plot", help="SVG and CSV of polytopes, clouds, weights and chamber walls")
    common(p)
    p.add_argument("--polytope", action="append", help="polytope JSON (repeatable)")
    p.add_argument("--cloud", default=None, help="CSV of real coordinates")
    p.add_argument("--strata", action="store_true", help="draw the chambers of the decomposition of P0")
    p.add_argument("--plane", default=None, help="two functionals 'a1,a2,...;b1,b2,...' (needed in dimension > 2)")
    p.set_defaults(func=cmd_plot)
    return ap


_USAGE_ERRORS = (UsageError, errors.ParamError, errors.DimMismatch, errors.PlaneDegenerate)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.out is None:
        args.out = "."
    if getattr(args, "workers", 1) < 1:
        print("gradpoly: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"gradpoly: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except errors.GradpolyError as exc:
        print(f"gradpoly: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (KeyError, TypeError, ValueError) as exc:
        print(f"gradpoly: invalid input: {exc!r}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
