"""Command line entry point: ``eqgap synth|register|eval|sweep``.

Every command writes ``manifest.json`` into its output directory.  Exit
codes: 0 success, 1 numerical failure (non-convergence, Jacobian gate),
2 usage, configuration or input errors.

Registration config files are flat ``key = value`` lines; ``#`` starts a
comment.  Keys:

=================  ===============================================
beta               weight of the regularizer, in [0, 1]
similarity         mse | ncc
regularizer        physics | bending
youngs             Young's modulus of the regularization material
poisson            Poisson ratio, in [0, 0.5)
batch_size         points per iteration
iterations         number of Adam steps
learning_rate      Adam step size
seed               sampling seed (64-bit integer)
control_spacing    B-spline control spacing (normalized units) or auto
determinism        true | false
=================  ===============================================
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, engine, evaluation, field, image, synth
from .exceptions import (
    ConfigError,
    DegenerateBatch,
    EqGapError,
    NonConvergence,
    NonPositiveJacobian,
    SingularMatrix,
)
from .mechanics import lame_from_youngs

logger = logging.getLogger("eqgap")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

NUMERIC_ERRORS = (NonConvergence, NonPositiveJacobian, SingularMatrix, DegenerateBatch, FloatingPointError)

SWEEP_COLUMNS = [
    "beta", "regularizer", "status", "mean", "q1", "q3",
    "tre_mean", "tre_std", "min_jacobian", "wall_seconds", "message",
]


# -- config --------------------------------------------------------------------


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_spacing(text):
    return None if text.lower() in ("auto", "none", "") else float(text)


CONFIG_KEYS = {
    "beta": float,
    "similarity": str,
    "regularizer": str,
    "youngs": float,
    "poisson": float,
    "batch_size": int,
    "iterations": int,
    "learning_rate": float,
    "seed": int,
    "control_spacing": _parse_spacing,
    "determinism": _parse_bool,
}


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a dict of typed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} (allowed: {', '.join(CONFIG_KEYS)})")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), path)


def build_config(values):
    """RegistrationConfig from parsed config values (missing keys take defaults)."""
    values = dict(values)
    youngs = values.pop("youngs", 1.0)
    poisson = values.pop("poisson", 0.0)
    values["material"] = lame_from_youngs(youngs, poisson)
    return engine.RegistrationConfig(**values)


# -- manifests -------------------------------------------------------------------


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def image_hashes(path):
    """Hash a MetaImage header together with its data file."""
    out = {path: file_hash(path)}
    header = image.read_metaimage_header(path)
    data = header.get("ElementDataFile")
    if data:
        raw = os.path.join(os.path.dirname(os.path.abspath(path)), data)
        if os.path.exists(raw):
            out[raw] = file_hash(raw)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_manifest(out_dir, command, argv, config=None, seeds=None, inputs=None, outputs=None,
                   started=None, diagnostics=None, status="ok"):
    manifest = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config or {},
        "seeds": seeds or [],
        "inputs": inputs or {},
        "outputs": outputs or [],
        "wall_clock_seconds": None if started is None else time.time() - started,
        "diagnostics": diagnostics or {},
        "status": status,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path


# -- synth -----------------------------------------------------------------------


def parse_seeds(text):
    """``"3"``, ``"1,4,7"`` or ``"1..3"`` (inclusive)."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError(f"no seeds in {text!r}")
    return seeds


def cmd_synth(args, argv):
    started = time.time()
    seeds = parse_seeds(args.seed)
    out = _ensure_dir(args.out)
    outputs, diag = [], {}
    status, code = "ok", EXIT_OK
    for seed in seeds:
        path = os.path.join(out, f"scenario_{seed:03d}")
        try:
            sc = synth.generate_scenario(seed, n_elements=args.elements, order=args.order, resolution=args.resolution)
        except NonConvergence as exc:
            logger.error("seed %d: %s", seed, exc)
            diag[str(seed)] = {"error": str(exc), **exc.report}
            status, code = "failed", EXIT_NUMERIC
            continue
        synth.export_scenario(sc, path)
        outputs.append(path)
        diag[str(seed)] = {k: sc.meta[k] for k in ("draw_seed", "newton_iterations", "newton_residual", "mean_jacobian")}
        print(f"seed {seed}: {path} (mean J {sc.meta['mean_jacobian']:.4f})")
    config = {"resolution": args.resolution, "elements": args.elements, "order": args.order}
    write_manifest(out, "synth", argv, config, seeds, {}, outputs, started, diag, status)
    return code


# -- register --------------------------------------------------------------------


def _load_inputs(fixed_path, moving_path, mask_path):
    fixed = image.load_metaimage(fixed_path)
    moving = image.load_metaimage(moving_path)
    if fixed.d != moving.d:
        raise ConfigError(f"fixed is {fixed.d}D but moving is {moving.d}D")
    mask = None
    if mask_path:
        mask = image.load_mask(mask_path)
        if mask.dims != fixed.dims:
            raise ConfigError(f"{mask_path}: mask dims {mask.dims} differ from fixed image dims {fixed.dims}")
        image.mask_points(mask)  # fails early on an empty mask
    hashes = {}
    for p in (fixed_path, moving_path, mask_path):
        if p:
            hashes.update(image_hashes(p))
    return fixed, moving, mask, hashes


def run_registration(fixed, moving, mask, cfg, out):
    """Register, then write field.eqgf, history.csv and audit results into ``out``."""
    res = engine.register(fixed, moving, mask, cfg)
    field_path = os.path.join(out, "field.eqgf")
    hist_path = os.path.join(out, "history.csv")
    res.grid.save(field_path)
    engine.write_history_csv(res.history, hist_path)
    lo, hi = engine.normalized_bounds(fixed, res.coord_map)
    min_j, frac_bad = evaluation.domain_audit(res.grid, lo, hi)
    diag = dict(res.diagnostics)
    diag.update({"min_jacobian": min_j, "fraction_nonpositive_jacobian": frac_bad,
                 "final_loss": res.history[-1][3]})
    return res, [field_path, hist_path], diag


def cmd_register(args, argv):
    started = time.time()
    values = load_config(args.config)
    cfg = build_config(values)
    fixed, moving, mask, hashes = _load_inputs(args.fixed, args.moving, args.mask)
    hashes.update({args.config: file_hash(args.config)})
    out = _ensure_dir(args.out)
    try:
        res, outputs, diag = run_registration(fixed, moving, mask, cfg, out)
    except NUMERIC_ERRORS as exc:
        write_manifest(out, "register", argv, cfg.as_dict(), [cfg.seed], hashes, [], started,
                       {"error": str(exc)}, "failed")
        raise
    write_manifest(out, "register", argv, cfg.as_dict(), [cfg.seed], hashes, outputs, started, diag)
    print(f"final loss {diag['final_loss']:.6g}, min J {diag['min_jacobian']:.4f}")
    return EXIT_OK


# -- eval --------------------------------------------------------------------------


def _field_and_map(field_path, fixed_path):
    grid = field.ControlGrid.load(field_path)
    fixed = image.load_metaimage(fixed_path)
    if grid.d != fixed.d:
        raise ConfigError(f"{field_path} is {grid.d}D but {fixed_path} is {fixed.d}D")
    return grid, fixed, engine.normalize_coords(fixed)


def eval_tre(args, out):
    grid, fixed, cmap = _field_and_map(args.field, args.fixed)
    f_lms = image.load_landmarks(args.fixed_landmarks, fixed.dims)
    m_lms = image.load_landmarks(args.moving_landmarks, fixed.dims)
    report = evaluation.tre_snap(f_lms, m_lms, grid, fixed.spacing, fixed.origin, cmap,
                                 snap_to_voxel=not args.no_snap)
    tre_path = os.path.join(out, "tre.csv")
    with open(tre_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["landmark", "tre_mm"])
        for i, t in enumerate(report.tre):
            w.writerow([i + 1, repr(float(t))])
    curve_path = os.path.join(out, "tre_cumulative.csv")
    evaluation.write_cumulative_csv(report, curve_path)
    print(f"TRE {report.mean:.2f} ({report.std:.2f}) mm over {len(report.tre)} landmarks")
    inputs = {}
    for p in (args.field, args.fixed_landmarks, args.moving_landmarks):
        inputs[p] = file_hash(p)
    inputs.update(image_hashes(args.fixed))
    return [tre_path, curve_path], inputs, {"tre_mean": report.mean, "tre_std": report.std}, EXIT_OK


def eval_percent(args, out):
    sc_fixed = os.path.join(args.scenario, "fixed.mhd")
    grid, _, cmap = _field_and_map(args.field, sc_fixed)
    nodes, truth = synth.read_ground_truth(os.path.join(args.scenario, "ground_truth.csv"))
    mean, q1, q3, err = evaluation.percent_error(grid, nodes, truth, cmap)
    node_path = os.path.join(out, "percent_error.csv")
    with open(node_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x", "y", "error_percent"])
        for i, ((x, y), e) in enumerate(zip(nodes, err)):
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(e))])
    summary_path = os.path.join(out, "percent_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mean", "q1", "q3", "n_nodes"])
        w.writerow([repr(mean), repr(q1), repr(q3), len(err)])
    print(f"error {mean:.3f}% of unit length (q1 {q1:.3f}, q3 {q3:.3f})")
    inputs = {args.field: file_hash(args.field),
              os.path.join(args.scenario, "ground_truth.csv"): file_hash(os.path.join(args.scenario, "ground_truth.csv"))}
    return [node_path, summary_path], inputs, {"mean": mean, "q1": q1, "q3": q3}, EXIT_OK


def _image_extent(fixed):
    return fixed.origin, fixed.origin + (np.asarray(fixed.dims) - 1.0) * fixed.spacing


def eval_grid(args, out):
    grid, fixed, cmap = _field_and_map(args.field, args.fixed)
    if grid.d != 2:
        raise ConfigError("grid export is only defined for 2D fields")
    lower, upper = _image_extent(fixed)
    path = os.path.join(out, "grid_lines.csv")
    n = evaluation.warp_grid_export(grid, path, lower, upper, args.rows, args.cols, args.samples, cmap)
    print(f"{n} polylines written to {path}")
    inputs = {args.field: file_hash(args.field)}
    inputs.update(image_hashes(args.fixed))
    return [path], inputs, {"polylines": n}, EXIT_OK


def eval_audit(args, out):
    grid, fixed, cmap = _field_and_map(args.field, args.fixed)
    lo, hi = engine.normalized_bounds(fixed, cmap)
    n_axis = args.points_per_axis or (256 if grid.d == 2 else 64)
    min_j, frac = evaluation.domain_audit(grid, lo, hi, n_axis)
    path = os.path.join(out, "audit.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["min_jacobian", "fraction_nonpositive", "points"])
        w.writerow([repr(min_j), repr(frac), n_axis**grid.d])
    print(f"min J {min_j:.4f}, fraction J <= 0: {frac:.6f}")
    code = EXIT_NUMERIC if (args.gate and min_j <= 0) else EXIT_OK
    inputs = {args.field: file_hash(args.field)}
    inputs.update(image_hashes(args.fixed))
    return [path], inputs, {"min_jacobian": min_j, "fraction_nonpositive": frac}, code


EVALUATORS = {"tre": eval_tre, "percent": eval_percent, "grid": eval_grid, "audit": eval_audit}


def cmd_eval(args, argv):
    started = time.time()
    out = _ensure_dir(args.out)
    outputs, inputs, diag, code = EVALUATORS[args.what](args, out)
    status = "ok" if code == EXIT_OK else "gate_failed"
    write_manifest(out, f"eval {args.what}", argv, {}, [], inputs, outputs, started, diag, status)
    if code != EXIT_OK:
        logger.error("Jacobian gate failed: min J = %.4g", diag["min_jacobian"])
    return code


# -- sweep -----------------------------------------------------------------------


def parse_betas(text):
    return [float(b) for b in text.split(",") if b.strip()]


def _sweep_case(job):
    """Run one (beta, regularizer) case; never raises, returns a summary row."""
    beta, reg, values, paths, run_dir, argv = job
    started = time.time()
    row = {"beta": beta, "regularizer": reg, "status": "ok"}
    os.makedirs(run_dir, exist_ok=True)
    marker = os.path.join(run_dir, "FAILED")
    if os.path.exists(marker):
        os.remove(marker)
    try:
        cfg = build_config({**values, "beta": beta, "regularizer": reg})
        fixed, moving, mask, hashes = _load_inputs(paths["fixed"], paths["moving"], paths.get("mask"))
        res, outputs, diag = run_registration(fixed, moving, mask, cfg, run_dir)
        row["min_jacobian"] = diag["min_jacobian"]
        if paths.get("truth"):
            nodes, truth = synth.read_ground_truth(paths["truth"])
            row["mean"], row["q1"], row["q3"], _ = evaluation.percent_error(res.grid, nodes, truth, res.coord_map)
        if paths.get("fixed_landmarks"):
            f_lms = image.load_landmarks(paths["fixed_landmarks"], fixed.dims)
            m_lms = image.load_landmarks(paths["moving_landmarks"], fixed.dims)
            rep = evaluation.tre_snap(f_lms, m_lms, res.grid, fixed.spacing, fixed.origin, res.coord_map)
            row["tre_mean"], row["tre_std"] = rep.mean, rep.std
        diag.update({k: row[k] for k in ("mean", "q1", "q3", "tre_mean", "tre_std") if k in row})
        write_manifest(run_dir, "sweep-run", argv, cfg.as_dict(), [cfg.seed], hashes, outputs, started, diag)
    except Exception as exc:  # one failing case must not stop the sweep
        row["status"] = "failed"
        row["message"] = f"{type(exc).__name__}: {exc}"
        with open(marker, "w") as fh:
            fh.write(row["message"] + "\n")
        write_manifest(run_dir, "sweep-run", argv, {**values, "beta": beta, "regularizer": reg}, [], {}, [],
                       started, {"error": row["message"]}, "failed")
    row["wall_seconds"] = time.time() - started
    return row


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in SWEEP_COLUMNS})


def cmd_sweep(args, argv):
    started = time.time()
    values = load_config(args.config) if args.config else {}
    betas = parse_betas(args.betas)
    regs = [r.strip().lower() for r in args.regularizers.split(",") if r.strip()]
    if not betas or not regs:
        raise ConfigError("need at least one beta and one regularizer")
    for b in betas:  # validate every case up front
        for r in regs:
            build_config({**values, "beta": b, "regularizer": r})

    paths = {"fixed": args.fixed, "moving": args.moving, "mask": args.mask}
    if args.scenario:
        paths["fixed"] = os.path.join(args.scenario, "fixed.mhd")
        paths["moving"] = os.path.join(args.scenario, "moving.mhd")
        paths["truth"] = os.path.join(args.scenario, "ground_truth.csv")
    if not (paths["fixed"] and paths["moving"]):
        raise ConfigError("sweep needs --scenario or both --fixed and --moving")
    if bool(args.fixed_landmarks) != bool(args.moving_landmarks):
        raise ConfigError("--fixed-landmarks and --moving-landmarks go together")
    paths["fixed_landmarks"] = args.fixed_landmarks
    paths["moving_landmarks"] = args.moving_landmarks

    out = _ensure_dir(args.out)
    summary_path = os.path.join(out, "summary.csv")
    jobs = [
        (b, r, values, paths, os.path.join(out, f"{r}_beta{b:g}"), argv)
        for r in regs for b in betas
    ]
    rows = [{"beta": b, "regularizer": r, "status": "pending"} for b, r, *_ in jobs]
    write_summary(summary_path, rows)
    status = "ok"
    try:
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                for i, row in enumerate(pool.map(_sweep_case, jobs)):
                    rows[i] = row
                    write_summary(summary_path, rows)
        else:
            for i, job in enumerate(jobs):
                rows[i] = _sweep_case(job)
                write_summary(summary_path, rows)
    except KeyboardInterrupt:
        status = "interrupted"
        for r in rows:
            if r["status"] == "pending":
                r["status"] = "interrupted"
        write_summary(summary_path, rows)
    failed = [r for r in rows if r["status"] != "ok"]
    if failed and status == "ok":
        status = "partial"
    inputs = {}
    for p in (paths["fixed"], paths["moving"], paths.get("mask")):
        if p and os.path.exists(p):
            inputs.update(image_hashes(p))
    diag = {"runs": len(rows), "failed": len(failed)}
    write_manifest(out, "sweep", argv, {**values, "betas": betas, "regularizers": regs}, [values.get("seed", 0)],
                   inputs, [summary_path] + [j[4] for j in jobs], started, diag, status)
    for r in rows:
        extra = f"mean {r['mean']:.3f}%" if "mean" in r else r.get("message", "")
        print(f"{r['regularizer']:8s} beta={r['beta']:<6g} {r['status']:8s} {extra}")
    return EXIT_NUMERIC if failed else EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="eqgap", description="Equilibrium-gap regularized image registration.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic FE scenarios")
    s.add_argument("--seed", required=True, help="seed, list '1,2' or inclusive range '1..3'")
    s.add_argument("--out", required=True, help="output directory (one subdirectory per seed)")
    s.add_argument("--resolution", type=int, default=256, help="image size per axis")
    s.add_argument("--elements", type=int, default=120, help="elements per side of the FE mesh")
    s.add_argument("--order", type=int, choices=(1, 2), default=1, help="FE element order")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("register", help="register a moving image to a fixed image")
    r.add_argument("--fixed", required=True, help="fixed image (.mhd)")
    r.add_argument("--moving", required=True, help="moving image (.mhd)")
    r.add_argument("--mask", help="optional sampling mask on the fixed grid (.mhd)")
    r.add_argument("--config", required=True, help="key = value config file")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_register)

    e = sub.add_parser("eval", help="evaluate a registration field")
    esub = e.add_subparsers(dest="what", required=True)
    t = esub.add_parser("tre", help="snap-to-voxel target registration error")
    t.add_argument("--field", required=True, help="field file (.eqgf)")
    t.add_argument("--fixed", required=True, help="fixed image the field was estimated on (.mhd)")
    t.add_argument("--fixed-landmarks", required=True, help="fixed landmarks, 1-based voxel indices")
    t.add_argument("--moving-landmarks", required=True, help="moving landmarks, 1-based voxel indices")
    t.add_argument("--no-snap", action="store_true", help="skip rounding to voxel centres")
    t.add_argument("--out", required=True, help="output directory")
    pc = esub.add_parser("percent", help="error against a synthetic scenario's ground truth")
    pc.add_argument("--field", required=True, help="field file (.eqgf)")
    pc.add_argument("--scenario", required=True, help="scenario directory written by synth")
    pc.add_argument("--out", required=True, help="output directory")
    g = esub.add_parser("grid", help="export forward-warped grid lines (2D)")
    g.add_argument("--field", required=True, help="field file (.eqgf)")
    g.add_argument("--fixed", required=True, help="fixed image the field was estimated on (.mhd)")
    g.add_argument("--rows", type=int, default=11, help="horizontal lines")
    g.add_argument("--cols", type=int, default=11, help="vertical lines")
    g.add_argument("--samples", type=int, default=64, help="samples per grid segment")
    g.add_argument("--out", required=True, help="output directory")
    a = esub.add_parser("audit", help="Jacobian determinant audit over the image domain")
    a.add_argument("--field", required=True, help="field file (.eqgf)")
    a.add_argument("--fixed", required=True, help="fixed image the field was estimated on (.mhd)")
    a.add_argument("--points-per-axis", type=int, default=None, help="audit grid size (256 in 2D, 64 in 3D)")
    a.add_argument("--no-gate", dest="gate", action="store_false", help="report only; exit 0 even if J <= 0")
    a.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="run registrations over several beta values and regularizers")
    w.add_argument("--betas", default="0,0.001,0.01,0.1,0.5,0.9", help="comma-separated beta values")
    w.add_argument("--regularizers", default="bending,physics", help="comma-separated regularizers")
    w.add_argument("--scenario", help="synthetic scenario directory (adds percent-error columns)")
    w.add_argument("--fixed", help="fixed image (.mhd)")
    w.add_argument("--moving", help="moving image (.mhd)")
    w.add_argument("--mask", help="optional sampling mask (.mhd)")
    w.add_argument("--fixed-landmarks", help="fixed landmarks (adds TRE columns)")
    w.add_argument("--moving-landmarks", help="moving landmarks")
    w.add_argument("--config", help="key = value config file (beta and regularizer are overridden)")
    w.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    w.add_argument("--out", required=True, help="output directory")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except NUMERIC_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EqGapError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
