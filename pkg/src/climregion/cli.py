"""Command-line front end.

Exit codes: 0 success, 2 bad input or arguments, 3 computation failure.
Every command writes a JSON run manifest listing its arguments, input and
output digests, and timings.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, grid_store, pipeline, render, synth
from .clustering import RegionAssignment
from .errors import ClimRegionError, ComputationError, InputError, UnassignedCell
from .grid_store import VARIABLE_NAMES, ClimateVariable
from .pipeline import Method, PipelineConfig


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects what one invocation read and wrote, for the manifest."""

    def __init__(self, command: str, argv: list[str], args: argparse.Namespace):
        self.command = command
        self.argv = list(argv)
        self.config = {k: v for k, v in vars(args).items() if k != "func"}
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def read(self, path) -> str:
        path = str(path)
        self.inputs[path] = sha256(path)
        return path

    def write_text(self, path, text: str) -> None:
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.outputs.append(str(path))

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = round(now - self._t0, 6)

    def write_manifest(self, path) -> None:
        doc = {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "seed": self.config.get("seed"),
            "tool_version": __version__,
            "inputs": self.inputs,
            "outputs": {p: sha256(p) for p in self.outputs},
            "timings_s": self.timings,
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv_text(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_dataset(run: Run, path):
    try:
        return grid_store.ingest_csv(run.read(path))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _load_regions(run: Run, path, ds) -> RegionAssignment:
    try:
        with open(run.read(path), encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    lookup = {}
    try:
        for row in rows:
            key = (float(row["lat"]), float(row["lon"]) % 360.0)
            lookup[key] = int(row["region_id"])
    except (KeyError, TypeError, ValueError):
        raise InputError(f"{path}: expected columns lat,lon,region_id") from None
    labels = []
    for la, lo in zip(ds.lat, ds.lon):
        r = lookup.get((float(la), float(lo)))
        if r is None:
            raise UnassignedCell(f"cell ({la:g}, {lo:g}) has no region in {path}")
        labels.append(r)
    labels = np.array(labels)
    if labels.min() < 0:
        raise InputError("region ids must be non-negative")
    return RegionAssignment(labels, int(labels.max()) + 1)


def _regions_csv(ds, assignment) -> str:
    rows = [[repr(float(la)), repr(float(lo)), int(r)]
            for la, lo, r in zip(ds.lat, ds.lon, assignment.labels)]
    return _csv_text(rows, ("lat", "lon", "region_id"))


def _to_text(writer, *args) -> str:
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue()


def _horizon(args, ds) -> int:
    if getattr(args, "train_years", None) is not None:
        return ds.n_years - args.train_years
    return args.p


# --- commands ----------------------------------------------------------------

def cmd_validate(args, run: Run) -> int:
    ds = _load_dataset(run, args.input)
    y0, y1 = ds.year_range
    print(f"{ds.n_cells} cells, years {y0}-{y1}, {ds.n_records} records")
    flat = ds.values.reshape(-1, ds.values.shape[-1])
    for name, lo, hi in zip(VARIABLE_NAMES, flat.min(axis=0), flat.max(axis=0)):
        print(f"  {name:<20s} min {lo:.6g}  max {hi:.6g}")
    run.lap("total")
    if args.manifest:
        run.write_manifest(args.manifest)
    return 0


def cmd_cluster(args, run: Run) -> int:
    ds = _load_dataset(run, args.input)
    k_override = None if args.k == "auto" else int(args.k)
    cfg = PipelineConfig(
        method=Method.EM_SVR if args.method == "em" else Method.KM_LR,
        p=_horizon(args, ds), seed=args.seed, k_override=k_override,
    )
    assignment, model_doc = pipeline.regionalize(ds, cfg)
    run.lap("cluster")
    out = Path(args.out_dir)
    run.write_text(out / "model.json", _dump_json(model_doc))
    run.write_text(out / "regions.csv", _regions_csv(ds, assignment))
    print(f"{assignment.region_count} regions, sizes {assignment.sizes().tolist()}")
    run.lap("total")
    run.write_manifest(args.manifest or out / "manifest_cluster.json")
    return 0


def cmd_train(args, run: Run) -> int:
    ds = _load_dataset(run, args.input)
    assignment = _load_regions(run, args.regions, ds)
    cfg = PipelineConfig(
        method=Method.EM_SVR if args.model == "svr" else Method.KM_LR,
        target=args.target, p=args.p, seed=args.seed,
        include_year_feature=args.year_feature,
    )
    models = pipeline.build_region_models(ds, assignment, cfg)
    run.lap("train")
    out = Path(args.out_dir)
    doc = models.to_dict()
    doc.update({"p": cfg.p, "seed": cfg.seed, "method": cfg.method.value})
    run.write_text(out / "models.json", _dump_json(doc))
    n_train = ds.n_years - cfg.p
    rows = []
    for r in sorted(models.per_region):
        rep = models.cv_reports[r]
        hp = rep.chosen_hyperparams
        rows.append([r, n_train, _opt(hp.get("C")), _opt(hp.get("epsilon")), _opt(hp.get("gamma")),
                     repr(rep.mean_rmse), repr(rep.std_rmse)])
    run.write_text(out / "cv_report.csv", _csv_text(
        rows, ("region_id", "n_train", "C", "epsilon", "gamma", "cv_rmse_mean", "cv_rmse_std")))
    print(f"trained {len(models.per_region)} {args.model} models on {n_train} years each")
    run.lap("total")
    run.write_manifest(args.manifest or out / "manifest_train.json")
    return 0


def _opt(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_predict(args, run: Run) -> int:
    ds = _load_dataset(run, args.input)
    assignment = _load_regions(run, args.regions, ds)
    try:
        with open(run.read(args.models), encoding="utf-8") as fh:
            doc = json.load(fh)
        models = pipeline.RegionModels.from_dict(doc, assignment)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot load models from {args.models}: {exc}") from None
    _, test_years = grid_store.split_years(ds, args.p)
    preds = pipeline.predict_cells(ds, models, test_years)
    report = pipeline.evaluate(preds, assignment, doc.get("method", ""))
    run.lap("predict")
    out = Path(args.out_dir)
    run.write_text(out / "predictions.csv", _to_text(pipeline.write_predictions_csv, ds, preds))
    run.write_text(out / "report.csv", _to_text(pipeline.write_report_csv, report))
    print(f"overall RMSE {report.overall_rmse:.6g} over {len(preds)} predictions")
    run.lap("total")
    run.write_manifest(args.manifest or out / "manifest_predict.json")
    return 0


def cmd_compare(args, run: Run) -> int:
    ds = _load_dataset(run, args.input)
    common = dict(target=args.target, p=args.p, seed=args.seed)
    k = None if args.k == "auto" else int(args.k)
    comp = pipeline.compare_methods(
        ds,
        PipelineConfig(method=Method.EM_SVR, k_override=k, **common),
        PipelineConfig(method=Method.KM_LR, k_override=k, **common),
    )
    run.lap("compare")
    out = Path(args.out_dir)
    run.write_text(out / "comparison.csv", _to_text(pipeline.write_comparison_csv, comp))
    o = comp.overall
    print(f"overall RMSE: EM+SVR {o.em_svm_rmse:.6g}, KM+LR {o.km_lr_rmse:.6g}")
    run.lap("total")
    run.write_manifest(args.manifest or out / "manifest_compare.json")
    return 0


def cmd_render_map(args, run: Run) -> int:
    try:
        with open(run.read(args.values), encoding="utf-8", newline="") as fh:
            svg = render.render_csv(fh, args.field, title=args.title)
    except OSError as exc:
        raise InputError(f"cannot read {args.values}: {exc}") from None
    run.write_text(args.out, svg)
    run.lap("total")
    run.write_manifest(args.manifest or f"{args.out}.manifest.json")
    return 0


def cmd_synth(args, run: Run) -> int:
    if args.spec:
        spec = synth.load_spec(run.read(args.spec))
    elif args.preset == "sinusoidal":
        spec = synth.sinusoidal_spec()
    else:
        spec = synth.table1_spec()
    spec = synth.with_seed(spec, args.seed)
    labeled = synth.generate(spec)
    run.write_text(args.out, _to_text(grid_store.write_csv, labeled.dataset))
    if args.labels:
        run.write_text(args.labels, _to_text(synth.write_labels_csv, labeled))
    ds = labeled.dataset
    print(f"wrote {ds.n_cells} cells x {ds.n_years} years to {args.out}")
    run.lap("total")
    run.write_manifest(args.manifest or f"{args.out}.manifest.json")
    return 0


# --- parser ------------------------------------------------------------------

def _k_arg(text: str) -> str:
    if text == "auto":
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto' or a positive integer") from None
    if k < 1:
        raise argparse.ArgumentTypeError("k must be >= 1")
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="climregion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    targets = [v.value for v in ClimateVariable]

    p = sub.add_parser("validate", help="check a climate CSV and summarise it")
    p.add_argument("input")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("cluster", help="regionalize cell climatologies")
    p.add_argument("input")
    p.add_argument("--method", choices=("em", "kmeans"), default="em")
    p.add_argument("--k", type=_k_arg, default="auto")
    p.add_argument("--seed", type=int, required=True)
    horizon = p.add_mutually_exclusive_group()
    horizon.add_argument("--p", type=int, default=1, help="held-out final years (default 1)")
    horizon.add_argument("--train-years", type=int, help="leading years used for climatology")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="fit one regressor per region")
    p.add_argument("input")
    p.add_argument("regions")
    p.add_argument("--target", choices=targets, required=True)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--model", choices=("svr", "ols"), default="svr")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--year-feature", action="store_true", help="add the year as a feature")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_train)

    for name in ("predict", "predict-evaluate"):
        p = sub.add_parser(name, help="predict the held-out years and score them")
        p.add_argument("input")
        p.add_argument("regions")
        p.add_argument("models")
        p.add_argument("--p", type=int, default=1)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--manifest")
        p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="EM+SVR versus k-means+OLS per region")
    p.add_argument("input")
    p.add_argument("--target", choices=targets, required=True)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--k", type=_k_arg, default="auto")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("render-map", help="draw a CSV field as an SVG grid map")
    p.add_argument("values")
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_render_map)

    p = sub.add_parser("synth", help="generate a labelled synthetic dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="generator spec JSON")
    src.add_argument("--default-table1", action="store_true")
    src.add_argument("--preset", choices=("table1", "sinusoidal"))
    p.add_argument("--out", required=True)
    p.add_argument("--labels")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = Run(args.command, argv, args)
    try:
        return args.func(args, run)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ComputationError, ClimRegionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except UnicodeDecodeError as exc:
        print(f"error: input is not UTF-8: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
