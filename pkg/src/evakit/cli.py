"""Command-line entry point.

Exit codes: 0 success, 1 input or usage error, 2 internal invariant violation.
Every CSV output starts with ``#`` comment lines echoing the tool version,
resolved config and seed; other outputs get a ``<out>.meta.json`` sidecar.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from ._fileio import atomic_write_bytes, atomic_write_text
from .analysis import (
    InitCondition,
    Sample,
    collect_states,
    image_seed,
    init_sweep,
    pca_trajectories,
    run_perturbation_study,
)
from .config import ToolConfig, load_config
from .core import EvakitError, ReferenceFrame, Scanpath, dumps_jsonl, read_jsonl
from .eva import init_weights, load_weights, rollout
from .gcs import corpus_gcs, gcs
from .ingest import (
    HashIndex,
    build_index,
    fit_length,
    idt_fixations,
    match_image,
    read_image,
    read_manifest,
    read_trace,
)
from .metrics import METRIC_NAMES, density_grid, dumps_grid, raw_metrics
from .policies import Policy, center_fixed, corner_fixed, random_uniform, shuffled
from .synth import synth_corpus

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")
RESIDUAL_TOL = 1e-12


class InvariantViolation(Exception):
    """Internal consistency check failed; exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- output helpers -------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def _header(cfg: ToolConfig, command: str, extra: dict | None = None) -> dict:
    head = {"tool": "evakit", "version": __version__, "command": command, "seed": cfg.seed, "config": cfg.to_dict()}
    if extra:
        head.update(extra)
    return head


def write_csv(path, rows: list[dict], head: dict, columns: list[str] | None = None) -> None:
    buf = io.StringIO()
    buf.write(f"# evakit {head['version']} {head['command']}\n")
    buf.write("# " + json.dumps(head, sort_keys=True) + "\n")
    columns = columns or (list(rows[0]) if rows else [])
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    atomic_write_text(path, buf.getvalue())


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_sidecar(out, head: dict, summary: dict | None = None) -> None:
    obj = dict(head)
    if summary is not None:
        obj["summary"] = summary
    write_json(f"{out}.meta.json", obj)


def _pmap(fn, items, jobs: int):
    """Ordered map, optionally over worker processes."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# --- shared input handling ------------------------------------------------------------


def _config(args) -> ToolConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "frame", None):
        cfg = replace(cfg, frame=ReferenceFrame.parse(args.frame))
    return cfg


def _pair_by_id(model: list[Scanpath], human: list[Scanpath]) -> list[tuple[Scanpath, Scanpath]]:
    hm = {}
    for h in human:
        if h.image_id in hm:
            raise EvakitError(f"duplicate human scanpath for {h.image_id!r}")
        hm[h.image_id] = h
    mm = {m.image_id: m for m in model}
    if len(mm) != len(model):
        raise EvakitError("duplicate model scanpath ids")
    missing = sorted(set(mm) - set(hm))
    if missing:
        raise EvakitError(f"no human scanpath for {missing[:5]}")
    return [(mm[k], hm[k]) for k in sorted(mm)]


def _load_samples(manifest) -> list[Sample]:
    out = []
    for r in read_manifest(manifest):
        path = r.get("original_file") or r.get("image_file")
        if not path:
            raise EvakitError(f"{manifest}: rows need original_file or image_file")
        try:
            label = int(r["label"])
        except (KeyError, ValueError) as exc:
            raise EvakitError(f"{manifest}: bad or missing label for {path}") from exc
        out.append(Sample(r.get("image_id") or Path(path).stem, read_image(path), label))
    if not out:
        raise EvakitError(f"{manifest}: empty manifest")
    return sorted(out, key=lambda s: s.image_id)


def _weights(args, cfg: ToolConfig):
    if args.weights:
        return load_weights(args.weights), str(args.weights)
    return init_weights(cfg.dims, cfg.seed), f"random:{cfg.seed}"


# --- subcommands ----------------------------------------------------------------------


def _extract_one(row, frame, radius, length):
    img = read_image(row["image_file"])
    trace = read_trace(row["trace_file"])
    trace = trace.scaled(frame.width / img.width, frame.height / img.height)
    fix, padded = fit_length(idt_fixations(trace, radius), length)
    image_id = row.get("image_id") or Path(row["image_file"]).stem
    return Scanpath(image_id, "human", frame, tuple(fix), padded=padded)


def cmd_extract_fixations(args):
    cfg = _config(args)
    rows = read_manifest(args.manifest)
    fn = partial(_extract_one, frame=cfg.frame, radius=args.radius, length=args.length)
    paths = sorted(_pmap(fn, rows, args.jobs), key=lambda s: s.image_id)
    atomic_write_text(args.out, dumps_jsonl(paths))
    head = _header(cfg, "extract-fixations", {"radius": args.radius, "length": args.length})
    write_sidecar(args.out, head, {"n_scanpaths": len(paths), "n_padded": sum(p.padded for p in paths)})


def cmd_align(args):
    cfg = _config(args)
    index_dir = Path(args.index)
    if (index_dir / "index.csv").exists():
        index = HashIndex.load(index_dir / "index.csv")
    else:
        labels = {}
        if (index_dir / "labels.csv").exists():
            with open(index_dir / "labels.csv", newline="", encoding="utf-8") as fh:
                labels = {r["image_id"]: r["label"] for r in csv.DictReader(fh)}
        index = build_index(index_dir, labels)
    if args.save_index:
        index.save(args.save_index)
    queries = sorted(p for p in Path(args.queries).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not queries:
        raise EvakitError(f"no images in {args.queries}")
    rows = []
    for q in queries:
        m = match_image(read_image(q), index)
        rows.append({"query": q.name, "image_id": m.image_id, "distance": m.distance, "exact": m.exact, "label": m.label or ""})
    write_csv(args.out, rows, _header(cfg, "align", {"index_size": len(index)}))


def _metrics_one(pair, cfg):
    model, human = pair
    dens = density_grid([human], human.frame, cfg.metric.nss_sigma)
    return {"image_id": human.image_id, **raw_metrics(model, human, dens, cfg.metric).as_dict()}


def cmd_metrics(args):
    cfg = _config(args)
    pairs = _pair_by_id(read_jsonl(args.model), read_jsonl(args.human))
    rows = _pmap(partial(_metrics_one, cfg=cfg), pairs, args.jobs)
    write_csv(args.out, rows, _header(cfg, "metrics"), ["image_id", *METRIC_NAMES])


def _gcs_one(pair, cfg):
    model, human = pair
    return gcs(model, human, cfg=cfg.gcs)


def cmd_gcs(args):
    cfg = _config(args)
    over = {k: v for k, v in (("lam", args.lam), ("tau", args.tau)) if v is not None}
    if over:
        cfg = replace(cfg, gcs=replace(cfg.gcs, **over))
    pairs = _pair_by_id(read_jsonl(args.model), read_jsonl(args.human))
    reports = _pmap(partial(_gcs_one, cfg=cfg), pairs, args.jobs)
    for r in reports:
        if not abs(r.decomposition_residual()) <= RESIDUAL_TOL:
            raise InvariantViolation(f"GCS decomposition residual {r.decomposition_residual()!r} for {r.image_id}")
    head = _header(cfg, "gcs")
    write_csv(args.out, [r.row() for r in reports], head)
    write_sidecar(args.out, head, {"n_images": len(reports), "corpus_gcs": corpus_gcs(reports)})


def cmd_density(args):
    cfg = _config(args)
    sigma = args.sigma if args.sigma is not None else cfg.metric.nss_sigma
    paths = read_jsonl(args.human)
    groups: dict[str, list[Scanpath]] = {}
    for p in paths:
        groups.setdefault(p.image_id, []).append(p)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for image_id in sorted(groups):
        grid = density_grid(groups[image_id], groups[image_id][0].frame, sigma)
        atomic_write_bytes(out / f"{image_id}.dgrid", dumps_grid(grid))
    write_json(out / "density.meta.json", {**_header(cfg, "density", {"sigma": sigma}), "images": sorted(groups)})


def cmd_perturb(args):
    cfg = _config(args)
    policy = Policy.parse(args.policy)
    if policy.kind == "predicted":
        raise EvakitError("perturb needs a non-predicted policy")
    out = []
    for sp in read_jsonl(args.inp):
        n, seed = len(sp), image_seed(cfg.seed, sp.image_id)
        if policy.kind == "center_fixed":
            new = center_fixed(sp.frame, n)
        elif policy.kind == "corner_fixed":
            new = corner_fixed(sp.frame, n, policy.corner, inset=cfg.gcs.corner_inset)
        elif policy.kind == "random_uniform":
            new = random_uniform(sp.frame, n, seed)
        else:
            new = shuffled(sp, seed)
        out.append(sp.with_fixations(new.fixations))
    atomic_write_text(args.out, dumps_jsonl(out))
    write_sidecar(args.out, _header(cfg, "perturb", {"policy": str(policy)}))


def _rollout_one(sample, w, cfg, policy, with_label):
    return rollout(sample.image, w, cfg.glimpse, cfg.variance, policy, image_seed(cfg.seed, sample.image_id),
                   sample.label if with_label else None, image_id=sample.image_id, keep_states=False)


def cmd_rollout(args):
    cfg = _config(args)
    if args.steps is not None:
        cfg = replace(cfg, glimpse=replace(cfg.glimpse, steps=args.steps))
    w, wsrc = _weights(args, cfg)
    policy = str(Policy.parse(args.policy))
    samples = _load_samples(args.manifest)
    traces = _pmap(partial(_rollout_one, w=w, cfg=cfg, policy=policy, with_label=args.use_labels), samples, args.jobs)
    for tr in traces:
        if len(tr) != cfg.glimpse.steps:
            raise InvariantViolation(f"rollout for {tr.image_id} has {len(tr)} steps")
    atomic_write_text(args.out, "".join(tr.to_json() + "\n" for tr in traces))
    if args.scanpaths:
        paths = [tr.scanpath(cfg.frame) for tr in traces]
        atomic_write_text(args.scanpaths, dumps_jsonl(paths))
    acc = float(np.mean([tr.y_hat == s.label for tr, s in zip(traces, samples)]))
    write_sidecar(args.out, _header(cfg, "rollout", {"weights": wsrc, "policy": policy}),
                  {"n_images": len(traces), "accuracy": acc})


def cmd_perturb_study(args):
    cfg = _config(args)
    w, wsrc = _weights(args, cfg)
    samples = _load_samples(args.manifest)
    rep = run_perturbation_study(samples, w, cfg.glimpse, args.policies, cfg.seed, cfg.variance)
    head = _header(cfg, "perturb-study", {"weights": wsrc})
    write_csv(args.out, rep.rows(), head)
    write_sidecar(args.out, head, {"accuracy": rep.accuracy, "delta": rep.delta, "n_images": rep.n_images})


def cmd_pca(args):
    cfg = _config(args)
    w, wsrc = _weights(args, cfg)
    samples = _load_samples(args.manifest)
    states, labels = collect_states(samples, w, cfg.glimpse, args.layer, cfg.seed, cfg.variance)
    res = pca_trajectories(states, labels)
    rows = [{"label": c, "step": t, "pc1": p[0], "pc2": p[1]} for (c, t), p in sorted(res.projected.items())]
    head = _header(cfg, "pca", {"weights": wsrc, "layer": args.layer})
    write_csv(args.out, rows, head)
    write_sidecar(args.out, head, {"explained_variance": res.explained_variance.tolist(),
                                   "components": res.components.tolist()})


DEFAULT_CONDITIONS = (
    InitCondition("center"),
    InitCondition("center_sigma0", init_sigma=0.0),
    InitCondition("offcenter", init_fixation=(0.25, 0.25)),
    InitCondition("random_states", init_states="random"),
)


def _conditions(path) -> list[InitCondition]:
    if not path:
        return list(DEFAULT_CONDITIONS)
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return [InitCondition(**{k: tuple(v) if isinstance(v, list) else v for k, v in c.items()}) for c in data]
    except TypeError as exc:
        raise EvakitError(f"bad init conditions: {exc}") from exc


def cmd_init_sweep(args):
    cfg = _config(args)
    w, wsrc = _weights(args, cfg)
    samples = _load_samples(args.manifest)
    conds = _conditions(args.conditions)
    # ``init_fixation`` in conditions is given as a fraction of the image size
    frame = samples[0].image.frame
    conds = [replace(c, init_fixation=None if c.init_fixation is None else
                     (c.init_fixation[0] * frame.width, c.init_fixation[1] * frame.height)) for c in conds]
    rep = init_sweep(samples, w, cfg.glimpse, conds, cfg.seed, cfg.variance, cfg.gcs.coverage_grid)
    rows = [vars(r) for r in rep.rows]
    head = _header(cfg, "init-sweep", {"weights": wsrc})
    write_csv(args.out, rows, head)
    write_sidecar(args.out, head, {"conditions": [repr(c) for c in conds]})


def cmd_synth(args):
    rows = synth_corpus(args.seed if args.seed is not None else load_config(args.config).seed, args.n, args.out,
                        gaze_size=args.gaze_size)
    print(f"wrote {len(rows)} images to {args.out}")


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="global seed (default: config, then $SCANPATH_SEED, then 1)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes; output order is fixed")
    common.add_argument("--frame", help="reference frame, e.g. 224x224")

    p = _Parser(prog="evakit", description="Scanpath metrics, GCS and hard-attention rollouts.")
    p.add_argument("--version", action="version", version=f"evakit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("extract-fixations", parents=[common], help="gaze traces -> fixed-length scanpaths")
    s.add_argument("--manifest", required=True, help="CSV with trace_file,image_file[,image_id]")
    s.add_argument("--radius", type=float, default=15.0)
    s.add_argument("--length", type=int, default=12)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_extract_fixations)

    s = sub.add_parser("align", parents=[common], help="match query images to an index by pHash")
    s.add_argument("--index", required=True, help="directory of originals or containing index.csv")
    s.add_argument("--queries", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--save-index")
    s.set_defaults(fn=cmd_align)

    s = sub.add_parser("metrics", parents=[common], help="raw DTW, ScanMatch, NSS, AUC per image")
    s.add_argument("--model", required=True)
    s.add_argument("--human", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_metrics)

    s = sub.add_parser("gcs", parents=[common], help="per-image Gaze Consistency Score reports")
    s.add_argument("--model", required=True)
    s.add_argument("--human", required=True)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gcs)

    s = sub.add_parser("density", parents=[common], help="fixation density grids, one file per image")
    s.add_argument("--human", required=True)
    s.add_argument("--sigma", type=float)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(fn=cmd_density)

    s = sub.add_parser("perturb", parents=[common], help="replace scanpaths by a reference policy")
    s.add_argument("--policy", required=True, help="center | corner:tr | random | shuffled")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_perturb)

    def eva_args(s):
        s.add_argument("--manifest", required=True, help="CSV with image_id, original_file or image_file, label")
        s.add_argument("--weights", help="weight file (default: random weights from --seed)")
        s.add_argument("--out", required=True)

    s = sub.add_parser("rollout", parents=[common], help="run the attention model on images")
    eva_args(s)
    s.add_argument("--policy", default="predicted")
    s.add_argument("--steps", type=int)
    s.add_argument("--use-labels", action="store_true", help="drive the sigma controller with label errors")
    s.add_argument("--scanpaths", help="also write model scanpaths (JSONL) in --frame")
    s.set_defaults(fn=cmd_rollout)

    s = sub.add_parser("perturb-study", parents=[common], help="accuracy under gaze-policy overrides")
    eva_args(s)
    s.add_argument("--policies", nargs="+", default=["predicted", "center", "corner:tr", "random", "shuffled"])
    s.set_defaults(fn=cmd_perturb_study)

    s = sub.add_parser("pca", parents=[common], help="PCA of class-mean hidden-state trajectories")
    eva_args(s)
    s.add_argument("--layer", choices=("lower", "upper"), default="upper")
    s.set_defaults(fn=cmd_pca)

    s = sub.add_parser("init-sweep", parents=[common], help="sensitivity to initial fixation, sigma and state")
    eva_args(s)
    s.add_argument("--conditions", help="JSON list of conditions; init_fixation as image fractions")
    s.set_defaults(fn=cmd_init_sweep)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic test corpus")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--gaze-size", type=int, default=1024)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return 1
    if getattr(args, "jobs", 1) < 1:
        print("evakit: error: --jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        args.fn(args)
    except InvariantViolation as exc:
        print(f"evakit: invariant violation: {exc}", file=sys.stderr)
        return 2
    except (EvakitError, OSError, ValueError) as exc:
        print(f"evakit: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
