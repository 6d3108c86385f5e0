"""``roomaug`` command line: train, place, heatmap, synth, eval, plot, serve, model-info.

Failures print ``{"error": <code>, "message": ...}`` on stderr and exit
nonzero. Every output file is written to a temporary name and renamed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from ._io import atomic_write_bytes, atomic_write_text

log = logging.getLogger("roomaug")

EXIT_ERROR, EXIT_USAGE, EXIT_INPUT, EXIT_MODEL, EXIT_PLACEMENT = 1, 2, 3, 4, 5


def _thresholds(args):
    from .geometry import Thresholds

    return Thresholds(rho=args.rho, epsilon=args.epsilon, phi=args.phi)


def _add_thresholds(p):
    import math

    p.add_argument("--rho", type=float, default=0.5, help="wall-proximity threshold (m)")
    p.add_argument("--epsilon", type=float, default=1.0, help="object-proximity threshold (m)")
    p.add_argument("--phi", type=float, default=math.pi / 12, help="angular tolerance (rad)")


def _add_sampling(p):
    p.add_argument("--samples", type=int, default=250, help="target number of in-room grid cells")
    p.add_argument("--orientations", type=int, default=16, help="sampled angles per position")
    p.add_argument("--collision-policy", choices=["reject_overlap", "allow_listed_pairs"],
                   default="allow_listed_pairs")
    p.add_argument("--joint", action="store_true", help="score every (cell, angle) pair")
    p.add_argument("--seed", type=int, default=0, help="recorded in the sampling spec")


def _spec(args, top_k=5):
    from .augment import SamplingSpec

    return SamplingSpec(
        target_samples=args.samples,
        orientation_count=args.orientations,
        collision_policy=args.collision_policy,
        random_seed=args.seed,
        top_k=top_k,
        joint=args.joint,
    )


def _extents(args):
    he = None if args.half_extents is None else tuple(args.half_extents)
    return he, args.center_z


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    from .dataset import load_corpus
    from .knowledge_model import FeatureSelection, save, train

    scenes, report = load_corpus(args.corpus)
    sel = FeatureSelection(position=args.position_features, orientation=args.orientation_features)
    model = train(scenes, _thresholds(args), sel, dataset_id=args.dataset_id or Path(args.corpus).name,
                  trained_at=args.trained_at)
    save(model, args.out)
    counts = {c: {"position": p, "orientation": o} for c, (p, o) in model.row_counts().items()}
    print(json.dumps({"model": str(args.out), "scenes": len(scenes), "rejected": len(report.rejected),
                      "rows": counts}, sort_keys=True))
    return 0


def _load_model(path):
    from .knowledge_model import load

    return load(path)


def cmd_place(args) -> int:
    from .augment import fresh_id, place
    from .dataset import load_scene, save_scene

    model = _load_model(args.model)
    scene = load_scene(args.scene)
    he, cz = _extents(args)
    rec, hm = place(scene, args.category, model, _spec(args, args.top_k), half_extents=he, center_z=cz)
    oid = fresh_id(scene, rec.category)
    out = args.out or str(Path(args.scene).with_name(Path(args.scene).stem + "_placed.scn"))
    save_scene(scene.with_object(rec.to_object(oid)), out)
    if args.heatmap:
        atomic_write_text(args.heatmap, hm.to_json())
    if args.json:
        print(json.dumps({"object_id": oid, "scene": out, "recommendation": rec.to_dict()}, indent=1))
    else:
        print(f"{'rank':>4} {'x':>9} {'y':>9} {'theta_a':>9} {'pos':>9} {'orient':>9}")
        for k, p in enumerate(rec.poses, 1):
            o = "-" if p.orientation_score is None else f"{p.orientation_score:.4f}"
            print(f"{k:>4} {p.position.x:9.4f} {p.position.y:9.4f} {p.theta_a:9.4f} {p.position_score:9.4f} {o:>9}")
        print(f"committed {oid} -> {out}")
    return 0


def cmd_heatmap(args) -> int:
    from .augment import position_heatmap
    from .dataset import load_scene

    model = _load_model(args.model)
    scene = load_scene(args.scene)
    he, cz = _extents(args)
    hm = position_heatmap(scene, args.category, model, _spec(args), half_extents=he, center_z=cz, theta=args.theta)
    text = hm.to_json()
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    from .dataset import write_corpus
    from .synth import PRESETS, SynthConfig, synthesize

    cfg = SynthConfig(rules=PRESETS[args.preset], l_shape_prob=args.l_shape_prob)
    scenes, manifest = synthesize(cfg, args.rooms, args.seed)
    manifest["preset"] = args.preset
    write_corpus(scenes, args.out, manifest)
    print(json.dumps({"out": str(args.out), "rooms": len(scenes), "counts": manifest["counts"]}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    from .augment import SamplingSpec
    from .dataset import load_corpus
    from .evaluation import AblationConfig, evaluate

    scenes, _ = load_corpus(args.corpus)
    spec = SamplingSpec(target_samples=args.samples, orientation_count=args.orientations)
    variants = tuple(args.variants) if args.variants else ()
    config = AblationConfig(args.task, variants, args.k, args.seed, args.top_k, spec)
    report = evaluate(scenes, config, _thresholds(args))
    table = report.to_csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / f"{args.task}_table.csv", table)
        atomic_write_text(out / f"{args.task}_cdf.csv", report.cdf_csv())
        atomic_write_text(out / f"{args.task}_samples.csv", report.samples_csv())
    sys.stdout.write(table)
    return 0


def cmd_plot(args) -> int:
    import csv
    import io

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = list(csv.DictReader(io.StringIO(Path(args.cdf).read_text(encoding="utf-8"))))
    metrics = sorted({r["metric"] for r in rows}, key=lambda m: (m != "top1", m))
    fig, axes = plt.subplots(1, len(metrics), figsize=(5 * len(metrics), 4), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        variants = []
        for r in rows:
            if r["metric"] == metric and r["variant"] not in variants:
                variants.append(r["variant"])
        for v in variants:
            pts = [(float(r["value"]), float(r["fraction"])) for r in rows if r["metric"] == metric and r["variant"] == v]
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post", label=v)
        ax.set_xlabel("radians" if metric == "angular" else "meters")
        ax.set_ylabel("fraction of samples")
        ax.set_title(metric)
        ax.legend()
    fig.tight_layout()
    buf = io.BytesIO()
    fmt = Path(args.out).suffix.lstrip(".") or "png"
    fig.savefig(buf, format=fmt, metadata={"Software": None} if fmt == "png" else None)
    atomic_write_bytes(args.out, buf.getvalue())
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    model = args.model or os.environ.get("ROOMAUG_MODEL")
    if not model:
        raise _UsageError("serve needs --model or ROOMAUG_MODEL; refusing to start without a model")
    host = args.host or os.environ.get("ROOMAUG_HOST", "127.0.0.1")
    port = args.port or int(os.environ.get("ROOMAUG_PORT", "8000"))
    serve(model, host, port)
    return 0


def cmd_model_info(args) -> int:
    from .service import LoadedModel, model_info
    from .knowledge_model import model_checksum

    model = _load_model(args.model)
    info = model_info(LoadedModel(model, model_checksum(model), str(args.model)))
    if args.json:
        print(json.dumps(info, indent=1, sort_keys=True))
        return 0
    print(f"checksum {info['checksum']}  dataset {info['dataset_id']!r}  thresholds {info['thresholds']}")
    print(f"selection {info['selection']}")
    print(f"{'category':<10} {'rows':>6} {'orient':>6} {'RP=0':>6} {'RP=1':>6} {'RP=2+':>6} {'TC':>6}")
    for cat, entry in info["priors"].items():
        rp = entry["room_position"]
        tc = entry.get("towards_center")
        print(f"{cat:<10} {entry['rows']:>6} {entry.get('orientation_rows', 0):>6} {rp['0']:>6.2f} {rp['1']:>6.2f} "
              f"{rp['2+']:>6.2f} {'-' if tc is None else f'{tc:.2f}':>6}")
    return 0


class _UsageError(Exception):
    code = "usage"


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roomaug", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="numba worker threads")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a knowledge model from a corpus directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--position-features", default="AD+S+RP")
    p.add_argument("--orientation-features", default="F+C+RP")
    p.add_argument("--dataset-id", default="")
    p.add_argument("--trained-at", default="", help="timestamp recorded in the model (default empty)")
    _add_thresholds(p)
    p.set_defaults(fn=cmd_train)

    for name, fn in (("place", cmd_place), ("heatmap", cmd_heatmap)):
        p = sub.add_parser(name, help="recommend poses" if name == "place" else "write a heat-map document")
        p.add_argument("--model", required=True)
        p.add_argument("--scene", required=True)
        p.add_argument("--category", required=True)
        p.add_argument("--half-extents", type=float, nargs=3, default=None)
        p.add_argument("--center-z", type=float, default=None)
        p.add_argument("--out", default=None)
        _add_sampling(p)
        if name == "place":
            p.add_argument("--top-k", type=int, default=5)
            p.add_argument("--heatmap", default=None, help="also write the heat map here")
            p.add_argument("--json", action="store_true")
        else:
            p.add_argument("--theta", type=float, default=None, help="fixed orientation for every cell")
        p.set_defaults(fn=fn)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--rooms", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=["default", "focused"], default="default")
    p.add_argument("--l-shape-prob", type=float, default=0.0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("eval", help="K-fold ablation report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["position", "orientation"], default="position")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--variants", nargs="*", default=None)
    p.add_argument("--samples", type=int, default=250)
    p.add_argument("--orientations", type=int, default=16)
    p.add_argument("--out", default=None, help="directory for table, CDF and sample CSVs")
    _add_thresholds(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("plot", help="plot CDF curves from an eval CDF file")
    p.add_argument("--cdf", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("model-info", help="summarize a model's priors")
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_model_info)
    return parser


def _exit_code(exc) -> int:
    from .errors import (
        CorpusError,
        ModelFileError,
        NoValidCellError,
        PlacementStepError,
        SceneValidationError,
        UntrainedCategoryError,
    )

    if isinstance(exc, _UsageError):
        return EXIT_USAGE
    if isinstance(exc, ModelFileError):
        return EXIT_MODEL
    if isinstance(exc, (NoValidCellError, PlacementStepError, UntrainedCategoryError)):
        return EXIT_PLACEMENT
    if isinstance(exc, (SceneValidationError, CorpusError, OSError, ValueError)):
        return EXIT_INPUT
    return EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        import numba

        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a structured error
        code = getattr(exc, "code", None)
        if not isinstance(code, str):
            code = "io" if isinstance(exc, OSError) else "invalid_input" if isinstance(exc, ValueError) else "internal"
        print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)
        if code == "internal":
            log.debug("traceback", exc_info=True)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
