"""``smartcube`` command line.

Results go to stdout as JSON lines; diagnostics go to stderr.  Exit status is
0 on success, 2 on usage or configuration errors and 3 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from collections.abc import Sequence
from typing import Any

import numpy as np

from . import BACKEND, stac
from .config import RunConfig
from .datacube import open_store, read_window
from .errors import ConfigError, SmartcubeError, TaskError
from .pipeline import QUALITY_SIDECAR, query_from_config, run_pipeline

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

log = logging.getLogger("smartcube")

# flag name -> (metavar, help)
FLAGS: dict[str, tuple[str | None, str]] = {
    "catalog": ("PATH", "catalog root (directory, catalog.json or URL)"),
    "bbox": ("MINX,MINY,MAXX,MAXY", "query box in EPSG:4326"),
    "start": ("RFC3339", "start of the time range (inclusive)"),
    "end": ("RFC3339", "end of the time range (inclusive)"),
    "bands": ("B1,B2", "comma-separated band list"),
    "resolution": ("METERS", "target pixel size"),
    "chunk": ("CT,CB,CY,CX", "chunk dims"),
    "workers": ("N", "executor worker threads"),
    "max_cloud": ("FRAC", "drop frames with a larger cloud fraction"),
    "min_valid": ("FRAC", "drop frames with a smaller valid fraction"),
    "seed": ("N", "random seed"),
    "out": ("PATH", "output path"),
    "store": ("PATH", "input cube store"),
    "labels": ("PATH", "label cube store (u8, 255 = ignore)"),
    "model": ("PATH", "model artifact"),
    "epochs": ("N", "training epochs"),
    "lr": ("RATE", "SGD learning rate"),
}


def _add_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="key = value config file; flags override it")
    for name, (metavar, help_text) in FLAGS.items():
        parser.add_argument("--" + name.replace("_", "-"), dest=name, metavar=metavar, help=help_text)
    parser.add_argument("--verbose", action="store_true", default=None, help="progress and debug output on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smartcube", description="Quality-filtered datacubes and construction segmentation.")
    groups = parser.add_subparsers(dest="group", required=True)
    commands = {
        "catalog": {"search": "list items matching the query"},
        "cube": {"build": "build a cube store from a catalog", "info": "describe a cube store"},
        "model": {
            "train": "train on a store and a label store",
            "infer": "write per-frame construction probabilities",
            "gradcheck": "verify analytic gradients on a seeded toy problem",
        },
    }
    for group, subs in commands.items():
        gp = groups.add_parser(group).add_subparsers(dest="command", required=True)
        for name, help_text in subs.items():
            _add_flags(gp.add_parser(name, help=help_text))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        config = RunConfig.from_text(text)
    overrides = {name: getattr(args, name) for name in FLAGS if getattr(args, name) is not None}
    config = config.with_strings(overrides)
    if args.verbose:
        config = config.replace(verbose=True)
    return config


def emit(record: dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(record, sort_keys=True, default=str) + "\n")
    sys.stdout.flush()


def cmd_catalog_search(config: RunConfig) -> int:
    config.require("catalog")
    assert config.catalog
    items = stac.search(stac.load_catalog(config.catalog), query_from_config(config, with_bands=True))
    for item in items:
        emit(
            {
                "id": item.id,
                "collection": item.collection,
                "datetime": stac.format_datetime(item.datetime),
                "bbox": list(item.bbox),
                "epsg": item.epsg,
                "bands": sorted(item.data_bands),
            }
        )
    log.info("%d item(s) matched", len(items))
    return EXIT_OK


def cmd_cube_build(config: RunConfig) -> int:
    result = run_pipeline(config)
    emit(result.summary)
    return EXIT_OK


def cmd_cube_info(config: RunConfig) -> int:
    config.require("store")
    assert config.store
    store = open_store(config.store)
    schema = store.schema
    n, nb, h, w = schema.shape
    emit({"frames": n, "bands": list(schema.bands), "dtype": schema.dtype, "nodata": schema.nodata})
    emit({"grid": schema.grid.to_dict(), "shape": [n, nb, h, w]})
    emit({"chunk": list(schema.chunk), "chunk_counts": list(schema.chunk_counts)})
    sidecar = os.path.join(config.store, QUALITY_SIDECAR)
    recorded: dict[str, Any] = {}
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as fh:
            recorded = json.load(fh)
    for t, (when, item_id) in enumerate(schema.frames):
        _, valid = read_window(store, (t, t + 1), None, (0, h), (0, w))
        cloud = recorded.get(item_id, {}).get("cloud_fraction")
        emit(
            {
                "frame": t,
                "id": item_id,
                "datetime": stac.format_datetime(when),
                "valid_fraction": float(valid.all(axis=1).mean()),
                "cloud_fraction": cloud,
            }
        )
    return EXIT_OK


def cmd_model_train(config: RunConfig) -> int:
    from .model import TrainConfig, save, train

    config.require("store", "labels", "model")
    assert config.store and config.labels and config.model
    store, labels = open_store(config.store), open_store(config.labels)

    def on_epoch(epoch: int, value: float) -> None:
        emit({"epoch": epoch, "loss": value})

    net, losses = train(store, labels, TrainConfig(config.epochs, config.lr, config.seed, config.k), on_epoch)
    save(net, config.model)
    emit({"model": os.path.abspath(config.model), "params": net.n_params, "initial_loss": losses[0], "final_loss": losses[-1]})
    return EXIT_OK


def cmd_model_infer(config: RunConfig) -> int:
    from .model import extract_boundaries, load, predict, write_pgm
    from .model.training import write_predictions

    config.require("store", "model", "out")
    assert config.store and config.model and config.out
    store = open_store(config.store)
    net = load(config.model)
    probs = predict(net, store, seed=config.seed)
    write_predictions(probs, store, config.out)
    previews = os.path.abspath(config.out) + ".previews"
    os.makedirs(previews, exist_ok=True)
    for t, (when, item_id) in enumerate(store.schema.frames):
        components = extract_boundaries(probs[t])
        write_pgm(os.path.join(previews, f"{t:04d}_{item_id}.pgm"), probs[t], components)
        emit(
            {
                "frame": t,
                "id": item_id,
                "datetime": stac.format_datetime(when),
                "mean_prob": float(np.mean(probs[t])),
                "components": [{"area": c.area, "bbox": list(c.bbox), "boundary": len(c.boundary)} for c in components],
            }
        )
    emit({"store": os.path.abspath(config.out), "previews": previews})
    return EXIT_OK


def cmd_model_gradcheck(config: RunConfig) -> int:
    from .model import gradcheck, toy_problem

    errors = gradcheck(*toy_problem(seed=config.seed))
    for name, err in errors.items():
        emit({"param": name, "relative_error": err, "ok": err < 1e-4})
    return EXIT_OK if all(e < 1e-4 for e in errors.values()) else EXIT_DATA


COMMANDS = {
    ("catalog", "search"): cmd_catalog_search,
    ("cube", "build"): cmd_cube_build,
    ("cube", "info"): cmd_cube_info,
    ("model", "train"): cmd_model_train,
    ("model", "infer"): cmd_model_infer,
    ("model", "gradcheck"): cmd_model_gradcheck,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, TaskError) and exc.__cause__ is not None:
        return exit_code(exc.__cause__)
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    return EXIT_DATA


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    verbose = bool(args.verbose)
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        config = resolve_config(args)
        log.debug("kernels: %s", BACKEND)
        return COMMANDS[(args.group, args.command)](config)
    except SmartcubeError as exc:
        print(f"smartcube: error: {exc}", file=sys.stderr)
        if verbose:
            traceback.print_exc(file=sys.stderr)
        return exit_code(exc)
    except (OSError, ValueError) as exc:
        # Malformed inputs the library did not classify are still data problems.
        print(f"smartcube: error: {exc}", file=sys.stderr)
        if verbose:
            traceback.print_exc(file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
