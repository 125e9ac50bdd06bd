"""Command line entry points: gen-data, train, eval, segment, infer, ablate."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import trainer as tr
from .checkpoint import load_model
from .data import build_dataset, generate, load_dataset, read_pgm, split_samples, write_pgm
from .metrics import format_table
from .segmentation import segment

log = logging.getLogger("dbnmer")

PRESETS = {
    "ccm_dst": tr.ccm_dst_grid,
    "stage": tr.stage_grid,
    "enhancer": tr.enhancer_grid,
    "beta": tr.beta_grid,
    "temperature": tr.temperature_grid,
}
# keys understood by train/ablate files on top of the TrainConfig fields
FILE_KEYS = ("data", "split", "grid", "n", "data_seed", "table")


def _select(samples, split: str):
    if split == "all":
        return samples
    return split_samples(samples)[split]


def cmd_gen_data(args) -> int:
    lines = build_dataset(args.n, args.seed, args.out)
    print(f"wrote {len(lines)} samples to {args.out}")
    return 0


def _read_file_config(path):
    pairs = tr.parse_key_values(Path(path).read_text(encoding="utf-8"), str(path))
    return tr.config_overrides(pairs, str(path), extra_keys=FILE_KEYS)


def cmd_train(args) -> int:
    values = _read_file_config(args.config)
    extra = {k: values.pop(k) for k in FILE_KEYS if k in values}
    cfg = tr.TrainConfig(**values)
    data_dir = args.data or extra.get("data")
    if data_dir is None:
        raise SystemExit("train: no dataset given (use --data or a 'data = <dir>' line)")
    samples = _select(load_dataset(data_dir), args.split or extra.get("split", "train"))
    trainer = tr.Trainer(_vocab_for(data_dir), cfg)
    for _ in range(cfg.epochs):
        res = trainer.train_epoch(samples)
        print(f"epoch {trainer.epoch}\tloss {sum(res.losses) / len(res.losses):.6f}"
              f"\tacc {res.token_accuracy:.4f}", flush=True)
    trainer.save(args.out)
    print(f"saved {args.out}")
    return 0


def _vocab_for(data_dir):
    from .data import VOCAB_FILE, default_vocabulary
    from .vocab import Vocabulary

    path = Path(data_dir) / VOCAB_FILE
    return Vocabulary.load(path) if path.exists() else default_vocabulary()


def cmd_eval(args) -> int:
    model, _, _ = load_model(args.ckpt)
    samples = _select(load_dataset(args.data, model.vocab), args.split)
    records: list = []
    report = tr.evaluate(model, samples, records=records)
    table = format_table(report)
    if args.report:
        Path(args.report).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    if args.records:
        with open(args.records, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps({k: r[k] for k in ("id", "bleu4", "rouge4", "match", "match_ws")}) + "\n")
    return 0


def cmd_segment(args) -> int:
    img = read_pgm(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for p in segment(img):
        write_pgm(out / f"symbol{p.order_index:03d}.pgm", p.bitmap)
        lines.append(f"{p.order_index} {' '.join(str(int(v)) for v in p.bbox)}")
    (out / "manifest.txt").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    print(f"{len(lines)} symbols written to {out}")
    return 0


def cmd_infer(args) -> int:
    model, _, _ = load_model(args.ckpt)
    print(" ".join(model.predict_image(read_pgm(args.image))))
    return 0


def grid_rows(values: dict) -> list[dict]:
    """Grid rows from a preset name or from '|'-separated alternatives on any config key."""
    rows = PRESETS[values["grid"]]() if "grid" in values else [{}]
    axes = {k: v for k, v in values.items() if isinstance(v, list)}
    if axes:
        combos = [dict(zip(axes, vals)) for vals in itertools.product(*axes.values())]
        rows = [{**r, **c} for r in rows for c in combos]
    return rows


def _parse_grid_file(path) -> tuple[dict, dict]:
    pairs = tr.parse_key_values(Path(path).read_text(encoding="utf-8"), str(path))
    base, sweep = [], {}
    for lineno, key, value in pairs:
        if "|" in value and key not in FILE_KEYS:
            alts = [v.strip() for v in value.split("|")]
            sweep[key] = [tr.config_overrides([(lineno, key, a)], str(path))[key] for a in alts]
        else:
            base.append((lineno, key, value))
    values = tr.config_overrides(base, str(path), extra_keys=FILE_KEYS)
    if "grid" in values and values["grid"] not in PRESETS:
        raise tr.ConfigError(f"{path}: unknown grid preset {values['grid']!r}; "
                             f"choose from {sorted(PRESETS)}")
    return values, sweep


def cmd_ablate(args) -> int:
    values, sweep = _parse_grid_file(args.grid)
    extra = {k: values.pop(k) for k in FILE_KEYS if k in values}
    base = tr.TrainConfig(**values)
    if "data" in extra:
        samples = load_dataset(extra["data"])
    else:
        samples = generate(int(extra.get("n", 2500)), int(extra.get("data_seed", 0)))
    parts = split_samples(samples)
    rows = grid_rows({**({"grid": extra["grid"]} if "grid" in extra else {}), **sweep})
    for r in rows:
        replace(base, **r)  # validate every row before spending time on training
    result = tr.run_ablation(rows, parts["train"], parts["val"], base)
    table = tr.ablation_table(result)
    sys.stdout.write(table)
    if "table" in extra:
        Path(extra["table"]).write_text(table, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dbnmer")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train from a key = value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data")
    p.add_argument("--split", choices=("train", "val", "test", "all"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report")
    p.add_argument("--records", help="optional per-sample JSON-lines output")
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("segment", help="cut an image into symbol patches")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("infer", help="transcribe one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train and score a grid of configurations")
    p.add_argument("--grid", required=True)
    p.set_defaults(func=cmd_ablate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (tr.ConfigError, ValueError, OSError) as exc:
        print(f"dbnmer {args.command}: {exc}", file=sys.stderr)
        return 2
