"""The 2x2 CCM/DST ablation on a synthetic desk-sized corpus.

Every row trains a fresh model from the same seed and data, then decodes the
validation split.  The defaults finish in a few minutes; the numbers only mean
something with thousands of samples and tens of epochs, e.g.

    python3 demos/02_ccm_dst_ablation.py --n 2500 --epochs 6 --full
"""
import argparse
import logging

from dbnmer import TrainConfig, generate, run_ablation
from dbnmer.data import split_samples
from dbnmer.trainer import ablation_table, ccm_dst_grid

parser = argparse.ArgumentParser()
parser.add_argument("--n", type=int, default=200)
parser.add_argument("--epochs", type=int, default=2)
parser.add_argument("--full", action="store_true", help="default model size instead of a tiny one")
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

splits = split_samples(generate(args.n, seed=0))
print(f"train {len(splits['train'])}  val {len(splits['val'])}")
small = {} if args.full else dict(embed_dim=16, enc_layers=1, enc_heads=2, dec_layers=1,
                                  dec_heads=2, ffn_dim=32)
base = TrainConfig(**small, epochs=args.epochs)
rows = run_ablation(ccm_dst_grid(), splits["train"], splits["val"], base)
print(ablation_table(rows))
for r in rows:
    first, last = r["losses"][0], r["losses"][-1]
    print(f"{r['config']}: loss {first:.3f} -> {last:.3f}")
