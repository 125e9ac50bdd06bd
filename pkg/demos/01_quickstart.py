"""Generate a few expressions, look at the symbol patches, train a small model and score it.

    python3 demos/01_quickstart.py --epochs 40
"""
import argparse
import logging

from dbnmer import Trainer, TrainConfig, default_vocabulary, evaluate, generate, segment
from dbnmer.metrics import format_table

parser = argparse.ArgumentParser()
parser.add_argument("--n", type=int, default=8)
parser.add_argument("--epochs", type=int, default=40)
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

data = generate(args.n, seed=0)
first = data[0]
print("tokens :", " ".join(first.tokens))
print("image  :", first.image.shape)
for p in segment(first.image):
    print(f"  symbol {p.order_index}: box {p.bbox}")

# a small model learns this handful of samples in a minute or so; DST is left off
# here (see 03_soft_labels.py for what it does on tiny data)
cfg = TrainConfig(embed_dim=16, enc_layers=1, enc_heads=2, dec_layers=1, dec_heads=2,
                  ffn_dim=32, batch=4, lr=3e-3, dst=False)
trainer = Trainer(default_vocabulary(), cfg)
trainer.fit(data, args.epochs, verbose=True)

for s, pred in zip(data[:4], trainer.model.predict(data[:4])):
    print(f"{' '.join(s.tokens):30s} -> {' '.join(pred)}")
print(format_table(evaluate(trainer.model, data)))
