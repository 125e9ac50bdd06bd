"""Train briefly, save a checkpoint, reload it and read a freshly rendered image.

    python3 demos/04_inference.py --out /tmp/demo.ckpt
"""
import argparse

from dbnmer import Trainer, TrainConfig, default_vocabulary, generate, load_model
from dbnmer.render import render

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="demo.ckpt")
parser.add_argument("--epochs", type=int, default=30)
args = parser.parse_args()

data = generate(8, seed=0)
cfg = TrainConfig(embed_dim=16, enc_layers=1, enc_heads=2, dec_layers=1, dec_heads=2,
                  ffn_dim=32, batch=4, lr=3e-3, dst=False)
trainer = Trainer(default_vocabulary(), cfg)
trainer.fit(data, args.epochs)
trainer.save(args.out)

model, extra, meta = load_model(args.out)
print(f"reloaded after epoch {meta['epoch']}, S is {extra['dst/S'].shape}")
for s in data[:3]:
    # rendering the same tokens gives the same pixels, so a memorised sample reads back
    print(" ".join(s.tokens), "->", " ".join(model.predict_image(render(s.tokens))))
