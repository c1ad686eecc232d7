"""Scratch experiment: does the masked-description trend reproduce?"""
import sys, time, tempfile
from pathlib import Path
import numpy as np
import torch
import maskedreid as m
from maskedreid.pipeline import evaluate_model
from maskedreid.model import load_checkpoint

torch.set_num_threads(2)

EPOCHS = 120
LR = 0.05
WD = 1e-4
DIM = 48
NOISE = 0.1

def run_variant(man, variant, seed, epochs=EPOCHS):
    ids = sorted({r.identity_id for r in man.train})
    k = 0 if variant == "baseline" else 1
    mask = {"full": 1.0, "unmasked": 0.0, "baseline": 1.0, "mask03": 0.3}[variant]
    mc = m.ModelConfig(height=32, width=32, patch_size=8, embed_dim=DIM, num_heads=4,
                       stage_layers=(2, 2, 1), description_tokens=k, vocab_size=105,
                       num_classes=len(ids), mlp_ratio=2.0)
    tc = m.TrainConfig(epochs=epochs, base_lr=LR, warmup_start_lr=LR/100,
                       warmup_epochs=5, decay_epochs=(int(epochs*0.75), epochs*2),
                       decay_factor=10.0, batch_p=4, batch_k=4, weight_decay=WD,
                       seed=seed, mask_ratio=mask,
                       noise_ratio=0.0 if variant == "baseline" else NOISE,
                       checkpoint_every=1000)
    lc = m.LossConfig(margin=0.3)
    with tempfile.TemporaryDirectory() as td:
        t0 = time.time()
        res = m.train(list(man.train), mc, tc, lc, td, man.vocab)
        model, _, _ = load_checkpoint(res.checkpoint_path)
        rec = evaluate_model(model, man, "cc")
        dt = time.time() - t0
    return rec.cmc[1], rec.mean_ap, res.final_losses, dt

def main():
    data_dir = Path(sys.argv[5]) if len(sys.argv) > 5 else Path("/tmp/trend_data")
    gen = m.GenConfig(num_identities=20, outfits_per_identity=3, images_per_outfit=4,
                      num_cameras=2, seed=100)
    if not (data_dir / "train.tsv").exists():
        man = m.generate(gen, data_dir)
    else:
        man = m.load_manifest(data_dir)
    print(f"train={len(man.train)} query={len(man.query)} gallery={len(man.gallery)}")

    variants = sys.argv[1].split(",") if len(sys.argv) > 1 else ["full", "baseline", "unmasked"]
    seeds = [int(s) for s in sys.argv[2].split(",")] if len(sys.argv) > 2 else [0]
    epochs = int(sys.argv[3]) if len(sys.argv) > 3 else EPOCHS

    results = {}
    for variant in variants:
        r1s = []
        for seed in seeds:
            r1, mape, losses, dt = run_variant(man, variant, seed, epochs=epochs)
            r1s.append(r1)
            print(f"{variant} seed={seed}: rank1={r1:.3f} mAP={mape:.3f} "
                  f"Lid={losses['id']:.3f} Ltri={losses['tri']:.3f} ({dt:.0f}s)", flush=True)
        results[variant] = float(np.mean(r1s))
    print({k: round(v, 3) for k, v in results.items()})

if __name__ == "__main__":
    main()
