"""Sweep embedding width, window length and residual depth on the synthetic
corpus and print mean F of the full model for each setting.

    python scripts/hyperparameter_grid.py --seeds 3
"""

import argparse
import itertools
import time
from dataclasses import replace

from mdm_spam.experiment import DESK_SCALE, mean_f, pretrain, run_protocol
from mdm_spam.ingest import build_sequences
from mdm_spam.synth import SynthConfig, synth_events


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--d", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--n", type=int, nargs="+", default=[2, 4, 6, 8])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 4])
    args = ap.parse_args()

    events, labels = synth_events(SynthConfig())
    corpus = build_sequences(events, labels)
    print("d,n,k,mean_f,seconds")
    embeds = {}
    for d, n, k in itertools.product(args.d, args.n, args.k):
        cfg = replace(DESK_SCALE, n_seeds=args.seeds,
                      mdm=replace(DESK_SCALE.mdm, d=d, n=n, k=k))
        if d not in embeds:
            embeds[d] = pretrain(corpus, cfg)
        t0 = time.time()
        res = run_protocol(corpus, cfg, ("mdm",), embed=embeds[d])
        print(f"{d},{n},{k},{mean_f(res['mdm']):.4f},{time.time() - t0:.1f}", flush=True)


if __name__ == "__main__":
    main()
