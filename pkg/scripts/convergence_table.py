"""Weighted error tables for the point and line sources over more generations than the defaults."""
import argparse

from spfem.harness.config import make_config
from spfem.harness.experiments import run

ap = argparse.ArgumentParser()
ap.add_argument("--generations", type=int, default=5)
ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
args = ap.parse_args()

for name in ("convergence-delta", "convergence-line"):
    cfg = make_config(name, generations=args.generations, lambdas=(args.lam if name.endswith("delta") else 0.5,))
    rep = run(cfg)
    print(name)
    for r in rep.rows:
        if r.get("error") is not None:
            ratio = "" if r["ratio"] is None else f"{r['ratio']:.4f}"
            print(f"  gen {r['generation']}  h={r['h_max']:.4g}  error={r['error']:.6g}  ratio={ratio}")
