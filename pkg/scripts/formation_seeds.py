"""Convergence slot and follower upwash gain of both formations over many seeds.

Usage: python3 scripts/formation_seeds.py [n_seeds] [--config PATH]
"""
import argparse

from formation_isac import config, experiments, formation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("n_seeds", type=int, nargs="?", default=10)
    ap.add_argument("--config", default=None)
    args = ap.parse_args()
    doc = config.load(args.config)
    print("seed,formation,m,convergence_slot,upwash_first,upwash_converged")
    for seed in range(args.n_seeds):
        for k, spec in enumerate(doc.formations):
            trace = experiments.simulate_formation(doc, k, seed)
            conv = experiments.convergence_slot(formation.trace_scores(trace, doc.aero, spec.kappa))
            last = experiments.follower_upwash(trace, conv or trace.n_slots)
            print(f"{seed},{k + 1},{spec.m},{conv},{experiments.follower_upwash(trace, 1):.5f},{last:.5f}")


if __name__ == "__main__":
    main()
