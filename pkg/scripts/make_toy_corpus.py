#!/usr/bin/env python3
"""Regenerate the bundled 50-document toy corpus under data/toy/.

The toy world is a small planted-relevance corpus: good enough to drive
every pipeline stage end to end in a few seconds. Deterministic, so the
committed files only change if the generator changes.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dreq.synthetic import PlantedConfig, generate_planted_world, write_world_files


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "toy"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    cfg = PlantedConfig(
        n_docs=50,
        n_queries=8,
        seed=args.seed,
        relevant_per_query=3,
        distractors_per_query=2,
        noise_entities=30,
        filler_vocab=60,
        noise_entities_per_doc=(2, 4),
    )
    world = generate_planted_world(cfg)
    paths = write_world_files(world, args.out, stores=False)
    for name, path in paths.items():
        print(f"{name}: {os.path.relpath(path)}")


if __name__ == "__main__":
    main()
