"""Write a synthetic corpus of drawn shapes (512x512 scenes with instance masks)."""

import argparse
from pathlib import Path

from tamperqa.fixtures import make_corpus


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", type=Path)
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--instances", type=int, default=6, help="instances attempted per image")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    root = make_corpus(args.out, n_images=args.images, instances_per_image=args.instances, seed=args.seed)
    print(f"corpus written to {root}")


if __name__ == "__main__":
    main()
