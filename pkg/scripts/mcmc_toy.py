"""Two-coefficient Metropolis check against the quadrature posterior.

Prints the binned total variation distance per marginal and the tolerance.
Pass ``--quick`` for a shorter chain (the tolerance is then only indicative).
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from diffpost.verify import mcmc_toy_validity

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=20240601)
    parser.add_argument("--quick", action="store_true")
    args = parser.parse_args()
    kwargs = {"iterations": 20_000, "n": 5_000} if args.quick else {}
    res = mcmc_toy_validity(np.random.default_rng(args.seed), **kwargs)
    print(json.dumps(res.as_dict(), indent=1, default=str))
