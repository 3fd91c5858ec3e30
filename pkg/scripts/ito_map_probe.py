"""Distance between RDE solutions for perturbed Brownian drivers.

    python scripts/ito_map_probe.py [--field linear|sine] [--n 1024] [--seeds 5]

Prints the log-log slope of sup |Y - Y_eps| against eps for several seeds;
a locally Lipschitz solution map gives slopes near 1.
"""

import argparse

import numpy as np

from roughcalc.brownian import BrownianConfig, brownian_rough_path
from roughcalc.controlled import linear_field, sine_field
from roughcalc.grid import TimeGrid
from roughcalc.rde import RdeProblem, ito_map_probe

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--field", choices=["linear", "sine"], default="linear")
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    phi = linear_field(np.ones((1, 1, 1))) if args.field == "linear" else sine_field()
    print("seed,slope")
    for seed in range(args.seeds):
        rp = brownian_rough_path(BrownianConfig(1, TimeGrid.uniform(args.n), seed, 8), "strat", 0.45)
        res = ito_map_probe(RdeProblem(rp, phi, [1.0]), seed=seed)
        print(f"{seed},{res.slope:.4f}")
