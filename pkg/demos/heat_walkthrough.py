"""Local reduced bases for the bimaterial heat problem, step by step.

Generates 1000 heat solutions, clusters the training half with the sine
dissimilarity, builds a dictionary of 3-mode local bases and compares it
with global bases and with the other two dissimilarities.

    python3 demos/heat_walkthrough.py [--nodes 2000] [--seed 0]
"""

import argparse
import time
import warnings

import numpy as np

from robdict import clustering as cl
from robdict import dictionary as dic
from robdict import evaluation as ev
from robdict import geometry as geo
from robdict import problems as pb


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    warnings.simplefilter("ignore", RuntimeWarning)

    t = time.perf_counter()
    s = pb.generate_heat1d_dataset(1000, args.nodes, args.seed)
    train, test = pb.split_snapshot_set(s, 500, args.seed)
    print(f"data: {train.n_trajectories} train / {test.n_trajectories} test, "
          f"{s.n_dof} nodes ({time.perf_counter() - t:.1f}s)")

    D = geo.dissimilarity_matrix(train, "sine")
    c = cl.pam(D, 6, restarts=10, seed=args.seed)
    print("cluster sizes:", np.bincount(c.labels).tolist())

    sel = cl.select_snapshots(D, c, 3)
    d = dic.build_dictionary(train, c, sel, 3)
    cross = geo.cross_dissimilarity(test, train, "sine")
    summ = ev.evaluate_errors(test, d, cross[:, c.medoids])
    print(f"sine dictionary: mean relative projection error {summ.mean:.4f}")

    # the errors track the distance to the nearest selected snapshot
    near = ev.nearest_snapshot_dissimilarity(cross, d.selected())
    r = ev.correlation_report(summ.eta, {"sine": near})["sine"]
    print(f"spearman(error, nearest sine dissimilarity) = {r.spearman:.3f}")

    print()
    print(ev.compare_strategies(train, test, 6, 3, 3, seed=args.seed,
                                matrices={"sine": D}, cross={"sine": cross}).format())


if __name__ == "__main__":
    main()
