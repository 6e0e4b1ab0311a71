"""
Neighbourhood statistics as meta-features
=========================================

For every observation we look at its ten nearest neighbours (Manhattan
distance after scaling) and count how many share its class.  The resulting
k_l table summarizes how "clean" class neighbourhoods are, and is the raw
material for predicting whether a dataset prefers BR <= 1 or BR > 1.
"""

import numpy as np

from brforest import load_bundled
from brforest.data import bundled_path
from brforest.experiment import read_winners_csv
from brforest.meta import (build_meta_matrix, dataset_kl, interaction_features, kl_names,
                           leave_two_out_splits, regime_labels)

kls = {name: dataset_kl(load_bundled(name)) for name in ("iris", "wine", "sonar")}
for name, kl in kls.items():
    print(f"{name:<6} 1_1={kl[1, 1]:6.2f}  5_5={kl[5, 5]:6.2f}  10_10={kl[10, 10]:6.2f}")

# %%
# Pairwise interactions of the 65 base values: two ratios, two
# differences, a product and a sum per pair, plus squares and doubles.

vals, names = interaction_features(kls["sonar"].vector(), kl_names())
print(len(names), "interaction features, e.g.", names[:3])
print("ratios undefined by a zero denominator:", int(np.isnan(vals).sum()))

matrix = build_meta_matrix(list(kls.values()), class_scaled=True)
print("meta matrix", matrix.values.shape)

# %%
# Regime labels from the published winners table.  Leave-two-out holds out
# one dataset of each regime at a time.

reports = read_winners_csv(bundled_path("published_winners.csv"))
for threshold in (None, 0.01):
    labels = regime_labels(reports, p_threshold=threshold)
    gt = sum(lab.value == "GT1" for lab in labels)
    print(f"p-threshold {threshold}: {len(labels)} datasets ({gt} prefer BR > 1), "
          f"{len(leave_two_out_splits(labels))} splits")
