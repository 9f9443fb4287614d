"""
Scoring a clustering
====================

Cluster ids are arbitrary, so accuracy needs a cluster-to-class mapping:
one-to-one through Hungarian matching, or many-to-one when there are more
clusters than classes.
"""

import numpy as np

from scan_cluster import accuracy, ari, confusion_matrix, hungarian, nmi

truth = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 2])
pred = np.array([2, 2, 1, 0, 0, 0, 1, 1, 1, 1])

counts = np.zeros((3, 3), dtype=int)
np.add.at(counts, (pred, truth), 1)
print("cluster x class counts:\n", counts)
print("matching that maximizes agreement:", hungarian(-counts))

acc, mapping = accuracy(pred, truth)
print(f"one-to-one ACC {acc:.2f}, cluster -> class {mapping.tolist()}")
print(f"NMI {nmi(pred, truth):.4f}  ARI {ari(pred, truth):.4f}")
print("confusion matrix, rows ordered by mapped class:\n", confusion_matrix(pred, truth, mapping))

# overclustering: split each class in two and map clusters to their majority class
over = truth * 2 + (np.arange(truth.size) % 2)
acc, mapping = accuracy(over, truth, "many_to_one")
print(f"6 clusters, many-to-one ACC {acc:.2f}, mapping {mapping.tolist()}")
