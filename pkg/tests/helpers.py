"""Shared builders for the test suite.

random_instance draws the small problem sizes the identity and duality
suites run over; everything is generated from one seed so failures
reproduce from the seed number alone.
"""

import numpy as np

from mmdtl2.adapt import AdaptParams
from mmdtl2.dataset import DomainDataset, build_weight_model, ovr_labels
from mmdtl2.kernels import KernelSpec
from mmdtl2.svm import HyperplaneStack


def random_instance(seed, kernel="linear", positive_weights=False):
    """One small random problem: returns a dict of all the pieces.

    Dims follow the identity-suite envelope: L_s in 1..6, L_t in 1..5,
    M in 1..5, N in 2..8, K in {2,3}. Source labels always cover every
    class; target labels cover every class when positive_weights is set
    (so every anchor column sum is positive and the factored route runs).
    """
    rng = np.random.default_rng(seed)
    l_s = int(rng.integers(1, 7))
    l_t = int(rng.integers(1, 6))
    m = int(rng.integers(1, 6))
    k = int(rng.integers(2, 4))
    n = int(rng.integers(max(2, k), 9))
    if positive_weights:
        # Every target label must appear in the source for S_M > 0; the
        # easiest guarantee is full coverage on both sides.
        m = max(m, k)
        target_labels = np.concatenate(
            [np.arange(1, k + 1), rng.integers(1, k + 1, size=m - k)]
        )
    else:
        target_labels = rng.integers(1, k + 1, size=m)
    source_labels = np.concatenate(
        [np.arange(1, k + 1), rng.integers(1, k + 1, size=n - k)]
    )
    rng.shuffle(source_labels)
    source = DomainDataset(rng.normal(size=(l_s, n)), source_labels, class_count=k)
    target = DomainDataset(rng.normal(size=(l_t, m)), target_labels, class_count=k)
    params = AdaptParams(
        c_f=float(rng.uniform(0.05, 2.0)),
        c_t=float(rng.uniform(0.05, 2.0)),
        c_s=0.1,
        c_d=float(rng.uniform(0.05, 1.5)),
        kernel=KernelSpec(kernel),
        iterations=1,
        seed=seed,
    )
    theta = HyperplaneStack(rng.normal(size=(l_s, k)), rng.normal(size=k))
    weights = build_weight_model(source.labels, target.labels, params.c_d)
    labels_ovr = ovr_labels(target.labels, k)
    return {
        "source": source,
        "target": target,
        "params": params,
        "theta": theta,
        "weights": weights,
        "labels_ovr": labels_ovr,
        "rng": rng,
    }


def separable_pair(seed=0, dim=6, per_class=12, classes=2, spread=4.0):
    """A cleanly separable source/target pair sharing the same space."""
    rng = np.random.default_rng(seed)
    means = rng.normal(scale=spread, size=(classes, dim))
    feats, labels = [], []
    for c in range(classes):
        feats.append(means[c][:, None] + 0.2 * rng.normal(size=(dim, per_class)))
        labels.append(np.full(per_class, c + 1))
    features = np.hstack(feats)
    labels = np.concatenate(labels)
    source = DomainDataset(features, labels, class_count=classes)
    tfeats, tlabels = [], []
    for c in range(classes):
        tfeats.append(means[c][:, None] + 0.2 * rng.normal(size=(dim, per_class)))
        tlabels.append(np.full(per_class, c + 1))
    target = DomainDataset(np.hstack(tfeats), np.concatenate(tlabels), class_count=classes)
    return source, target
