"""Few-shot adaptation of a trained CNN to one participant.

Conv blocks and FC1 stay frozen, dropout is removed, and FC2 is re-initialised
and retrained on K labelled windows per class from the new participant.
Because everything below FC2 is frozen (batch norm in inference mode), the FC1
activations of the shots are computed once and FC2 is fitted on them.
"""

from __future__ import annotations

import numpy as np

from .cnn1d import Adam, CnnModel, TrainConfig, cross_entropy, features, init_fc2, softmax
from .errors import MissingClassShots, NonFiniteLoss

TRANSFER_DEFAULTS = TrainConfig(learning_rate=1e-3, epochs=10, lr_decay_per_epoch=0.95,
                                weight_decay=1e-4, batch_size=64, seed=0)
FC2 = ("fc2.w", "fc2.b")


def select_shots(windows, k: int, n_classes: int, seed) -> tuple[list, list]:
    """Pick ``k`` windows per class uniformly without replacement.

    Returns ``(shots, remaining)``; the remaining list keeps the original order.
    """
    rng = np.random.default_rng(seed)
    labels = np.array([w.label for w in windows], dtype=np.int64)
    chosen = []
    short = []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            short.append((c, len(idx)))
            continue
        chosen += sorted(rng.choice(idx, size=k, replace=False).tolist())
    if short:
        detail = ", ".join(f"class {c}: {n} < {k}" for c, n in short)
        raise MissingClassShots(f"not enough windows for transfer shots ({detail})")
    picked = set(chosen)
    return [windows[i] for i in chosen], [w for i, w in enumerate(windows) if i not in picked]


def personalize(model: CnnModel, x: np.ndarray, y: np.ndarray, tc: TrainConfig = TRANSFER_DEFAULTS,
                k: int | None = None) -> CnnModel:
    """Return a copy of ``model`` with a freshly initialised, retrained FC2.

    ``x`` holds the shot windows ``(N, T, S)`` and ``y`` their labels. When
    ``k`` is given every class must have at least ``k`` shots.
    """
    tc.validate()
    y = np.asarray(y, dtype=np.int64)
    n_classes = model.config.num_classes
    counts = np.bincount(y, minlength=n_classes)
    need = 1 if k is None else k
    if (counts < need).any():
        missing = [int(c) for c in np.flatnonzero(counts < need)]
        raise MissingClassShots(f"classes {missing} have fewer than {need} shots")

    adapted = model.copy()
    adapted.use_dropout = False
    init_rng, order_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(tc.seed).spawn(2))
    adapted.params.update(init_fc2(model.config, init_rng, model.dtype))

    feats = np.concatenate([features(adapted, x[i:i + 128], "eval") for i in range(0, len(x), 128)])
    opt = Adam(adapted.params, tc.learning_rate, tc.weight_decay, names=FC2)
    w, b = adapted.params["fc2.w"], adapted.params["fc2.b"]
    for epoch in range(tc.epochs):
        opt.lr = tc.learning_rate * tc.lr_decay_per_epoch**epoch
        order = order_rng.permutation(len(y))
        for s in range(0, len(y), tc.batch_size):
            batch = order[s:s + tc.batch_size]
            f, t = feats[batch], y[batch]
            probs = softmax(f @ w + b)
            loss = cross_entropy(probs, t)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"transfer loss {loss} at epoch {epoch}")
            d = probs.copy()
            d[np.arange(len(t)), t] -= 1
            d /= len(t)
            opt.step(adapted.params, {"fc2.w": f.T @ d, "fc2.b": d.sum(axis=0)})
    return adapted
