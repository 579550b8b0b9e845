"""Desk-scale differentiable models exposing gradient, Hessian-vector and GGN-vector products."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from curvlens.operators import DenseSymmetric, SeedStream, SymmetricOperator, dense_eigendecomposition

ABS_HESSIAN_PARAM_CAP = 2000

CURVATURE_KINDS = ("hessian", "ggn", "abs_hessian")


@dataclass(frozen=True)
class Dataset:
    """Synthetic classification data: inputs, integer labels and class count."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if not np.all(np.isfinite(inputs)):
            raise ValueError("dataset inputs must be finite")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self):
        return self.inputs.shape[0]

    def batch(self, indices):
        return Dataset(inputs=self.inputs[indices], labels=self.labels[indices],
                       n_classes=self.n_classes)


def make_blobs(n_samples, d_in, n_classes, separation, stream):
    """Gaussian-blob dataset: unit-variance clouds around separated class centers."""
    rng = stream.generator
    centers = rng.standard_normal((n_classes, d_in))
    centers *= separation / np.maximum(np.linalg.norm(centers, axis=1, keepdims=True), 1e-12)
    labels = np.arange(n_samples) % n_classes  # guarantees every class is present
    rng.shuffle(labels)
    inputs = centers[labels] + rng.standard_normal((n_samples, d_in))
    return Dataset(inputs=inputs, labels=labels, n_classes=n_classes)


def dataset_from_spec(text_or_dict):
    """Dataset from the JSON spec {n_samples, d_in, n_c, blob_separation, seed}."""
    raw = json.loads(text_or_dict) if isinstance(text_or_dict, str) else dict(text_or_dict)
    return make_blobs(int(raw["n_samples"]), int(raw["d_in"]), int(raw["n_c"]),
                      float(raw.get("blob_separation", 3.0)), SeedStream(int(raw.get("seed", 0))))


def _one_hot(labels, n_classes):
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_hvp(probs, direction):
    """(diag(s) - s s^T) applied row-wise: the softmax output Hessian action."""
    inner = np.sum(probs * direction, axis=1, keepdims=True)
    return probs * direction - probs * inner


class LogisticRegressionModel:
    """Multinomial logistic regression with L2 weight decay gamma * |W|^2.

    The loss is the mean cross-entropy over the batch plus the decay term;
    gradients and curvature products are analytic.  For this softmax-linear
    model the GGN coincides with the full loss Hessian.
    """

    def __init__(self, d_in, n_classes, weight_decay=0.0, weights=None):
        self.d_in = d_in
        self.n_classes = n_classes
        self.weight_decay = weight_decay
        if weights is None:
            weights = np.zeros((d_in, n_classes))
        self.weights = np.asarray(weights, dtype=np.float64).reshape(d_in, n_classes)

    @property
    def n_params(self):
        return self.d_in * self.n_classes

    def get_params(self):
        return self.weights.ravel().copy()

    def set_params(self, flat):
        self.weights = np.asarray(flat, dtype=np.float64).reshape(self.d_in, self.n_classes)

    def loss(self, batch, params=None):
        w = self.weights if params is None else np.asarray(params).reshape(self.d_in, self.n_classes)
        logits = batch.inputs @ w
        logz = np.log(np.sum(np.exp(logits - logits.max(axis=1, keepdims=True)), axis=1))
        logz += logits.max(axis=1)
        nll = logz - logits[np.arange(batch.n_samples), batch.labels]
        return float(np.mean(nll) + self.weight_decay * np.sum(w * w))

    def loss_and_gradient(self, batch):
        if batch.n_samples == 0:
            raise ValueError("batch must be nonempty")
        logits = batch.inputs @ self.weights
        probs = _softmax(logits)
        y = _one_hot(batch.labels, self.n_classes)
        loss = self.loss(batch)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss in forward pass")
        grad = batch.inputs.T @ (probs - y) / batch.n_samples + 2.0 * self.weight_decay * self.weights
        return loss, grad.ravel()

    def hessian_vector_product(self, batch, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_params,):
            raise ValueError(f"direction must have shape ({self.n_params},), got {v.shape}")
        direction = v.reshape(self.d_in, self.n_classes)
        probs = _softmax(batch.inputs @ self.weights)
        d_logits = batch.inputs @ direction
        d_probs = _softmax_hvp(probs, d_logits)
        hv = batch.inputs.T @ d_probs / batch.n_samples + 2.0 * self.weight_decay * direction
        return hv.ravel()

    # softmax-linear model: J^T H_L J equals the data Hessian exactly
    ggn_vector_product = hessian_vector_product


class MLPModel:
    """Fully connected net: ReLU hidden layers, softmax output, mean cross-entropy.

    Gradients come from hand-written backprop; Hessian-vector products from
    the forward-over-reverse directional derivative of that backprop, with
    the ReLU second derivative taken as zero everywhere.
    """

    def __init__(self, layer_sizes, stream=None, weight_decay=0.0, init_scale=None):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.weight_decay = weight_decay
        rng = (stream or SeedStream(0)).generator
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            scale = init_scale if init_scale is not None else np.sqrt(2.0 / fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_classes(self):
        return self.layer_sizes[-1]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def set_params(self, flat):
        for w, b, (wf, bf) in zip(self.weights, self.biases, self._split(flat)):
            w[...] = wf
            b[...] = bf

    def _split(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected parameter vector of length {self.n_params}, got {flat.shape}")
        out = []
        pos = 0
        for w, b in zip(self.weights, self.biases):
            wf = flat[pos: pos + w.size].reshape(w.shape)
            pos += w.size
            bf = flat[pos: pos + b.size]
            pos += b.size
            out.append((wf, bf))
        return out

    def _forward(self, x):
        pre = []
        activations = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w + b
            pre.append(a)
            h = a if i == len(self.weights) - 1 else np.maximum(a, 0.0)
            activations.append(h)
        return pre, activations

    def loss(self, batch, params=None):
        saved = None
        if params is not None:
            saved = self.get_params()
            self.set_params(params)
        try:
            _, activations = self._forward(batch.inputs)
            logits = activations[-1]
            m = logits.max(axis=1)
            logz = np.log(np.sum(np.exp(logits - m[:, None]), axis=1)) + m
            nll = logz - logits[np.arange(batch.n_samples), batch.labels]
            decay = self.weight_decay * sum(np.sum(w * w) for w in self.weights)
            return float(np.mean(nll) + decay)
        finally:
            if saved is not None:
                self.set_params(saved)

    def loss_and_gradient(self, batch):
        if batch.n_samples == 0:
            raise ValueError("batch must be nonempty")
        pre, activations = self._forward(batch.inputs)
        probs = _softmax(activations[-1])
        delta = (probs - _one_hot(batch.labels, self.n_classes)) / batch.n_samples
        grads = self._backward(delta, pre, activations, include_decay=True)
        loss = self.loss(batch)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss in forward pass")
        return loss, grads

    def _backward(self, delta, pre, activations, include_decay):
        grad_parts = [None] * len(self.weights)
        for layer in range(len(self.weights) - 1, -1, -1):
            dw = activations[layer].T @ delta
            if include_decay:
                dw = dw + 2.0 * self.weight_decay * self.weights[layer]
            db = delta.sum(axis=0)
            grad_parts[layer] = (dw, db)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre[layer - 1] > 0.0)
        return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grad_parts])

    def hessian_vector_product(self, batch, v):
        """Exact Hvp via the forward-over-reverse (R-operator) trick."""
        dirs = self._split(v)
        pre, activations = self._forward(batch.inputs)
        probs = _softmax(activations[-1])
        t = batch.n_samples

        # forward-mode sweep: directional derivatives of pre-activations
        r_act = np.zeros_like(batch.inputs)
        r_pre = []
        for i, ((wd, bd), (w, _b)) in enumerate(zip(dirs, zip(self.weights, self.biases))):
            ra = activations[i] @ wd + r_act @ w + bd
            r_pre.append(ra)
            r_act = ra if i == len(self.weights) - 1 else ra * (pre[i] > 0.0)

        delta = (probs - _one_hot(batch.labels, self.n_classes)) / t
        r_delta = _softmax_hvp(probs, r_pre[-1]) / t

        # reverse sweep of the directional derivative of backprop
        grad_parts = [None] * len(self.weights)
        r_acts = [np.zeros_like(batch.inputs)]
        for i in range(len(self.weights) - 1):
            r_acts.append(r_pre[i] * (pre[i] > 0.0))
        deltas = [None] * len(self.weights)
        deltas[-1] = delta
        for layer in range(len(self.weights) - 1, 0, -1):
            deltas[layer - 1] = (deltas[layer] @ self.weights[layer].T) * (pre[layer - 1] > 0.0)
        for layer in range(len(self.weights) - 1, -1, -1):
            wd, _bd = dirs[layer]
            r_dw = (activations[layer].T @ r_delta + r_acts[layer].T @ deltas[layer]
                    + 2.0 * self.weight_decay * wd)
            r_db = r_delta.sum(axis=0)
            grad_parts[layer] = (r_dw, r_db)
            if layer > 0:
                back = r_delta @ self.weights[layer].T + deltas[layer] @ wd.T
                r_delta = back * (pre[layer - 1] > 0.0)
        return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grad_parts])

    def ggn_vector_product(self, batch, v):
        """J^T H_L (J v): linearized-network curvature, positive semi-definite."""
        dirs = self._split(v)
        pre, activations = self._forward(batch.inputs)
        probs = _softmax(activations[-1])

        r_act = np.zeros_like(batch.inputs)
        for i, ((wd, bd), w) in enumerate(zip(dirs, self.weights)):
            ra = activations[i] @ wd + r_act @ w + bd
            r_act = ra if i == len(self.weights) - 1 else ra * (pre[i] > 0.0)
        jv = r_act  # directional derivative of the logits

        delta = _softmax_hvp(probs, jv) / batch.n_samples
        grad_parts = [None] * len(self.weights)
        for layer in range(len(self.weights) - 1, -1, -1):
            wd, _bd = dirs[layer]
            dw = activations[layer].T @ delta + 2.0 * self.weight_decay * wd
            db = delta.sum(axis=0)
            grad_parts[layer] = (dw, db)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre[layer - 1] > 0.0)
        return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grad_parts])


def loss_and_gradient(model, batch):
    return model.loss_and_gradient(batch)


def hessian_vector_product(model, batch, v):
    return model.hessian_vector_product(batch, v)


def ggn_vector_product(model, batch, v):
    return model.ggn_vector_product(batch, v)


def dense_curvature(model, batch, kind="hessian"):
    """Materialize the curvature matrix column by column (oracle scale only)."""
    n = model.n_params
    product = model.hessian_vector_product if kind == "hessian" else model.ggn_vector_product
    cols = np.empty((n, n))
    eye = np.eye(n)
    for i in range(n):
        cols[:, i] = product(batch, eye[i])
    return DenseSymmetric(entries=(cols + cols.T) / 2.0)


def curvature_operator(model, batch, kind="hessian"):
    """Wrap a model's curvature product as a SymmetricOperator.

    ``abs_hessian`` keeps the Hessian eigenvectors and takes absolute
    eigenvalues; it needs a dense eigendecomposition and is therefore
    restricted to small parameter counts.
    """
    if kind not in CURVATURE_KINDS:
        raise ValueError(f"unknown curvature kind {kind!r}")
    n = model.n_params
    if kind == "hessian":
        return SymmetricOperator(dim=n, apply=lambda v: model.hessian_vector_product(batch, v),
                                 label="hessian")
    if kind == "ggn":
        return SymmetricOperator(dim=n, apply=lambda v: model.ggn_vector_product(batch, v),
                                 label="ggn")
    if n > ABS_HESSIAN_PARAM_CAP:
        raise ValueError(f"abs_hessian requires n_params <= {ABS_HESSIAN_PARAM_CAP}, got {n}")
    dense = dense_curvature(model, batch, kind="hessian")
    vals, vecs = dense_eigendecomposition(dense)
    rebuilt = (vecs * np.abs(vals)) @ vecs.T
    return SymmetricOperator(dim=n, apply=lambda v: rebuilt @ v, label="abs_hessian")


def checkpoint_dict(model):
    """Flat-parameter checkpoint with a shape header, JSON-serializable."""
    if isinstance(model, LogisticRegressionModel):
        return {"kind": "logistic", "d_in": model.d_in, "n_c": model.n_classes,
                "weight_decay": model.weight_decay, "params": model.get_params().tolist()}
    if isinstance(model, MLPModel):
        return {"kind": "mlp", "layer_sizes": list(model.layer_sizes),
                "weight_decay": model.weight_decay, "params": model.get_params().tolist()}
    raise TypeError(f"cannot checkpoint model of type {type(model).__name__}")


def model_from_checkpoint(raw):
    if raw["kind"] == "logistic":
        model = LogisticRegressionModel(int(raw["d_in"]), int(raw["n_c"]),
                                        weight_decay=float(raw.get("weight_decay", 0.0)))
    elif raw["kind"] == "mlp":
        model = MLPModel(raw["layer_sizes"], weight_decay=float(raw.get("weight_decay", 0.0)))
    else:
        raise ValueError(f"unknown checkpoint kind {raw.get('kind')!r}")
    model.set_params(np.asarray(raw["params"], dtype=np.float64))
    return model


def lipschitz_bounds_logreg(dataset, weight_decay):
    """Smoothness/strong-convexity pair (L, mu) for decayed softmax regression.

    For the mean-normalized loss, L = 0.5 * lambda_max(X^T X) / N + 2 gamma
    and mu = 2 gamma.  The 1/2 factor is the spectral bound of the softmax
    output Hessian diag(s) - s s^T, attained when mass concentrates on two
    classes, so the bound certifies for every weight point.
    """
    if dataset.n_samples == 0:
        raise ValueError("dataset must be nonempty")
    gram = dataset.inputs.T @ dataset.inputs
    top = float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0
    lipschitz = 0.5 * top / dataset.n_samples + 2.0 * weight_decay
    return lipschitz, 2.0 * weight_decay


def gradient_noise_stats(model, dataset, batch_size, trials, stream):
    """Minibatch gradient-noise statistics against the full-data gradient.

    Returns the mean of |eps|^2 over trials, the per-coordinate per-sample
    gradient variances (unbiased, ddof=1), and the finite-population
    prediction sum_j S_j^2 * (N - T) / (T N) for sampling without
    replacement.
    """
    n = dataset.n_samples
    if batch_size >= n:
        raise ValueError("batch size must be smaller than the dataset (noise degenerates)")
    _, full_grad = model.loss_and_gradient(dataset)
    rng = stream.generator
    sq_norms = []
    for _ in range(trials):
        idx = rng.choice(n, size=batch_size, replace=False)
        _, g = model.loss_and_gradient(dataset.batch(idx))
        sq_norms.append(float(np.sum((full_grad - g) ** 2)))
    per_sample = np.empty((n, model.n_params))
    for i in range(n):
        _, per_sample[i] = model.loss_and_gradient(dataset.batch(np.array([i])))
    coord_var = per_sample.var(axis=0, ddof=1)
    predicted = float(np.sum(coord_var) * (n - batch_size) / (batch_size * n))
    return float(np.mean(sq_norms)), coord_var, predicted
