"""Deterministic float64 numeric kernel.

Everything downstream (translation embeddings, the BiLSTM ranker) is built on
these pieces: activations, a stable softmax, cross-entropy, named parameters
with explicit gradients, SGD/Adam steps, and a central-difference gradient
checker. Gradients are hand-derived throughout the package; the checker in
here is the safety net.

Randomness comes from numpy's PCG64 generator. Identical seeds give identical
streams on every platform numpy supports, which is what makes whole-pipeline
runs reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np


class EmptyInput(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class NonPositivePrediction(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def make_rng(seed, *stream):
    """Seeded PCG64 generator. Extra `stream` ints derive independent substreams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed),) + tuple(int(s) for s in stream))))


def check_finite(arr, what="array"):
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf")
    return arr


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_prime(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_prime(x):
    t = np.tanh(x)
    return 1.0 - t * t


def softmax(scores):
    """Stable softmax: positive outputs summing to 1, argmax preserved."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyInput("softmax of an empty vector")
    check_finite(scores, "softmax input")
    shifted = scores - scores.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


def cross_entropy(gold, predicted):
    """-sum(gold_i * log(predicted_i)).

    `gold` is the target distribution (entries >= 0, summing to 1),
    `predicted` must be strictly positive everywhere.
    """
    gold = np.asarray(gold, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if gold.shape != predicted.shape:
        raise LengthMismatch(f"gold has shape {gold.shape}, predicted {predicted.shape}")
    if np.any(predicted <= 0.0):
        raise NonPositivePrediction("predicted distribution has entries <= 0")
    return float(-np.dot(gold, np.log(predicted)))


def entropy(p):
    """Shannon entropy in nats with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0.0
    return float(-np.dot(p[nz], np.log(p[nz])))


class Parameter:
    """A named value/grad pair. Shapes of the two always match."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = name
        self.value = check_finite(np.array(value, dtype=np.float64), f"parameter {name}")
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Sgd:
    """value <- value - lr * grad, then grads are zeroed."""

    kind = "sgd"

    def __init__(self, learning_rate):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.step_count = 0

    def step(self, params):
        for p in params:
            p.value -= self.learning_rate * p.grad
            p.zero_grad()
        self.step_count += 1


class Adam:
    """Bias-corrected Adam with (beta1, beta2, eps) = (0.9, 0.999, 1e-8)."""

    kind = "adam"

    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {}
        self._v = {}

    def step(self, params):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for p in params:
            m = self._m.get(p.name)
            if m is None:
                m = self._m[p.name] = np.zeros_like(p.value)
                self._v[p.name] = np.zeros_like(p.value)
            v = self._v[p.name]
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * (p.grad * p.grad)
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p.value -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
            p.zero_grad()


def make_optimizer(kind, learning_rate):
    if kind == "sgd":
        return Sgd(learning_rate)
    if kind == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer kind {kind!r}")


def finite_diff_check(loss_fn, params, epsilon=1e-4, max_coords_per_param=30, rng=None):
    """Compare analytic gradients against central differences.

    The caller must have already run its backward pass so that every
    parameter's `.grad` holds the analytic gradient at the current point;
    `loss_fn()` re-evaluates the scalar loss from the current parameter
    values and must be deterministic.

    For each parameter, up to `max_coords_per_param` coordinates are checked
    (all of them when the parameter is small, an rng-sampled subset
    otherwise). Returns the maximum of

        |analytic - numeric| / max(1e-8, |analytic| + |numeric|)

    over every checked coordinate.

    The default epsilon sits at the top of the permitted range: for
    coordinates whose gradient is below the 1e-8 denominator floor, the
    difference (f+ - f-) carries about one ulp of |loss| in rounding noise,
    so the reported error scales as ulp(loss) / (2 * epsilon * 1e-8) and a
    smaller epsilon only amplifies it.
    """
    if not (1e-7 <= epsilon <= 1e-4):
        raise ValueError("epsilon must lie in [1e-7, 1e-4]")
    if rng is None:
        rng = make_rng(0)
    worst = 0.0
    for p in params:
        flat_value = p.value.reshape(-1)
        flat_grad = p.grad.reshape(-1)
        n = flat_value.size
        if n <= max_coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        for idx in coords:
            original = flat_value[idx]
            flat_value[idx] = original + epsilon
            f_plus = loss_fn()
            flat_value[idx] = original - epsilon
            f_minus = loss_fn()
            flat_value[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            analytic = flat_grad[idx]
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            if rel > worst:
                worst = rel
    return worst
