"""Shallow tanh network evaluation with spatial and parameter derivatives.

Everything downstream consumes DerivativeBundle traces: value, gradient and
second derivatives at a batch of points.  For depth-1 networks the unit
traces have closed forms in the tanh derivative chain; deeper networks are
handled by a forward chain rule through the layers.  Parameter derivatives
(needed by the training loop and its tests) are computed by forward-mode
propagation of one tangent per parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DERIV_KEYS = ("val", "dx", "dy", "dxx", "dxy", "dyy")


@dataclass
class DerivativeBundle:
    """Value, gradient and second-derivative traces at a batch of points.

    Arrays share a trailing point axis; leading axes (if any) index units.
    """

    val: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dxy: np.ndarray
    dyy: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in DERIV_KEYS}

    @classmethod
    def zeros(cls, shape):
        return cls(*(np.zeros(shape) for _ in DERIV_KEYS))


@dataclass
class NeuralField:
    """Feedforward tanh network sum_k c_k (sigma o T_L o ... o T_1)(x)_k.

    weights[j] maps layer width n_j -> n_{j+1} with n_0 = 2 (spatial dim);
    the activation is sigma(t) = tanh(scale * t) throughout.
    """

    weights: list
    biases: list
    c: np.ndarray
    scale: float

    @property
    def depth(self):
        return len(self.weights)

    @property
    def width(self):
        return self.weights[-1].shape[1]


def init_network(width, depth, scale, seed):
    """Fresh network with W, b ~ U[-1, 1] entrywise and zero output weights."""
    if width < 1 or depth < 1:
        raise ValueError(f"need width >= 1 and depth >= 1, got {width}, {depth}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n_prev = 2
    for _ in range(depth):
        weights.append(rng.uniform(-1.0, 1.0, size=(n_prev, width)))
        biases.append(rng.uniform(-1.0, 1.0, size=width))
        n_prev = width
    return NeuralField(weights=weights, biases=biases, c=np.zeros(width), scale=scale)


def tanh_chain(t, s):
    """tanh(s t) and its first three derivatives with respect to t."""
    tau = np.tanh(s * t)
    sech2 = 1.0 - tau * tau
    sp = s * sech2
    spp = -2.0 * s * s * tau * sech2
    sppp = -2.0 * s**3 * sech2 * (1.0 - 3.0 * tau * tau)
    return tau, sp, spp, sppp


def _activation_tangent(layer, dpre):
    """Tangent of one layer's output given the tangent of its preactivation."""
    sp, spp, sppp = layer["sp"], layer["spp"], layer["sppp"]
    pre = layer["pre"]
    dv = dpre["val"]
    out = {
        "val": sp * dv,
        "dx": spp * dv * pre["dx"] + sp * dpre["dx"],
        "dy": spp * dv * pre["dy"] + sp * dpre["dy"],
        "dxx": sppp * dv * pre["dx"] ** 2
        + 2.0 * spp * pre["dx"] * dpre["dx"]
        + spp * dv * pre["dxx"]
        + sp * dpre["dxx"],
        "dxy": sppp * dv * pre["dx"] * pre["dy"]
        + spp * (dpre["dx"] * pre["dy"] + pre["dx"] * dpre["dy"])
        + spp * dv * pre["dxy"]
        + sp * dpre["dxy"],
        "dyy": sppp * dv * pre["dy"] ** 2
        + 2.0 * spp * pre["dy"] * dpre["dy"]
        + spp * dv * pre["dyy"]
        + sp * dpre["dyy"],
    }
    return out


def _forward(field, pts):
    """Forward pass keeping per-layer preactivation traces and tanh chains."""
    pts = np.asarray(pts, dtype=float)
    n_pts = len(pts)
    state = {
        "val": pts.copy(),
        "dx": np.tile([1.0, 0.0], (n_pts, 1)),
        "dy": np.tile([0.0, 1.0], (n_pts, 1)),
        "dxx": np.zeros((n_pts, 2)),
        "dxy": np.zeros((n_pts, 2)),
        "dyy": np.zeros((n_pts, 2)),
    }
    layers = []
    for W, b in zip(field.weights, field.biases):
        pre = {k: state[k] @ W for k in DERIV_KEYS}
        pre["val"] = pre["val"] + b
        tau, sp, spp, sppp = tanh_chain(pre["val"], field.scale)
        out = {
            "val": tau,
            "dx": sp * pre["dx"],
            "dy": sp * pre["dy"],
            "dxx": spp * pre["dx"] ** 2 + sp * pre["dxx"],
            "dxy": spp * pre["dx"] * pre["dy"] + sp * pre["dxy"],
            "dyy": spp * pre["dy"] ** 2 + sp * pre["dyy"],
        }
        layers.append(
            {
                "input": state,
                "pre": pre,
                "sp": sp,
                "spp": spp,
                "sppp": sppp,
                "out": out,
            }
        )
        state = out
    return layers


def eval_bundle(field, pts):
    """Per-unit bundles of the last hidden layer and the assembled field.

    Returns (units, assembled): units holds (width, n_points) arrays for the
    activation basis; assembled is the c-weighted combination, (n_points,).
    """
    layers = _forward(field, pts)
    last = layers[-1]["out"]
    units = DerivativeBundle(**{k: last[k].T.copy() for k in DERIV_KEYS})
    assembled = DerivativeBundle(**{k: last[k] @ field.c for k in DERIV_KEYS})
    return units, assembled


def _propagate_tangent(field, layers, start, dstate):
    for layer, W in zip(layers[start:], field.weights[start:]):
        dpre = {k: dstate[k] @ W for k in DERIV_KEYS}
        dstate = _activation_tangent(layer, dpre)
    return dstate


def param_jacobian(field, pts, deriv_order=2):
    """Derivative of the assembled field's bundle w.r.t. every W and b entry.

    Returns a list of (label, DerivativeBundle) pairs where label is
    ("W", layer, i, j) or ("b", layer, j).  Entries above deriv_order are
    zeroed.  Forward-mode: one tangent propagation per parameter, exact for
    any depth.
    """
    if not 0 <= deriv_order <= 2:
        raise ValueError(f"deriv_order must be in 0..2, got {deriv_order}")
    pts = np.asarray(pts, dtype=float)
    layers = _forward(field, pts)
    n_pts = len(pts)
    results = []
    for ell, (W, b) in enumerate(zip(field.weights, field.biases)):
        inp = layers[ell]["input"]
        n_in, n_out = W.shape
        for j in range(n_out):
            for i in range(n_in + 1):  # i == n_in encodes the bias entry
                dpre = {k: np.zeros((n_pts, n_out)) for k in DERIV_KEYS}
                if i < n_in:
                    for k in DERIV_KEYS:
                        dpre[k][:, j] = inp[k][:, i]
                    label = ("W", ell, i, j)
                else:
                    dpre["val"][:, j] = 1.0
                    label = ("b", ell, j)
                dstate = _activation_tangent(layers[ell], dpre)
                dstate = _propagate_tangent(field, layers, ell + 1, dstate)
                bundle = DerivativeBundle(**{k: dstate[k] @ field.c for k in DERIV_KEYS})
                if deriv_order < 2:
                    bundle.dxx = np.zeros(n_pts)
                    bundle.dxy = np.zeros(n_pts)
                    bundle.dyy = np.zeros(n_pts)
                if deriv_order < 1:
                    bundle.dx = np.zeros(n_pts)
                    bundle.dy = np.zeros(n_pts)
                results.append((label, bundle))
    return results
