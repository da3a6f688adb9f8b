"""Multilayer perceptrons evaluated through the AD engine.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of shape
``(n, fan_in)`` maps to ``x @ W + b``.  The same forward code runs on plain
arrays (inference) and on lifted tape variables (training).
"""

from dataclasses import dataclass, field

import numpy as np

from . import adcore as ad
from .exceptions import CheckpointError, ValidationError

ACTIVATIONS = ("relu", "sigmoid", "identity")

# name -> (layer sizes, activations); hidden widths are replaced by ``hidden``.
ARCHITECTURES = {
    "encoder": ((11, 64, 64, 7), ("relu", "relu", "sigmoid")),
    "corrector": ((11, 64, 11), ("relu", "identity")),
    "decoder": ((7, 64, 64, 11), ("relu", "relu", "identity")),
    "regressor": ((11, 64, 64, 7), ("relu", "relu", "identity")),
}


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"


@dataclass
class MlpParams:
    layers: list
    arch: str = "custom"
    seed: int = 0
    residual: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def sizes(self):
        return (self.layers[0].weight.shape[0],) + tuple(l.weight.shape[1] for l in self.layers)

    @property
    def activations(self):
        return tuple(l.activation for l in self.layers)

    def arrays(self):
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def set_arrays(self, arrays):
        for i, layer in enumerate(self.layers):
            layer.weight, layer.bias = arrays[2 * i], arrays[2 * i + 1]

    def copy(self):
        layers = [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return MlpParams(layers, self.arch, self.seed, self.residual, dict(self.meta))

    def lift(self, tape):
        """Lift every weight and bias onto ``tape``; returns layers of ``Var`` handles."""
        return [Layer(tape.lift(l.weight), tape.lift(l.bias), l.activation) for l in self.layers]

    def to_dict(self, prefix=""):
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}{i}/W"] = layer.weight
            out[f"{prefix}{i}/b"] = layer.bias
        return out

    def describe(self):
        return {"arch": self.arch, "seed": self.seed, "residual": self.residual,
                "sizes": list(self.sizes), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, desc, arrays, prefix=""):
        """Rebuild from :meth:`describe` output plus named arrays, checking every shape."""
        sizes, acts = desc["sizes"], desc["activations"]
        layers = []
        for i, act in enumerate(acts):
            try:
                W = np.asarray(arrays[f"{prefix}{i}/W"], dtype=float)
                b = np.asarray(arrays[f"{prefix}{i}/b"], dtype=float)
            except KeyError as exc:
                raise CheckpointError(f"missing array {exc}") from exc
            if W.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise CheckpointError(
                    f"layer {prefix}{i}: shapes {W.shape}/{b.shape} do not match "
                    f"declared {(sizes[i], sizes[i + 1])}"
                )
            layers.append(Layer(W, b, act))
        return cls(layers, desc["arch"], desc["seed"], desc["residual"])


def architecture(name, hidden=64):
    sizes, acts = ARCHITECTURES[name]
    return (sizes[0],) + (hidden,) * (len(sizes) - 2) + (sizes[-1],), acts


def init(arch, seed=0, hidden=64, zero_last=None, sizes=None, activations=None):
    """Glorot-uniform weights, zero biases; deterministic per ``seed``.

    ``arch`` is a name from ``ARCHITECTURES`` or ``"custom"`` with explicit
    ``sizes``/``activations``.  The corrector's last layer is zeroed so the
    residual block starts as the identity.
    """
    if arch != "custom":
        sizes, activations = architecture(arch, hidden)
    if sizes is None or activations is None or len(sizes) != len(activations) + 1:
        raise ValidationError("layer sizes and activations do not chain")
    for a in activations:
        if a not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {a!r}")
    residual = arch == "corrector"
    if zero_last is None:
        zero_last = residual
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-s, s, size=(fan_in, fan_out))
        if zero_last and i == len(activations) - 1:
            W = np.zeros_like(W)
        layers.append(Layer(W, np.zeros(fan_out), activations[i]))
    return MlpParams(layers, arch, seed, residual)


def _activate(h, name):
    if name == "relu":
        return ad.relu(h)
    if name == "sigmoid":
        return ad.sigmoid(h)
    return h


def mlp_forward(p, x, tape=None):
    """Apply the MLP to a batch ``x`` (array or ``Var``).

    ``p`` is :class:`MlpParams` (weights act as constants) or the lifted layer
    list from :meth:`MlpParams.lift`.  Passing ``tape`` with plain params lifts
    them first.
    """
    layers = p.lift(tape) if (tape is not None and isinstance(p, MlpParams)) else p
    layers = layers.layers if isinstance(layers, MlpParams) else layers
    width = np.shape(layers[0].weight.value if isinstance(layers[0].weight, ad.Var) else layers[0].weight)[0]
    n_in = np.shape(x.value if isinstance(x, ad.Var) else x)[-1]
    if n_in != width:
        raise ValidationError(f"input has {n_in} features, expected {width}")
    h = x
    for layer in layers:
        h = _activate(ad.matmul(h, layer.weight) + layer.bias, layer.activation)
    return h


def corrector_forward(p, spectrum, tape=None):
    """Residual bias corrector: ``spectrum + MLP(spectrum)``."""
    return spectrum + mlp_forward(p, spectrum, tape)
