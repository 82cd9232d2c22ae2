"""MLP policies on flat parameter vectors with hand-derived gradients.

A policy is a pair (ArchSpec, flat float64 vector). The categorical head
applies tanh to the raw outputs before the softmax, so logits live in
[-1, 1]; the gaussian head maps the tanh outputs affinely onto the action
bounds and carries a state-independent learned log-std vector at the tail
of the parameter vector.

The functions here are the straightforward vectorized-numpy reference
path; the fused per-step loops live in kernels/ and are tested against
this module.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class ArchSpec:
    input_dim: int
    hidden: tuple
    activation: str = "relu"  # relu | tanh
    head: str = "categorical"  # categorical | gaussian
    out_dim: int = 2  # action count (categorical) or action dim (gaussian)
    lo: float = -3.0  # gaussian action bounds
    hi: float = 3.0
    # raw_logits drops the output tanh on the categorical head so the
    # policy can approach determinism; without it the logit spread is
    # capped at 2 and training collapses after reaching the optimum
    raw_logits: bool = True

    def __post_init__(self):
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in ("categorical", "gaussian"):
            raise ValueError(f"unknown head {self.head!r}")

    @property
    def widths(self):
        return np.array((self.input_dim,) + tuple(self.hidden) + (self.out_dim,),
                        dtype=np.int64)

    @property
    def act_code(self):
        return kernels.ACT_RELU if self.activation == "relu" else kernels.ACT_TANH

    @property
    def head_code(self):
        return (kernels.HEAD_CATEGORICAL if self.head == "categorical"
                else kernels.HEAD_GAUSSIAN)

    @property
    def out_tanh(self):
        # gaussian means must stay bounded, so only the categorical head
        # may run with raw output logits
        if self.head == "categorical" and self.raw_logits:
            return 0
        return 1

    @property
    def core_dim(self):
        w = self.widths
        return int(sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1)))

    @property
    def param_dim(self):
        d = self.core_dim
        if self.head == "gaussian":
            d += self.out_dim
        return d

    def to_dict(self):
        return {"input_dim": self.input_dim, "hidden": list(self.hidden),
                "activation": self.activation, "head": self.head,
                "out_dim": self.out_dim, "lo": self.lo, "hi": self.hi,
                "raw_logits": self.raw_logits}

    @classmethod
    def from_dict(cls, d):
        return cls(input_dim=d["input_dim"], hidden=tuple(d["hidden"]),
                   activation=d["activation"], head=d["head"],
                   out_dim=d["out_dim"], lo=d["lo"], hi=d["hi"],
                   raw_logits=d.get("raw_logits", False))


def init_params(arch, rng):
    """Glorot-uniform weights, zero biases, zero log-std."""
    theta = np.zeros(arch.param_dim)
    w = arch.widths
    off = 0
    for l in range(len(w) - 1):
        fi, fo = int(w[l]), int(w[l + 1])
        lim = np.sqrt(6.0 / (fi + fo))
        theta[off:off + fi * fo] = rng.uniform(-lim, lim, fi * fo)
        off += fi * fo + fo  # biases stay zero
    return theta


def unpack(arch, theta):
    """Split the flat vector into [(W, b), ...] plus the log-std tail."""
    theta = np.asarray(theta)
    if theta.shape != (arch.param_dim,):
        raise ValueError(f"parameter vector has shape {theta.shape}, "
                         f"expected ({arch.param_dim},)")
    w = arch.widths
    layers = []
    off = 0
    for l in range(len(w) - 1):
        fi, fo = int(w[l]), int(w[l + 1])
        W = theta[off:off + fi * fo].reshape(fi, fo)
        b = theta[off + fi * fo:off + fi * fo + fo]
        layers.append((W, b))
        off += fi * fo + fo
    log_std = theta[off:] if arch.head == "gaussian" else None
    return layers, log_std


def _forward_acts(arch, theta, s):
    layers, _ = unpack(arch, theta)
    a = np.asarray(s, dtype=float)
    if a.shape != (arch.input_dim,):
        raise ValueError(f"state has shape {a.shape}, expected ({arch.input_dim},)")
    acts = [a]
    for l, (W, b) in enumerate(layers):
        z = a @ W + b
        if l == len(layers) - 1:
            a = np.tanh(z) if arch.out_tanh else z
        elif arch.activation == "tanh":
            a = np.tanh(z)
        else:
            a = np.maximum(z, 0.0)
        acts.append(a)
    return acts


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass
class Categorical:
    probs: np.ndarray


@dataclass
class Gaussian:
    mean: np.ndarray
    std: np.ndarray


def action_distribution(arch, theta, s):
    acts = _forward_acts(arch, theta, s)
    out = acts[-1]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite policy activations")
    if arch.head == "categorical":
        return Categorical(probs=_softmax(out))
    _, log_std = unpack(arch, theta)
    c1 = 0.5 * (arch.hi - arch.lo)
    c0 = 0.5 * (arch.hi + arch.lo)
    return Gaussian(mean=c0 + c1 * out, std=np.exp(log_std))


def sample_action(arch, theta, s, rng):
    dist = action_distribution(arch, theta, s)
    if isinstance(dist, Categorical):
        u = rng.random()
        return int(np.searchsorted(np.cumsum(dist.probs), u))
    a = dist.mean + dist.std * rng.standard_normal(arch.out_dim)
    return np.clip(a, arch.lo, arch.hi)


def greedy_action(arch, theta, s):
    """Deterministic test-time action: argmax probability (ties to the
    smaller index) or the clamped gaussian mean."""
    dist = action_distribution(arch, theta, s)
    if isinstance(dist, Categorical):
        return int(np.argmax(dist.probs))
    return np.clip(dist.mean, arch.lo, arch.hi)


def logprob(arch, theta, s, a):
    dist = action_distribution(arch, theta, s)
    if isinstance(dist, Categorical):
        return float(np.log(dist.probs[int(a)]))
    a = np.asarray(a, dtype=float).reshape(arch.out_dim)
    z = (a - dist.mean) / dist.std
    return float(np.sum(-0.5 * z * z - np.log(dist.std) - 0.5 * np.log(2 * np.pi)))


def logprob_grad(arch, theta, s, a):
    """Exact gradient of log pi(a|s) w.r.t. every entry of theta."""
    layers, log_std = unpack(arch, theta)
    acts = _forward_acts(arch, theta, s)
    out = acts[-1]
    grad = np.zeros(arch.param_dim)

    if arch.head == "categorical":
        p = _softmax(out)
        onehot = np.zeros(arch.out_dim)
        onehot[int(a)] = 1.0
        delta = onehot - p
        if arch.out_tanh:
            delta = delta * (1.0 - out * out)
    else:
        a = np.asarray(a, dtype=float).reshape(arch.out_dim)
        c1 = 0.5 * (arch.hi - arch.lo)
        c0 = 0.5 * (arch.hi + arch.lo)
        mean = c0 + c1 * out
        var = np.exp(2.0 * log_std)
        diff = a - mean
        delta = diff / var * c1 * (1.0 - out * out)
        grad[arch.core_dim:] = diff * diff / var - 1.0

    off_end = arch.core_dim
    for l in range(len(layers) - 1, -1, -1):
        W, _ = layers[l]
        fi, fo = W.shape
        off = off_end - (fi * fo + fo)
        grad[off:off + fi * fo] = np.outer(acts[l], delta).reshape(-1)
        grad[off + fi * fo:off_end] = delta
        if l > 0:
            back = W @ delta
            h = acts[l]
            if arch.activation == "relu":
                back = np.where(h > 0.0, back, 0.0)
            else:
                back = back * (1.0 - h * h)
            delta = back
        off_end = off
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite log-probability gradient")
    return grad


MAGIC = b"FRLP"


def save_params(path, arch, theta):
    """Checkpoint format: one JSON descriptor line, then '<Q' length d,
    then d little-endian float64 values."""
    theta = np.asarray(theta, dtype=np.float64)
    with open(path, "wb") as f:
        f.write(MAGIC + json.dumps(arch.to_dict()).encode() + b"\n")
        f.write(struct.pack("<Q", theta.size))
        f.write(theta.astype("<f8").tobytes())


def load_params(path):
    with open(path, "rb") as f:
        header = f.readline()
        if not header.startswith(MAGIC):
            raise ValueError(f"{path}: not a parameter checkpoint")
        arch = ArchSpec.from_dict(json.loads(header[len(MAGIC):].decode()))
        (d,) = struct.unpack("<Q", f.read(8))
        theta = np.frombuffer(f.read(8 * d), dtype="<f8").astype(np.float64)
    if theta.size != d or d != arch.param_dim:
        raise ValueError(f"{path}: truncated or inconsistent checkpoint")
    return arch, theta
