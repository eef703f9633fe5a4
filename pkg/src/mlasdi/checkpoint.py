"""Versioned binary checkpoints for trained stacks.

Layout (little-endian, no padding): magic "MLCK", u32 version, a canonical
key=value text dump of the training configuration, the network list
(encoder, stage-1 decoder, residual decoders in stage order), the
coefficient tensor, the GP block (training parameter matrix plus per-GP
hyperparameters), and the epsilon list.  save(load(path)) reproduces the
file byte for byte.

Wall-clock timings deliberately live outside the checkpoint (see
``write_meta``) so that a resumed run and an uninterrupted run produce
bit-identical checkpoints.
"""

import json
import struct

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    ValidationError,
)
from .gp import CoefficientGps, GpCoefficient
from .multistage import StageStack, TrainConfig
from .nets import MlpNetwork

MAGIC = b"MLCK"
VERSION = 1

_ACT_CODE = {"identity": 0, "tanh": 1, "sine": 2}
_ACT_TAG = {v: k for k, v in _ACT_CODE.items()}


def config_to_text(config):
    """Canonical, exactly round-trippable key=value dump of a TrainConfig."""
    hidden = ";".join("-".join(str(w) for w in h) for h in config.hidden)
    lines = [
        f"beta1={config.beta1!r}",
        f"beta2={config.beta2!r}",
        f"hidden={hidden}",
        f"iterations={','.join(str(n) for n in config.iterations)}",
        f"latent_dim={config.latent_dim}",
        f"lr={config.lr!r}",
        f"seed={config.seed}",
        f"threads={config.threads}",
    ]
    return "\n".join(lines) + "\n"


def config_from_text(text):
    fields = {}
    for line in text.strip().splitlines():
        key, _, value = line.partition("=")
        fields[key] = value
    try:
        hidden = tuple(
            tuple(int(w) for w in spec.split("-") if w)
            for spec in fields["hidden"].split(";")
        )
        return TrainConfig(
            latent_dim=int(fields["latent_dim"]),
            hidden=hidden,
            iterations=tuple(int(n) for n in fields["iterations"].split(",")),
            beta1=float(fields["beta1"]),
            beta2=float(fields["beta2"]),
            lr=float(fields["lr"]),
            seed=int(fields["seed"]),
            threads=int(fields["threads"]),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed checkpoint config block: {exc}") from exc


def _pack_array(arr):
    data = np.ascontiguousarray(arr, dtype="<f8")
    return struct.pack("<I", data.ndim) + b"".join(
        struct.pack("<Q", s) for s in data.shape
    ) + data.tobytes()


def _pack_net(net):
    out = [struct.pack("<I", len(net.layer_dims))]
    out += [struct.pack("<Q", d) for d in net.layer_dims]
    out.append(bytes(_ACT_CODE[a] for a in net.activations))
    for w, b in zip(net.weights, net.biases):
        out.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n):
        if self.off + n > len(self.blob):
            raise TruncatedPayloadError(
                f"{self.path}: checkpoint truncated at byte {len(self.blob)}"
            )
        chunk = self.blob[self.off : self.off + n]
        self.off += n
        return chunk

    def u8(self):
        return self.take(1)[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def f64_block(self, shape):
        n = 1
        for s in shape:
            n *= s
        raw = self.take(8 * n)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)

    def array(self):
        ndim = self.u32()
        shape = tuple(self.u64() for _ in range(ndim))
        return self.f64_block(shape)

    def net(self):
        n_dims = self.u32()
        dims = tuple(self.u64() for _ in range(n_dims))
        acts = tuple(_ACT_TAG[c] for c in self.take(n_dims - 1))
        weights, biases = [], []
        for i in range(n_dims - 1):
            weights.append(self.f64_block((dims[i + 1], dims[i])))
            biases.append(self.f64_block((dims[i + 1],)))
        return MlpNetwork(dims, acts, weights, biases)

    def done(self):
        if self.off != len(self.blob):
            raise TruncatedPayloadError(
                f"{self.path}: {len(self.blob) - self.off} trailing bytes"
            )


def save_checkpoint(stack, path):
    """Serialize a trained StageStack; requires fitted GPs."""
    if stack.gps is None:
        raise ValidationError("cannot checkpoint a stack without fitted GPs")
    out = [MAGIC, struct.pack("<I", VERSION)]
    cfg = config_to_text(stack.config).encode("utf-8")
    out.append(struct.pack("<Q", len(cfg)))
    out.append(cfg)
    nets = [stack.encoder, stack.decoder1] + [d for d, _ in stack.residual_stages]
    out.append(struct.pack("<I", len(nets)))
    out += [_pack_net(net) for net in nets]
    out.append(_pack_array(stack.xi))
    out.append(_pack_array(stack.gps.inputs))
    out.append(struct.pack("<I", len(stack.gps.gps)))
    for gp in stack.gps.gps:
        out.append(struct.pack("<ddd", gp.sigma2, gp.lengthscale, gp.jitter))
    eps = [e for _, e in stack.residual_stages]
    out.append(struct.pack("<I", len(eps)))
    out += [struct.pack("<d", e) for e in eps]
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_checkpoint(path):
    """Load a checkpoint back into a StageStack (GP factors recomputed)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an MLCK checkpoint file")
    rd = _Reader(blob, path)
    rd.take(4)
    version = rd.u32()
    if version != VERSION:
        raise UnsupportedVersionError(
            f"{path}: checkpoint version {version} unsupported (reader handles "
            f"{VERSION})"
        )
    cfg_len = rd.u64()
    config = config_from_text(rd.take(cfg_len).decode("utf-8"))
    n_nets = rd.u32()
    if n_nets < 2:
        raise ValidationError(f"{path}: checkpoint must hold at least 2 networks")
    nets = [rd.net() for _ in range(n_nets)]
    xi = rd.array()
    gp_inputs = rd.array()
    n_gps = rd.u32()
    hypers = [struct.unpack("<ddd", rd.take(24)) for _ in range(n_gps)]
    n_eps = rd.u32()
    eps = [rd.f64() for _ in range(n_eps)]
    rd.done()
    if n_eps != n_nets - 2:
        raise ValidationError(
            f"{path}: {n_nets - 2} residual decoders but {n_eps} epsilon values"
        )
    nz = config.latent_dim
    gps = [
        GpCoefficient(gp_inputs, xi[:, idx // nz, idx % nz], s2, ell, jit)
        for idx, (s2, ell, jit) in enumerate(hypers)
    ]
    surrogate = CoefficientGps(gp_inputs, nz, gps)
    stack = StageStack(nets[0], nets[1], xi, surrogate, config)
    stack.residual_stages = list(zip(nets[2:], eps))
    return stack


def write_meta(path, seconds, backend_name):
    """Sidecar metadata (timings) kept outside the bit-contracted checkpoint."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"train_seconds": list(seconds), "backend": backend_name}, fh)
        fh.write("\n")


def read_meta(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        return {}
