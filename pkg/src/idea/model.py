"""Gated-bottleneck autoencoder: parameters, fast forward paths, checkpoints.

Architecture (input width p, bottleneck width l):

* encoder: p -> 128 -> 64 -> 32 -> 16 -> l; the first four layers are
  affine -> layernorm -> SiLU, the last is affine only,
* a double multiplicative gate on the bottleneck ("cancel-out" pair):
  gated = latent * relu(w_co1) * relu(w_co2); w_co1 is the sparsity
  gate that eliminates coordinates, w_co2 a free rescaler,
* decoder: l -> 16 -> 32 -> 64 -> 128 -> p, mirroring the encoder.

This module implements the plain-numpy inference paths used for
evaluation and analysis; training gradients flow through a separate
graph built in :mod:`idea.objective`, which mirrors these formulas
operation by operation.

Parameter naming convention (also the checkpoint key order):
``enc{i}_w, enc{i}_b`` plus ``enc{i}_ln_g, enc{i}_ln_b`` for i < 4,
the same with ``dec`` for the decoder, then ``w_co1, w_co2``.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from idea.engine import LAYERNORM_EPS, ContractError, ShapeError

HIDDEN_WIDTHS = (128, 64, 32, 16)

CHECKPOINT_FORMAT = "idea-checkpoint"
CHECKPOINT_SCHEMA_VERSION = 1


@dataclass
class GateState:
    """Which bottleneck coordinates are currently active.

    `last_index` is the active coordinate with the smallest gate weight
    (ties resolved toward the larger index), i.e. the next candidate for
    elimination; None when nothing is active.
    """

    active: np.ndarray
    last_index: int | None

    @property
    def count(self) -> int:
        return int(self.active.size)


def _layer_widths(p: int, l: int):
    enc = [p, *HIDDEN_WIDTHS, l]
    dec = [l, *HIDDEN_WIDTHS[::-1], p]
    return enc, dec


class IdeaModel:
    """Parameter container with inference-only forward passes."""

    def __init__(self, p: int, l: int, params: dict):
        self.p = int(p)
        self.l = int(l)
        self.params = params
        self._validate()

    # ------------------------------------------------------------ setup

    @classmethod
    def initialize(cls, p: int, l: int, rng: np.random.Generator) -> "IdeaModel":
        """Fresh model; affine layers Kaiming-uniform, gates all ones."""
        if p < 1 or l < 1:
            raise ContractError(f"need p >= 1 and l >= 1, got p={p}, l={l}")
        enc, dec = _layer_widths(p, l)
        params: dict[str, np.ndarray] = {}

        def stack(prefix, widths):
            for i in range(5):
                fan_in, fan_out = widths[i], widths[i + 1]
                bound = 1.0 / np.sqrt(fan_in)
                params[f"{prefix}{i}_w"] = rng.uniform(-bound, bound, (fan_in, fan_out))
                params[f"{prefix}{i}_b"] = rng.uniform(-bound, bound, fan_out)
                if i < 4:
                    params[f"{prefix}{i}_ln_g"] = np.ones(fan_out)
                    params[f"{prefix}{i}_ln_b"] = np.zeros(fan_out)

        stack("enc", enc)
        stack("dec", dec)
        params["w_co1"] = np.ones(l)
        params["w_co2"] = np.ones(l)
        return cls(p, l, params)

    def _validate(self):
        enc, dec = _layer_widths(self.p, self.l)
        for prefix, widths in (("enc", enc), ("dec", dec)):
            for i in range(5):
                w = self.params.get(f"{prefix}{i}_w")
                if w is None or w.shape != (widths[i], widths[i + 1]):
                    got = None if w is None else w.shape
                    raise ShapeError(
                        f"{prefix}{i}_w must have shape {(widths[i], widths[i + 1])}, got {got}")
        for gate_name in ("w_co1", "w_co2"):
            if self.params[gate_name].shape != (self.l,):
                raise ShapeError(
                    f"{gate_name} must have shape {(self.l,)}, "
                    f"got {self.params[gate_name].shape}")

    def copy(self) -> "IdeaModel":
        return IdeaModel(self.p, self.l, {k: v.copy() for k, v in self.params.items()})

    # ---------------------------------------------------------- forward

    def _stack(self, x, prefix):
        h = x
        for i in range(5):
            h = h @ self.params[f"{prefix}{i}_w"] + self.params[f"{prefix}{i}_b"]
            if i < 4:
                mu = h.mean(axis=1, keepdims=True)
                var = ((h - mu) ** 2).mean(axis=1, keepdims=True)
                h = (h - mu) / np.sqrt(var + LAYERNORM_EPS)
                h = h * self.params[f"{prefix}{i}_ln_g"] + self.params[f"{prefix}{i}_ln_b"]
                h = h * expit(h)
        return h

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise ShapeError(f"encode expects (n, {self.p}), got {x.shape}")
        return self._stack(x, "enc")

    def gate(self, latent: np.ndarray, zero_last: bool = False) -> np.ndarray:
        """Apply both multiplicative gates to the raw bottleneck output.

        With `zero_last` the currently weakest active gate weight is
        treated as zero, which projects the representation down one
        coordinate without touching the stored parameters.
        """
        if latent.ndim != 2 or latent.shape[1] != self.l:
            raise ShapeError(f"gate expects (n, {self.l}), got {latent.shape}")
        w1 = self.params["w_co1"]
        if zero_last:
            state = self.gate_state()
            if state.last_index is None:
                raise ContractError("zero_last requires at least one active gate weight")
            w1 = w1.copy()
            w1[state.last_index] = 0.0
        return latent * np.maximum(w1, 0.0) * np.maximum(self.params["w_co2"], 0.0)

    def decode(self, gated: np.ndarray) -> np.ndarray:
        if gated.ndim != 2 or gated.shape[1] != self.l:
            raise ShapeError(f"decode expects (n, {self.l}), got {gated.shape}")
        return self._stack(gated, "dec")

    def forward_full(self, x: np.ndarray):
        """One shared encoder pass; returns (xhat, xhat_adj, gated_latent).

        `xhat_adj` is the reconstruction with the weakest active gate
        coordinate zeroed; `gated_latent` is the post-gate bottleneck
        vector that the main decoder pass consumes.
        """
        latent = self.encode(x)
        gated = self.gate(latent)
        gated_adj = self.gate(latent, zero_last=True)
        return self.decode(gated), self.decode(gated_adj), gated

    # ------------------------------------------------------------ gates

    def gate_state(self) -> GateState:
        w = self.params["w_co1"]
        active = np.flatnonzero(w > 0.0)
        if active.size == 0:
            return GateState(active=active, last_index=None)
        smallest = w[active].min()
        last = int(active[w[active] == smallest].max())
        return GateState(active=active, last_index=last)

    def effective_dim(self) -> int:
        return int(np.count_nonzero(self.params["w_co1"] > 0.0))

    def zero_forced(self) -> "IdeaModel":
        """Copy with the weakest active gate weight overwritten to 0."""
        state = self.gate_state()
        if state.last_index is None:
            raise ContractError("zero_forced requires at least one active gate weight")
        snap = self.copy()
        snap.params["w_co1"][state.last_index] = 0.0
        return snap

    # ------------------------------------------------------- checkpoint

    def to_json(self) -> str:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "p": self.p,
            "l": self.l,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }
        # repr-based float serialization round-trips float64 bit-exactly
        return json.dumps(payload, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "IdeaModel":
        payload = json.loads(text)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ContractError(f"not a checkpoint payload: format={payload.get('format')!r}")
        if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise ContractError(
                f"unsupported checkpoint schema_version={payload.get('schema_version')!r}")
        params = {k: np.asarray(v, dtype=np.float64) for k, v in payload["params"].items()}
        return cls(payload["p"], payload["l"], params)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "IdeaModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())
