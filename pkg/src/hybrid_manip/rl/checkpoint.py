"""Versioned binary policy checkpoints.

Layout: a magic line, one line of JSON header (metadata plus the name and
shape of every array), then the arrays as contiguous little-endian float64
in header order. Round-trips bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hybrid_manip.rl.mlp import MlpParams

MAGIC = b"HMCKPT\n"
FORMAT_VERSION = 1


@dataclass
class PolicyCheckpoint:
    algo: str  # "ppo" | "sac"
    skill: str
    obs_dim: int
    action_dim: int
    seed: int
    nets: dict[str, MlpParams] = field(default_factory=dict)
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def _arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name in sorted(self.nets):
            net = self.nets[name]
            for l, (w, b) in enumerate(zip(net.weights, net.biases)):
                out.append((f"{name}.W{l}", w))
                out.append((f"{name}.b{l}", b))
        for name in sorted(self.vectors):
            out.append((name, self.vectors[name]))
        return out

    def to_bytes(self) -> bytes:
        arrays = self._arrays()
        header = {
            "version": self.version,
            "algo": self.algo,
            "skill": self.skill,
            "obs_dim": self.obs_dim,
            "action_dim": self.action_dim,
            "seed": self.seed,
            "nets": {name: list(net.sizes) for name, net in sorted(self.nets.items())},
            "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        }
        payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
        return MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "PolicyCheckpoint":
        if not data.startswith(MAGIC):
            raise ValueError("not a policy checkpoint (bad magic)")
        rest = data[len(MAGIC) :]
        nl = rest.index(b"\n")
        header = json.loads(rest[:nl])
        if header["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        payload = rest[nl + 1 :]
        offset = 0
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
            arrays[spec["name"]] = np.ascontiguousarray(arr)
            offset += 8 * count
        if offset != len(payload):
            raise ValueError("checkpoint payload length does not match header")
        nets = {}
        for name, sizes in header["nets"].items():
            n_layers = len(sizes) - 1
            nets[name] = MlpParams(
                tuple(sizes),
                [arrays.pop(f"{name}.W{l}") for l in range(n_layers)],
                [arrays.pop(f"{name}.b{l}") for l in range(n_layers)],
            )
        return cls(
            algo=header["algo"],
            skill=header["skill"],
            obs_dim=int(header["obs_dim"]),
            action_dim=int(header["action_dim"]),
            seed=int(header["seed"]),
            nets=nets,
            vectors=arrays,
            version=header["version"],
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "PolicyCheckpoint":
        return cls.from_bytes(Path(path).read_bytes())
