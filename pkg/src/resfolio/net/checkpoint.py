"""Lossless JSON checkpoints: architecture spec + base64-encoded float64 arrays."""

from __future__ import annotations

import base64
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..ioutil import atomic_write_text
from .model import Network, NetworkSpec

FORMAT = "resfolio-checkpoint-v1"


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii"),
    }


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


def network_to_dict(net: Network, metadata: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "spec": asdict(net.spec),
        "seed": net.seed,
        "state": {name: encode_array(arr) for name, arr in net.state().items()},
        "metadata": metadata or {},
    }


def network_from_dict(d: dict) -> Network:
    if d.get("format") != FORMAT:
        raise FormatError(f"unknown checkpoint format {d.get('format')!r}")
    spec_d = dict(d["spec"])
    for key in ("psi1_hidden", "psi2_hidden", "mlp_hidden", "taus"):
        spec_d[key] = tuple(spec_d[key])
    net = Network(NetworkSpec(**spec_d), seed=int(d["seed"]))
    state = net.state()
    saved = d["state"]
    if set(saved) != set(state):
        raise FormatError(
            f"checkpoint state keys do not match architecture: "
            f"missing {sorted(set(state) - set(saved))}, extra {sorted(set(saved) - set(state))}"
        )
    for name, arr in state.items():
        loaded = decode_array(saved[name])
        if loaded.shape != arr.shape:
            raise FormatError(f"array '{name}' has shape {loaded.shape}, expected {arr.shape}")
        arr[...] = loaded
    return net


def save_network(path: str | Path, net: Network, metadata: dict | None = None) -> None:
    atomic_write_text(path, json.dumps(network_to_dict(net, metadata), sort_keys=True) + "\n")


def load_network(path: str | Path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))
