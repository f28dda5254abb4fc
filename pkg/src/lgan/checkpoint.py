"""Versioned checkpoint container shared by generators and critics."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import torch
from torch import nn

from .critics import Critic, CriticSpec
from .errors import CheckpointError
from .generator import Generator, GeneratorSpec

FORMAT = "lgan-checkpoint"
VERSION = 1


def save(path: str | os.PathLike, net: nn.Module, *, seed: int, variant: str | None = None) -> None:
    if isinstance(net, Generator):
        kind, spec = "generator", net.spec.to_dict()
    elif isinstance(net, Critic):
        kind, spec = "critic", net.spec.to_dict()
    else:
        raise TypeError(f"cannot checkpoint {type(net).__name__}")
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "spec": spec,
        "seed": int(seed),
        "variant": variant,
        "dtype": str(next(net.parameters()).dtype).removeprefix("torch."),
        "parameters": {k: v.detach().clone() for k, v in net.state_dict().items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    torch.save(payload, tmp)
    os.replace(tmp, path)


def read(path: str | os.PathLike) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an lgan checkpoint")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    return payload


def _restore(net: nn.Module, payload: dict, path) -> nn.Module:
    net = net.to(getattr(torch, payload.get("dtype", "float32")))
    try:
        net.load_state_dict(payload["parameters"])
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameters do not match the stored spec: {exc}") from None
    return net


def load_generator(path: str | os.PathLike) -> Generator:
    payload = read(path)
    if payload["kind"] != "generator":
        raise CheckpointError(f"{path} holds a {payload['kind']}, not a generator")
    return _restore(Generator(GeneratorSpec.from_dict(payload["spec"])), payload, path)


def load_critic(path: str | os.PathLike) -> Critic:
    payload = read(path)
    if payload["kind"] != "critic":
        raise CheckpointError(f"{path} holds a {payload['kind']}, not a critic")
    return _restore(Critic(CriticSpec.from_dict(payload["spec"])), payload, path)
