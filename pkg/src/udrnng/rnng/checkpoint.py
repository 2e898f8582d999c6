"""Self-describing model checkpoints for the RNNG and the LSTM baseline."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import torch

from udrnng.rnng.baseline import LstmLM, TokenVocab
from udrnng.rnng.model import ActionVocab, RnngConfig, RnngModel

MAGIC = "UDRNNG-CKPT"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(model: RnngModel | LstmLM, path: str | Path) -> None:
    if isinstance(model, RnngModel):
        kind, vocab = "rnng", model.vocab.to_dict()
    elif isinstance(model, LstmLM):
        kind, vocab = "lstm", {"tokens": list(model.vocab.tokens)}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    payload = {
        "magic": MAGIC,
        "version": VERSION,
        "kind": kind,
        "config": model.cfg.to_dict(),
        "vocab": vocab,
        "shapes": {k: list(v.shape) for k, v in state.items()},
        "state_dict": state,
    }
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> RnngModel | LstmLM:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"model file not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"{path}: not a readable checkpoint ({e})") from e
    if not isinstance(payload, dict) or payload.get("magic") != MAGIC:
        raise CheckpointError(f"{path}: missing {MAGIC} header")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    cfg = RnngConfig(**payload["config"])
    if payload["kind"] == "rnng":
        v = payload["vocab"]
        model = RnngModel(ActionVocab(list(v["nt_labels"]), list(v["tokens"])), cfg)
    elif payload["kind"] == "lstm":
        model = LstmLM(TokenVocab(payload["vocab"]["tokens"]), cfg)
    else:
        raise CheckpointError(f"{path}: unknown model kind {payload['kind']!r}")
    expected = model.state_dict()
    state = payload["state_dict"]
    missing = sorted(set(expected) - set(state))
    if missing:
        raise CheckpointError(f"{path}: missing parameters {', '.join(missing)}")
    for name, t in state.items():
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected parameter {name}")
        if tuple(t.shape) != tuple(expected[name].shape):
            raise CheckpointError(
                f"{path}: dimension mismatch for {name}: file has {tuple(t.shape)}, "
                f"config implies {tuple(expected[name].shape)}")
    model.load_state_dict(state)
    model.eval()
    return model
