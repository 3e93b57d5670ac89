import json
import logging
import struct
import numpy as np
import torch
import torch.nn as nn
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Tuple, Union

from dcc_segmenter.utils.errors import ModelError

logger = logging.getLogger(__name__)

MAGIC = b"DCCK"
PAYLOAD_DTYPE = np.dtype("<f8")


def save_checkpoint(path: Union[str, Path], model: nn.Module, header: Dict[str, Any]) -> Path:
    """
    Write ``MAGIC | uint32 header length | JSON header | float64 payload``

    The payload holds every state tensor flattened in declaration order.
    """
    state = model.state_dict()
    header = dict(header)
    header["tensors"] = [{"name": name, "shape": list(tensor.shape)} for name, tensor in state.items()]
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=PAYLOAD_DTYPE).tobytes() for tensor in state.values()
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", len(header_bytes)))
        handle.write(header_bytes)
        handle.write(payload)
    logger.info(f"Saved {header.get('kind', 'model')} checkpoint with {len(state)} tensors to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    """Read a checkpoint back into its header and named float64 arrays"""
    path = Path(path)
    if not path.exists():
        raise ModelError(f"checkpoint {path} does not exist", code="model.checkpoint_missing")
    raw = path.read_bytes()
    if raw[:4] != MAGIC or len(raw) < 8:
        raise ModelError(f"{path} is not a checkpoint file", code="model.checkpoint_format")
    (length,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8 : 8 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelError(f"corrupt checkpoint header in {path}: {e}", code="model.checkpoint_format") from e

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = 8 + length
    for entry in header.get("tensors", []):
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        end = offset + count * PAYLOAD_DTYPE.itemsize
        if end > len(raw):
            raise ModelError(f"checkpoint {path} payload is truncated", code="model.checkpoint_format")
        tensors[entry["name"]] = np.frombuffer(raw[offset:end], dtype=PAYLOAD_DTYPE).reshape(entry["shape"]).copy()
        offset = end
    if offset != len(raw):
        raise ModelError(f"checkpoint {path} has {len(raw) - offset} trailing bytes", code="model.checkpoint_format")
    return header, tensors


def restore(module: nn.Module, tensors: Dict[str, np.ndarray], prefix: str = "") -> nn.Module:
    """Load the tensors named ``prefix + key`` into ``module``"""
    state = OrderedDict()
    for key in module.state_dict():
        name = prefix + key
        if name not in tensors:
            raise ModelError(f"checkpoint has no tensor '{name}'", code="model.checkpoint_mismatch")
        state[key] = torch.from_numpy(tensors[name])
    module.load_state_dict(state)
    return module
