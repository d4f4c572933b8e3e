"""Model checkpoints.

Layout (little-endian)::

    magic "VALMCKPT" | version u32 | checksum u32 (CRC-32 of the body)
    body: config JSON (u32 length + UTF-8) | dtype code u32 | tensor count u32
          per tensor: name (u32 length + UTF-8) | ndim u32 | ndim x u32 shape | data

Tensors follow ``param_shapes`` order and are written in the model dtype.
"""

import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.common.binio import CODE_DTYPES, DTYPE_CODES, BinaryReader, BinaryWriter, Truncated, checksum
from app.common.files import write_bytes_atomic
from app.fusion_lm import constants
from app.fusion_lm.exceptions import ConfigMismatch, CorruptCheckpoint, IoFailure
from app.fusion_lm.models import ModelState, param_shapes
from app.fusion_lm.schemas import ModelConfig

logger = logging.getLogger(__name__)


def dump_checkpoint(model: ModelState) -> bytes:
    dtype = model.config.np_dtype.newbyteorder("<")
    body = BinaryWriter()
    body.text(model.config.model_dump_json())
    body.u32(DTYPE_CODES[dtype])
    shapes = param_shapes(model.config)
    body.u32(len(shapes))
    for name in shapes:
        tensor = model.params[name]
        body.text(name)
        body.u32(tensor.ndim)
        for size in tensor.shape:
            body.u32(size)
        body.array(tensor, dtype.str)
    payload = body.getvalue()

    writer = BinaryWriter()
    writer.raw(constants.CHECKPOINT_MAGIC)
    writer.u32(constants.CHECKPOINT_VERSION)
    writer.u32(checksum(payload))
    writer.raw(payload)
    return writer.getvalue()


def save_checkpoint(model: ModelState, path: str | Path) -> None:
    data = dump_checkpoint(model)
    try:
        write_bytes_atomic(path, data)
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
    logger.info(f"Saved checkpoint with {model.n_params} parameters to {path}")


def parse_checkpoint(data: bytes, source: str = "<bytes>") -> ModelState:
    reader = BinaryReader(data)
    try:
        if reader.raw(len(constants.CHECKPOINT_MAGIC)) != constants.CHECKPOINT_MAGIC:
            raise CorruptCheckpoint(source, "bad magic")
        version = reader.u32()
        if version != constants.CHECKPOINT_VERSION:
            raise CorruptCheckpoint(source, f"unsupported version {version}")
        expected = reader.u32()
        if checksum(data[reader.offset :]) != expected:
            raise CorruptCheckpoint(source, "checksum mismatch")
        try:
            config = ModelConfig.model_validate(json.loads(reader.text()))
        except (ValueError, ValidationError) as exc:
            raise CorruptCheckpoint(source, f"invalid config: {exc}") from exc
        dtype = CODE_DTYPES.get(reader.u32())
        if dtype is None:
            raise CorruptCheckpoint(source, "unknown dtype code")

        expected_shapes = param_shapes(config)
        if reader.u32() != len(expected_shapes):
            raise ConfigMismatch("tensor count differs from the stored config")
        params = {}
        for name, shape in expected_shapes.items():
            stored_name = reader.text()
            stored_shape = tuple(reader.u32() for _ in range(reader.u32()))
            if stored_name != name or stored_shape != shape:
                raise ConfigMismatch(f"expected {name}{shape}, found {stored_name}{stored_shape}")
            params[name] = reader.array(dtype.str, int(np.prod(shape))).reshape(shape).astype(config.np_dtype)
    except Truncated as exc:
        raise CorruptCheckpoint(source, "truncated") from exc
    if not reader.exhausted:
        raise CorruptCheckpoint(source, "trailing bytes")
    return ModelState(config=config, params=params)


def load_checkpoint(path: str | Path, expected: ModelConfig | None = None) -> ModelState:
    """
    Read a checkpoint, optionally requiring a given configuration.

    Raises:
        ConfigMismatch: ``expected`` is given and differs from the stored config
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
    model = parse_checkpoint(data, str(path))
    if expected is not None and expected != model.config:
        diff = {
            key: (value, getattr(model.config, key))
            for key, value in expected.model_dump().items()
            if getattr(model.config, key) != value
        }
        raise ConfigMismatch(f"differing fields {diff}")
    logger.info(f"Loaded checkpoint from {path}")
    return model
