"""
On-disk problem instances.

An instance directory holds ``X.bin``, ``U.bin``, ``B.bin`` and ``y.bin`` as raw
little-endian float64 (or complex128) data in column-major order, together with
``instance.json`` describing shapes, dtypes, the seed and the ensemble
parameters. Measurement vectors are not stored; they are regenerated from the
seed with ``ensemble_from_sidecar``.
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from jsonschema import Draft4Validator

from .errors import ConfigurationError
from .measurement import (
    GroundTruth,
    MeasurementEnsemble,
    Measurements,
    gen_ensemble,
    gen_low_rank,
    measure,
)

logger = logging.getLogger(__name__)

__all__ = [
    "INSTANCE_SCHEMA",
    "Instance",
    "ensemble_from_sidecar",
    "generate_instance",
    "read_instance",
    "validate_sidecar",
    "write_instance",
]

SIDECAR_FILE = "instance.json"
LAYOUT = "column-major little-endian raw"

_DTYPES = {"float64": np.dtype("<f8"), "complex128": np.dtype("<c16")}

_ARRAY_ENTRY = {
    "type": "object",
    "required": ["file", "dtype", "shape"],
    "properties": {
        "file": {"type": "string"},
        "dtype": {"enum": list(_DTYPES)},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
    },
}

INSTANCE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "type": "object",
    "required": ["n", "q", "r", "m", "kind", "sharing", "seed", "noise_halfwidth", "layout", "arrays"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "q": {"type": "integer", "minimum": 1},
        "r": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "m_fresh": {"type": "integer", "minimum": 0},
        "kind": {"enum": ["gaussian-real", "gaussian-complex", "cdp"]},
        "sharing": {"enum": ["per-column", "shared"]},
        "seed": {"type": "integer", "minimum": 0},
        "noise_halfwidth": {"type": "number", "minimum": 0},
        "cdp_dims": {
            "type": ["array", "null"],
            "items": {"type": "integer", "minimum": 1},
            "minItems": 3,
            "maxItems": 3,
        },
        "layout": {"enum": [LAYOUT]},
        "arrays": {
            "type": "object",
            "required": ["X", "U", "B", "y"],
            "properties": {name: _ARRAY_ENTRY for name in ("X", "U", "B", "y")},
        },
    },
}


@dataclass(frozen=True, eq=False)
class Instance:
    gt: GroundTruth
    meas: Measurements
    sidecar: dict


def generate_instance(
    n: int,
    q: int,
    r: int,
    m: int,
    kind: str = "gaussian-real",
    sharing: str = "per-column",
    noise_halfwidth: float = 0.0,
    seed: int = 0,
    cdp_dims: Optional[Tuple[int, int, int]] = None,
    m_fresh: int = 0,
) -> Tuple[GroundTruth, MeasurementEnsemble, Measurements]:
    """Draws the ground truth, the ensemble and the measurements from one seed."""
    gt = gen_low_rank(n, q, r, seed=seed)
    ens = gen_ensemble(kind, n, m, q, sharing=sharing, seed=seed, cdp_dims=cdp_dims, m_fresh=m_fresh)
    meas = measure(ens, gt, noise_halfwidth=noise_halfwidth, seed=seed)
    return gt, ens, meas


def _dtype_name(arr: np.ndarray) -> str:
    return "complex128" if np.iscomplexobj(arr) else "float64"


def _write_array(path: str, arr: np.ndarray) -> dict:
    name = _dtype_name(arr)
    data = np.asarray(arr, dtype=_DTYPES[name])
    with open(path, "wb") as f:
        f.write(data.tobytes(order="F"))
    return {"file": os.path.basename(path), "dtype": name, "shape": list(data.shape)}


def _read_array(directory: str, entry: dict) -> np.ndarray:
    path = os.path.join(directory, entry["file"])
    with open(path, "rb") as f:
        raw = f.read()
    dtype = _DTYPES[entry["dtype"]]
    shape = tuple(entry["shape"])
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise ConfigurationError(f"{path} holds {len(raw)} bytes, expected {expected} for shape {shape}.")
    return np.frombuffer(raw, dtype=dtype).reshape(shape, order="F").copy()


def write_instance(
    out_dir: str,
    gt: GroundTruth,
    meas: Measurements,
    kind: str,
    sharing: str,
    seed: int,
    cdp_dims: Optional[Tuple[int, int, int]] = None,
) -> str:
    """
    Writes an instance directory.

    Returns:
        str: Path of the sidecar file.

    Raises:
        OSError: If the directory cannot be written; the message names the path.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        arrays = {
            name: _write_array(os.path.join(out_dir, f"{name}.bin"), arr)
            for name, arr in (("X", gt.X), ("U", gt.U), ("B", gt.B), ("y", meas.y))
        }
        sidecar = {
            "n": gt.n,
            "q": gt.q,
            "r": gt.r,
            "m": meas.m_init,
            "m_fresh": meas.m_fresh,
            "kind": kind,
            "sharing": sharing,
            "seed": int(seed),
            "noise_halfwidth": float(meas.noise_halfwidth),
            "cdp_dims": list(cdp_dims) if cdp_dims is not None else None,
            "layout": LAYOUT,
            "arrays": arrays,
        }
        path = os.path.join(out_dir, SIDECAR_FILE)
        with open(path, "w") as f:
            json.dump(sidecar, f, indent=2)
    except OSError as e:
        logger.error(f"Error in write_instance writing to {out_dir}: {e}")
        raise OSError(f"Could not write instance to {out_dir}: {e}") from e
    logger.info(f"Wrote instance to {out_dir}")
    return path


def validate_sidecar(sidecar: dict) -> None:
    """
    Validates a sidecar document against INSTANCE_SCHEMA.

    Raises:
        ConfigurationError: Listing every schema violation.
    """
    errors = sorted(Draft4Validator(INSTANCE_SCHEMA).iter_errors(sidecar), key=lambda e: list(e.path))
    if errors:
        messages = "; ".join(
            f"{'.'.join(str(k) for k in error.path) or 'root'}: {error.message}" for error in errors
        )
        logger.error(f"Instance sidecar failed validation: {messages}")
        raise ConfigurationError(f"Invalid instance sidecar: {messages}")


def read_instance(directory: str) -> Instance:
    """
    Reads an instance directory written by write_instance.

    Raises:
        FileNotFoundError: If the sidecar or an array file is missing.
        ConfigurationError: If the sidecar is invalid or a file has the wrong size.
    """
    path = os.path.join(directory, SIDECAR_FILE)
    try:
        with open(path, "r") as f:
            sidecar = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Error in read_instance decoding {path}: {e}")
        raise ConfigurationError(f"{path} is not valid JSON: {e}") from e
    validate_sidecar(sidecar)
    arrays = {name: _read_array(directory, entry) for name, entry in sidecar["arrays"].items()}
    gt = GroundTruth(U=arrays["U"], B=arrays["B"], X=arrays["X"], seed=sidecar["seed"])
    meas = Measurements(
        y=arrays["y"], noise_halfwidth=sidecar["noise_halfwidth"], m_fresh=sidecar.get("m_fresh", 0)
    )
    logger.info(f"Read instance from {directory}")
    return Instance(gt=gt, meas=meas, sidecar=sidecar)


def ensemble_from_sidecar(sidecar: dict) -> MeasurementEnsemble:
    """Regenerates the measurement ensemble an instance was measured with."""
    validate_sidecar(sidecar)
    cdp_dims = tuple(sidecar["cdp_dims"]) if sidecar.get("cdp_dims") else None
    return gen_ensemble(
        sidecar["kind"],
        sidecar["n"],
        sidecar["m"],
        sidecar["q"],
        sharing=sidecar["sharing"],
        seed=sidecar["seed"],
        cdp_dims=cdp_dims,
        m_fresh=sidecar.get("m_fresh", 0),
    )
