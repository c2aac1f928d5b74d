"""
Orbimag — Spectral Cache
Content-addressed disk cache for SpectralData, so repeated subcommands on
the same operator skip the eigensolve.

Entries are .npz containers with an embedded JSON header; payloads of at
most SMALL_PAYLOAD numbers go to plain .json instead. Writes go through a
temp file and os.replace, so a crash never leaves a half-written entry.
"""

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from core.eigensolve import SpectralData

logger = logging.getLogger(__name__)

CACHE_FORMAT = "orbimag-spectral"
CACHE_VERSION = 1
SMALL_PAYLOAD = 4096
ENV_VAR = "ORBIMAG_CACHE_DIR"
DEFAULT_DIR = "~/.orbimag/cache"


def cache_dir(override: str | Path | None = None) -> Path:
    return Path(override or os.environ.get(ENV_VAR) or DEFAULT_DIR).expanduser()


def cache_key(key_inputs: dict) -> str:
    """SHA-256 over the canonical JSON of the inputs (sorted keys)."""
    blob = json.dumps(key_inputs, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


def _header(key: str, spec: SpectralData) -> dict:
    return {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "key": key,
        "dims": list(spec.eigenvectors.shape),
        "complex": bool(np.iscomplexobj(spec.eigenvectors)),
        "count_negative": spec.count_negative,
        "degenerate_pairs": [list(p) for p in spec.degenerate_pairs],
        "degeneracy_gap": spec.degeneracy_gap,
    }


def _from_parts(header: dict, eigenvalues, eigenvectors, residuals) -> SpectralData:
    return SpectralData(
        eigenvalues=np.asarray(eigenvalues, dtype=float),
        eigenvectors=eigenvectors,
        residuals=np.asarray(residuals, dtype=float),
        count_negative=int(header["count_negative"]),
        degenerate_pairs=[tuple(p) for p in header["degenerate_pairs"]],
        degeneracy_gap=float(header["degeneracy_gap"]),
    )


def _check_header(header: dict, key: str) -> bool:
    if header.get("format") != CACHE_FORMAT or header.get("version") != CACHE_VERSION:
        logger.info("cache entry %s has format %s v%s; recomputing",
                    key, header.get("format"), header.get("version"))
        return False
    return header.get("key") == key


# ─── Read / write ───────────────────────────────────────────────────

def _read_npz(path: Path, key: str) -> SpectralData | None:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if not _check_header(header, key):
            return None
        return _from_parts(header, z["eigenvalues"], z["eigenvectors"], z["residuals"])


def _read_json(path: Path, key: str) -> SpectralData | None:
    payload = json.loads(path.read_text())
    header = payload["header"]
    if not _check_header(header, key):
        return None
    vecs = np.asarray(payload["eigenvectors_real"], dtype=float)
    if header["complex"]:
        vecs = vecs + 1j * np.asarray(payload["eigenvectors_imag"], dtype=float)
    vecs = vecs.reshape(header["dims"])
    return _from_parts(header, payload["eigenvalues"], vecs, payload["residuals"])


def _atomic_write(path: Path, write) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def store(directory: Path, key: str, spec: SpectralData) -> Path:
    """Write one entry; JSON for small payloads, npz otherwise."""
    directory.mkdir(parents=True, exist_ok=True)
    header = _header(key, spec)
    vecs = spec.eigenvectors
    if vecs.size <= SMALL_PAYLOAD:
        payload = {
            "header": header,
            "eigenvalues": spec.eigenvalues.tolist(),
            "residuals": spec.residuals.tolist(),
            "eigenvectors_real": np.real(vecs).ravel().tolist(),
        }
        if header["complex"]:
            payload["eigenvectors_imag"] = np.imag(vecs).ravel().tolist()
        path = directory / f"{key}.json"
        _atomic_write(path, lambda f: f.write(json.dumps(payload).encode()))
    else:
        path = directory / f"{key}.npz"
        _atomic_write(path, lambda f: np.savez(
            f, header=np.array(json.dumps(header)), eigenvalues=spec.eigenvalues,
            eigenvectors=vecs, residuals=spec.residuals,
        ))
    return path


def lookup(directory: Path, key: str) -> SpectralData | None:
    """Cached entry for key, or None on a miss, stale version or corrupt file."""
    for suffix, reader in ((".npz", _read_npz), (".json", _read_json)):
        path = directory / f"{key}{suffix}"
        if not path.exists():
            continue
        try:
            return reader(path, key)
        except Exception as e:
            logger.warning("corrupt cache entry %s (%s); recomputing", path.name, e)
            return None
    return None


def cache_spectral(key_inputs: dict, compute, directory: str | Path | None = None) -> SpectralData:
    """Return the cached SpectralData for key_inputs, or compute and store it.

    key_inputs must capture everything that determines the operator and the
    solve (grid, potential, field, solver options, count). Cache I/O errors
    only cost a recompute.
    """
    directory = cache_dir(directory)
    key = cache_key(key_inputs)
    hit = lookup(directory, key)
    if hit is not None:
        logger.info("spectral cache hit %s", key)
        return hit
    logger.info("spectral cache miss %s", key)
    spec = compute()
    try:
        store(directory, key, spec)
    except OSError as e:
        logger.warning("could not write spectral cache entry %s: %s", key, e)
    return spec
