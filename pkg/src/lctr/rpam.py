"""Patch relation maps built from recorded attention.

Test-time only and parameter-free: every function here is a pure mapping
from head-averaged attention matrices to plain numpy arrays, and nothing
feeds back into training.

For a head-averaged matrix A of shape (N+1, N+1), row 0 is the class
token's attention to every token and columns 1..N are the attention into
the patch tokens. The relation vector weights each row of the patch
columns by the class token's attention to that row's token, then averages
over rows; relation vectors are averaged over blocks and reshaped to the
patch grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import Parameter, Tensor


@dataclass
class PatchRelationMap:
    map: np.ndarray
    source_blocks: int


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, Tensor):
        a = a.data
    elif isinstance(a, Parameter):
        a = a.data
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square attention matrix, got shape {a.shape}")
    return a


def _averaged_matrices(attn) -> list:
    per_block = attn.averaged if hasattr(attn, "averaged") else attn
    return [_as_matrix(a) for a in per_block]


def class_token_vector(avg_attention) -> np.ndarray:
    """Row 0: attention from the class token to all N+1 tokens."""
    return _as_matrix(avg_attention)[0, :].copy()


def patch_attention_map(avg_attention) -> np.ndarray:
    """Columns 1..N: attention from every token into the patch tokens."""
    return _as_matrix(avg_attention)[:, 1:].copy()


def block_relation_vector(avg_attention) -> np.ndarray:
    """Class-token-weighted patch attention, averaged over source tokens."""
    a = _as_matrix(avg_attention)
    weighted = a[0, :][:, None] * a[:, 1:]
    return weighted.mean(axis=0)


def build_patch_relation_map(attn, grid_h: int, grid_w: int) -> PatchRelationMap:
    """Average per-block relation vectors and reshape row-major to the grid."""
    mats = _averaged_matrices(attn)
    if not mats:
        raise DimensionError("attention record is empty")
    n = mats[0].shape[0] - 1
    if n != grid_h * grid_w:
        raise DimensionError(f"{n} patch tokens do not fill a {grid_h}x{grid_w} grid")
    vectors = [block_relation_vector(a) for a in mats]
    mean = np.mean(np.stack(vectors, axis=0), axis=0)
    return PatchRelationMap(map=mean.reshape(grid_h, grid_w), source_blocks=len(mats))


def dump_relation_csv(attn, grid_h: int, grid_w: int, path):
    """Debug dump: one row per block for the class-token vector and the
    relation vector, plus the final grid-shaped relation map."""
    mats = _averaged_matrices(attn)
    final = build_patch_relation_map(attn, grid_h, grid_w)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "block", "values..."])
        for i, a in enumerate(mats):
            writer.writerow(["class_token_vector", i] + [repr(v) for v in class_token_vector(a)])
        for i, a in enumerate(mats):
            writer.writerow(["relation_vector", i] + [repr(v) for v in block_relation_vector(a)])
        for r, row in enumerate(final.map):
            writer.writerow(["relation_map_row", r] + [repr(v) for v in row])
