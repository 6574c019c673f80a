"""Dense id -> vector embedding tables with TSV persistence."""

import json
import os

import numpy as np

from .errors import DataError, NumericError, UnknownIdError


class EmbeddingTable:
    """A (num_ids, dim) float64 array indexed by dense integer id.

    Row 0 is reserved for "no entry" (padding words, unlinked tokens) and is
    conventionally all zeros.
    """

    def __init__(self, vectors: np.ndarray):
        self.vectors = np.asarray(vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DataError(f"embedding table must be 2-d, got shape {self.vectors.shape}")

    @classmethod
    def zeros(cls, num_ids: int, dim: int) -> "EmbeddingTable":
        return cls(np.zeros((num_ids, dim)))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def __contains__(self, idx: int) -> bool:
        return 0 <= idx < len(self)

    def row(self, idx: int) -> np.ndarray:
        if idx not in self:
            raise UnknownIdError(f"embedding id {idx} outside table of {len(self)} rows")
        return self.vectors[idx]

    def save_tsv(self, path: str, sidecar: dict | None = None) -> None:
        """Write `id<TAB>v1<TAB>...<TAB>vk` rows; sidecar metadata goes to path + '.json'."""
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for idx, vec in enumerate(self.vectors):
                fh.write(str(idx) + "\t" + "\t".join(repr(v) for v in vec) + "\n")
        os.replace(tmp, path)
        if sidecar is not None:
            with open(path + ".json", "w", encoding="utf-8") as fh:
                json.dump(sidecar, fh, indent=2, sort_keys=True)
                fh.write("\n")

    @classmethod
    def load_tsv(cls, path: str) -> "EmbeddingTable":
        rows = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                try:
                    idx = int(parts[0])
                    vec = np.array([float(p) for p in parts[1:]])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: bad embedding row: {exc}") from None
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise DataError(f"{path}:{lineno}: expected {dim} values, got {vec.size}")
                rows[idx] = vec
        if not rows:
            return cls.zeros(0, 0)
        if not np.all(np.isfinite(np.concatenate(list(rows.values())))):
            raise NumericError(f"{path}: embedding table contains non-finite values")
        table = np.zeros((max(rows) + 1, dim))
        for idx, vec in rows.items():
            table[idx] = vec
        return cls(table)
