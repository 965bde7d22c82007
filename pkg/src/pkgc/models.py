"""Embedding models: parameter tables and scoring for nine model families.

Every family reduces scoring to one of two shapes so that a single engine can
serve scalar scores, batched tail scoring, the softmax loss, and mining:

* dot families:      s(h, r, t) = gamma * <compose(h, r), tail_rep(t)>
* distance families: s(h, r, t) = -|| compose(h, r) - tail_rep(t) ||_2

``compose`` is the family's entity-relation composition (the object compared
against the tail); gamma is a trainable scalar only for the UniBi families
and fixed at 1 elsewhere. Complex and quaternion coordinates are stored as
interleaved reals inside ordinary float64 matrices, so one dense layout
serves all families. Relation rows [|R|, 2|R|) hold the reciprocal
relations used by training and head-side mining.
"""

from __future__ import annotations

import struct
from typing import Optional

import numpy as np

from .errors import BoundsError, ConfigError, DataError

_TINY = 1e-30


def _interleave(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], 2 * a.shape[1]), a.dtype)
    out[:, 0::2] = a
    out[:, 1::2] = b
    return out


class Family:
    name: str = ""
    is_distance = False
    trainable_gamma = False
    block = 1  # dim must be divisible by this

    def ent_width(self, dim: int) -> int:
        return dim

    def rel_width(self, dim: int) -> int:
        return dim

    def tail_width(self, dim: int) -> int:
        return dim

    def validate_dim(self, dim: int) -> None:
        if dim < 1:
            raise ConfigError(f"{self.name}: dim must be positive")
        if dim % self.block:
            raise ConfigError(f"{self.name}: dim must be divisible by {self.block}, got {dim}")

    def compose(self, H: np.ndarray, R: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def compose_backward(self, H, R, dM) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    # Entity representations on the two sides of the score. Only CP separates
    # them (split head/tail halves of each entity row).
    def tail_rep(self, E: np.ndarray) -> np.ndarray:
        return E

    def tail_rep_backward(self, dT: np.ndarray) -> np.ndarray:
        return dT

    def head_rep(self, E: np.ndarray) -> np.ndarray:
        return E

    def head_rep_backward(self, dH: np.ndarray) -> np.ndarray:
        return dH


class TransE(Family):
    name = "transe"
    is_distance = True

    def compose(self, H, R):
        return H + R

    def compose_backward(self, H, R, dM):
        return dM.copy(), dM.copy()


class CP(Family):
    name = "cp"

    def ent_width(self, dim):
        return 2 * dim

    def compose(self, H, R):
        d = R.shape[1]
        return H[:, :d] * R

    def compose_backward(self, H, R, dM):
        d = R.shape[1]
        dH = np.zeros_like(H)
        dH[:, :d] = dM * R
        return dH, dM * H[:, :d]

    def tail_rep(self, E):
        return E[:, E.shape[1] // 2:]

    def tail_rep_backward(self, dT):
        out = np.zeros((dT.shape[0], 2 * dT.shape[1]), dT.dtype)
        out[:, dT.shape[1]:] = dT
        return out

    def head_rep(self, E):
        return E[:, : E.shape[1] // 2]

    def head_rep_backward(self, dH):
        out = np.zeros((dH.shape[0], 2 * dH.shape[1]), dH.dtype)
        out[:, : dH.shape[1]] = dH
        return out


class ComplEx(Family):
    name = "complex"

    def ent_width(self, dim):
        return 2 * dim

    def rel_width(self, dim):
        return 2 * dim

    def tail_width(self, dim):
        return 2 * dim

    def compose(self, H, R):
        hr, hi = H[:, 0::2], H[:, 1::2]
        rr, ri = R[:, 0::2], R[:, 1::2]
        return _interleave(hr * rr - hi * ri, hr * ri + hi * rr)

    def compose_backward(self, H, R, dM):
        hr, hi = H[:, 0::2], H[:, 1::2]
        rr, ri = R[:, 0::2], R[:, 1::2]
        dqr, dqi = dM[:, 0::2], dM[:, 1::2]
        dH = _interleave(dqr * rr + dqi * ri, -dqr * ri + dqi * rr)
        dR = _interleave(dqr * hr + dqi * hi, -dqr * hi + dqi * hr)
        return dH, dR


class RESCAL(Family):
    name = "rescal"

    def rel_width(self, dim):
        return dim * dim

    def compose(self, H, R):
        d = H.shape[1]
        Rm = R.reshape(-1, d, d)
        return np.einsum("bi,bij->bj", H, Rm)

    def compose_backward(self, H, R, dM):
        d = H.shape[1]
        Rm = R.reshape(-1, d, d)
        dH = np.einsum("bj,bij->bi", dM, Rm)
        dR = np.einsum("bi,bj->bij", H, dM).reshape(H.shape[0], d * d)
        return dH, dR


class RotatE(Family):
    name = "rotate"
    is_distance = True

    def ent_width(self, dim):
        return 2 * dim

    def tail_width(self, dim):
        return 2 * dim

    def compose(self, H, R):
        hr, hi = H[:, 0::2], H[:, 1::2]
        c, s = np.cos(R), np.sin(R)
        return _interleave(hr * c - hi * s, hr * s + hi * c)

    def compose_backward(self, H, R, dM):
        hr, hi = H[:, 0::2], H[:, 1::2]
        c, s = np.cos(R), np.sin(R)
        dmr, dmi = dM[:, 0::2], dM[:, 1::2]
        dH = _interleave(dmr * c + dmi * s, -dmr * s + dmi * c)
        dR = dmr * (-hr * s - hi * c) + dmi * (hr * c - hi * s)
        return dH, dR


class RotE(Family):
    """Givens rotation of the head in 2-D blocks plus a relation translation."""

    name = "rote"
    is_distance = True
    block = 2

    def rel_width(self, dim):
        return dim + dim // 2  # [translation | angles]

    def compose(self, H, R):
        d = H.shape[1]
        x, y = H[:, 0::2], H[:, 1::2]
        theta = R[:, d:]
        c, s = np.cos(theta), np.sin(theta)
        return _interleave(x * c - y * s, x * s + y * c) + R[:, :d]

    def compose_backward(self, H, R, dM):
        d = H.shape[1]
        x, y = H[:, 0::2], H[:, 1::2]
        theta = R[:, d:]
        c, s = np.cos(theta), np.sin(theta)
        dmx, dmy = dM[:, 0::2], dM[:, 1::2]
        dH = _interleave(dmx * c + dmy * s, -dmx * s + dmy * c)
        dR = np.empty_like(R)
        dR[:, :d] = dM
        dR[:, d:] = dmx * (-x * s - y * c) + dmy * (x * c - y * s)
        return dH, dR


class QuatE(Family):
    """Hamilton rotation of the head by the unit-normalized relation quaternion."""

    name = "quate"

    def ent_width(self, dim):
        return 4 * dim

    def rel_width(self, dim):
        return 4 * dim

    def tail_width(self, dim):
        return 4 * dim

    @staticmethod
    def _parts(X):
        return X[:, 0::4], X[:, 1::4], X[:, 2::4], X[:, 3::4]

    @staticmethod
    def _normalize(R):
        a, b, c, d = QuatE._parts(R)
        n = np.sqrt(a * a + b * b + c * c + d * d)
        n = np.maximum(n, _TINY)
        return a / n, b / n, c / n, d / n, n

    def compose(self, H, R):
        a1, b1, c1, d1 = self._parts(H)
        a2, b2, c2, d2, _ = self._normalize(R)
        out = np.empty_like(H)
        out[:, 0::4] = a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2
        out[:, 1::4] = a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2
        out[:, 2::4] = a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2
        out[:, 3::4] = a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2
        return out

    def compose_backward(self, H, R, dM):
        a1, b1, c1, d1 = self._parts(H)
        a2, b2, c2, d2, n = self._normalize(R)
        qa, qb, qc, qd = self._parts(dM)
        # dH = dM (x) conj(r_hat)
        dH = np.empty_like(H)
        dH[:, 0::4] = qa * a2 + qb * b2 + qc * c2 + qd * d2
        dH[:, 1::4] = -qa * b2 + qb * a2 - qc * d2 + qd * c2
        dH[:, 2::4] = -qa * c2 + qb * d2 + qc * a2 - qd * b2
        dH[:, 3::4] = -qa * d2 - qb * c2 + qc * b2 + qd * a2
        # d(r_hat) = conj(h) (x) dM
        da = a1 * qa + b1 * qb + c1 * qc + d1 * qd
        db = a1 * qb - b1 * qa - c1 * qd + d1 * qc
        dc = a1 * qc + b1 * qd - c1 * qa - d1 * qb
        dd = a1 * qd - b1 * qc + c1 * qb - d1 * qa
        # chain through the per-quaternion normalization
        dot = da * a2 + db * b2 + dc * c2 + dd * d2
        dR = np.empty_like(R)
        dR[:, 0::4] = (da - a2 * dot) / n
        dR[:, 1::4] = (db - b2 * dot) / n
        dR[:, 2::4] = (dc - c2 * dot) / n
        dR[:, 3::4] = (dd - d2 * dot) / n
        return dH, dR


class UniBi(Family):
    """Block-diagonal bilinear operator with unit-norm entities and spectral
    radius at most 1 after projection, so raw scores stay in [-1, 1]."""

    trainable_gamma = True

    def __init__(self, k: int):
        self.k = k
        self.name = f"unibi_o{k}"
        self.block = k

    def rel_width(self, dim):
        return self.k * dim

    def compose(self, H, R):
        k = self.k
        B, d = H.shape
        Hb = H.reshape(B, d // k, k)
        Rb = R.reshape(B, d // k, k, k)
        return np.einsum("bni,bnij->bnj", Hb, Rb).reshape(B, d)

    def compose_backward(self, H, R, dM):
        k = self.k
        B, d = H.shape
        Hb = H.reshape(B, d // k, k)
        Rb = R.reshape(B, d // k, k, k)
        dMb = dM.reshape(B, d // k, k)
        dH = np.einsum("bnj,bnij->bni", dMb, Rb).reshape(B, d)
        dR = np.einsum("bni,bnj->bnij", Hb, dMb).reshape(B, k * d)
        return dH, dR


FAMILIES: dict[str, Family] = {
    f.name: f
    for f in [TransE(), CP(), ComplEx(), RESCAL(), RotatE(), RotE(), QuatE(), UniBi(2), UniBi(3)]
}
FAMILY_ORDER = list(FAMILIES)  # checkpoint family tags index into this list
RELNORM_FAMILIES = ("cp", "complex")


def family(name: str) -> Family:
    key = name.lower().replace("-", "_").replace("(", "").replace(")", "")
    if key not in FAMILIES:
        raise ConfigError(f"unknown model family {name!r}; choose from {', '.join(FAMILIES)}")
    return FAMILIES[key]


class EmbeddingModel:
    """Entity/relation parameter tables plus the family scoring function.

    ``rel`` holds 2|R| rows: forward relations followed by their reciprocals.
    """

    def __init__(self, fam: Family, dim: int, n_entities: int, n_relations: int,
                 ent: np.ndarray, rel: np.ndarray, gamma: float = 1.0, rel_norm: bool = False):
        self.fam = fam
        self.dim = dim
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.ent = ent
        self.rel = rel
        self.gamma = float(gamma)
        if rel_norm and fam.name not in RELNORM_FAMILIES:
            raise ConfigError(f"relation normalization applies to {RELNORM_FAMILIES}, not {fam.name}")
        self.rel_norm = rel_norm

    @property
    def family_name(self) -> str:
        return self.fam.name

    @classmethod
    def create(cls, family_name: str, dim: int, n_entities: int, n_relations: int,
               seed: int = 0, rel_norm: bool = False) -> "EmbeddingModel":
        """Fresh model, i.i.d. uniform in [-0.001, 0.001], constraints projected once."""
        fam = family(family_name)
        fam.validate_dim(dim)
        if n_entities < 1 or n_relations < 1:
            raise DataError("model needs at least one entity and one relation")
        rng = np.random.default_rng(seed)
        ent = rng.uniform(-1e-3, 1e-3, (n_entities, fam.ent_width(dim)))
        rel = rng.uniform(-1e-3, 1e-3, (2 * n_relations, fam.rel_width(dim)))
        model = cls(fam, dim, n_entities, n_relations, ent, rel, rel_norm=rel_norm)
        model.project_constraints()
        return model

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.fam, self.dim, self.n_entities, self.n_relations,
                              self.ent.copy(), self.rel.copy(), self.gamma, self.rel_norm)

    # -- scoring ---------------------------------------------------------

    def _check_ids(self, h: int, r: int, t: Optional[int] = None) -> None:
        if not (0 <= h < self.n_entities):
            raise BoundsError(f"head id {h} out of range [0, {self.n_entities})")
        if not (0 <= r < 2 * self.n_relations):
            raise BoundsError(f"relation id {r} out of range [0, {2 * self.n_relations})")
        if t is not None and not (0 <= t < self.n_entities):
            raise BoundsError(f"tail id {t} out of range [0, {self.n_entities})")

    def score(self, h: int, r: int, t: int) -> float:
        """Plausibility of one triple; r may be a reciprocal id in [|R|, 2|R|)."""
        self._check_ids(h, r, t)
        M = self.fam.compose(self.ent[[h]], self.rel[[r]])
        T = self.fam.tail_rep(self.ent[[t]])
        if self.fam.is_distance:
            return float(-np.linalg.norm(M[0] - T[0]))
        raw = float(M[0] @ T[0])
        return self.gamma * raw if self.fam.trainable_gamma else raw

    def score_tails_subset(self, h_ids: np.ndarray, r: int, tail_ids: Optional[np.ndarray] = None) -> np.ndarray:
        """Score matrix (len(h_ids), len(tail_ids)) for one relation id.

        Distance families use the expanded-norm identity; agreement with the
        scalar path is within ~1e-12 relative in float64.
        """
        h_ids = np.asarray(h_ids)
        if len(h_ids) and (h_ids.min() < 0 or h_ids.max() >= self.n_entities):
            raise BoundsError("head id out of range")
        self._check_ids(0, r)
        H = self.ent[h_ids]
        R = np.broadcast_to(self.rel[r], (len(h_ids), self.rel.shape[1]))
        M = self.fam.compose(H, R)
        E = self.ent if tail_ids is None else self.ent[tail_ids]
        T = self.fam.tail_rep(E)
        if self.fam.is_distance:
            d2 = (M * M).sum(1)[:, None] + (T * T).sum(1)[None, :] - 2.0 * (M @ T.T)
            return -np.sqrt(np.maximum(d2, 0.0))
        S = M @ T.T
        return S * self.gamma if self.fam.trainable_gamma else S

    def score_tails(self, h: int, r: int) -> np.ndarray:
        """Scores of (h, r, t) for every tail t; index [t] matches score(h, r, t)."""
        self._check_ids(h, r)
        return self.score_tails_subset(np.array([h]), r)[0]

    # -- constraints -----------------------------------------------------

    def project_constraints(self) -> None:
        """Restore family invariants in place (called between optimizer steps)."""
        if isinstance(self.fam, UniBi):
            norms = np.linalg.norm(self.ent, axis=1)
            dead = norms < _TINY
            if dead.any():
                self.ent[dead] = 0.0
                self.ent[dead, 0] = 1.0
                norms[dead] = 1.0
            self.ent /= norms[:, None]
            k = self.fam.k
            blocks = self.rel.reshape(-1, k, k)
            u, s, vt = np.linalg.svd(blocks)
            np.minimum(s, 1.0, out=s)
            self.rel[:] = np.einsum("nij,nj,njk->nik", u, s, vt).reshape(self.rel.shape)
            self.gamma = max(self.gamma, 1e-6)

    def with_normalized_relations(self) -> tuple["EmbeddingModel", int]:
        """Scoring-time relation normalization (CP/ComplEx case studies).

        Returns a copy whose relation rows have unit Euclidean norm, plus the
        count of zero-norm rows left untouched. Training always sees the raw
        vectors; only mining consumes this view.
        """
        if self.fam.name not in RELNORM_FAMILIES:
            raise ConfigError(f"relation normalization applies to {RELNORM_FAMILIES}, not {self.fam.name}")
        out = self.copy()
        norms = np.linalg.norm(out.rel, axis=1)
        zero = norms < _TINY
        norms[zero] = 1.0
        out.rel /= norms[:, None]
        return out, int(zero.sum())

    def mining_view(self) -> "EmbeddingModel":
        """The model the miner scores with: relation-normalized if enabled."""
        if self.rel_norm:
            return self.with_normalized_relations()[0]
        return self

    # -- checkpoint ------------------------------------------------------
    #
    # Layout (little-endian):
    #   8s  magic "PKGCKGE\0"
    #   u32 format version (1)
    #   u32 family tag (index into FAMILY_ORDER)
    #   u32 dim
    #   u64 n_entities, u64 n_relations
    #   f32 gamma
    #   float32 entity table, row-major (n_entities x ent_width)
    #   float32 relation table, row-major (2*n_relations x rel_width)

    MAGIC = b"PKGCKGE\x00"
    FORMAT_VERSION = 1

    def save(self, path: str) -> None:
        header = self.MAGIC + struct.pack(
            "<IIIQQf",
            self.FORMAT_VERSION,
            FAMILY_ORDER.index(self.fam.name),
            self.dim,
            self.n_entities,
            self.n_relations,
            np.float32(self.gamma),
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.ent, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(self.rel, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str) -> "EmbeddingModel":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != cls.MAGIC:
                raise DataError(f"{path}: not a model checkpoint (bad magic)")
            version, fam_tag, dim, n_ent, n_rel = struct.unpack("<IIIQQ", fh.read(28))
            if version != cls.FORMAT_VERSION:
                raise DataError(f"{path}: unsupported checkpoint version {version}")
            (gamma,) = struct.unpack("<f", fh.read(4))
            fam = FAMILIES[FAMILY_ORDER[fam_tag]]
            ent = np.frombuffer(fh.read(n_ent * fam.ent_width(dim) * 4), dtype="<f4")
            rel = np.frombuffer(fh.read(2 * n_rel * fam.rel_width(dim) * 4), dtype="<f4")
        ent = ent.astype(np.float64).reshape(n_ent, fam.ent_width(dim))
        rel = rel.astype(np.float64).reshape(2 * n_rel, fam.rel_width(dim))
        return cls(fam, dim, n_ent, n_rel, ent, rel, gamma)
