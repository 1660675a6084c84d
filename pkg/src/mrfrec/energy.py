"""Pairwise energy functions f(Y_i, X_j) over a task bigraph.

The edge energy is ``f(y, x) * y_val * x_val``; a negative ``f`` favours
``y`` and ``x`` taking the same sign. Three "lazy" functions are read off
the co-occurrence counts and carry no parameters. ``theta`` stores one
free parameter per observed edge; ``lfm`` and ``trans`` score pairs of
unit-norm entity embeddings through a bilinear map or a translation.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, fields
from typing import TextIO

import numpy as np

from .corpus import Entity, EntityType
from .graph import Bigraph, TaskKind

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "mrfrec-checkpoint/1"


class EnergyKind(str, enum.Enum):
    WEIGHT = "weight"
    LOG_WEIGHT = "log-weight"
    TFIDF = "tf-idf"
    THETA = "theta"
    LFM = "lfm"
    TRANS = "trans"

    @property
    def learnable(self) -> bool:
        return self in (EnergyKind.THETA, EnergyKind.LFM, EnergyKind.TRANS)

    @property
    def embedded(self) -> bool:
        return self in (EnergyKind.LFM, EnergyKind.TRANS)

    @classmethod
    def parse(cls, text: str) -> "EnergyKind":
        t = text.strip().lower().replace("_", "-")
        aliases = {"logweight": "log-weight", "tfidf": "tf-idf", "log-w": "log-weight"}
        return cls(aliases.get(t, t))


class NonLearnableEnergyError(TypeError):
    pass


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose ("split", "init", "sampling", ...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass
class HyperParams:
    dim: int = 100
    gamma: float = -1.0
    eta: float = 0.01
    lam: float = 1e-4
    epochs: int = 30
    k_neg: int = 50
    seed: int = 0
    resample_negatives: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.k_neg < 1:
            raise ValueError(f"k_neg must be >= 1, got {self.k_neg}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def lambda_from_sigma(sigma: float, n_records: int) -> float:
    """Per-instance L2 coefficient of a N(0, sigma^2) prior spread over ``n_records``."""
    if sigma <= 0 or n_records <= 0:
        raise ValueError("sigma and n_records must be positive")
    return 1.0 / (n_records * sigma**2)


class EnergyModel:
    """Energy function of one kind bound to a bigraph, plus its parameters.

    Parameter arrays are indexed like the bigraph: ``theta[k]`` belongs to
    edge ``k`` (``graph.edge_y[k]``, ``graph.edge_x[k]``), ``y_emb[i]`` to
    ``graph.y_part[i]`` and ``x_emb[j]`` to ``graph.x_part[j]``.
    """

    def __init__(self, kind, graph: Bigraph, dim: int = 100, gamma: float = -1.0, seed: int = 0):
        self.kind = EnergyKind(kind)
        self.graph = graph
        self.dim = int(dim)
        self.gamma = float(gamma)
        self.seed = int(seed)
        self.theta = None
        self.y_emb = self.x_emb = self.W = self.r = None
        self._rng = rng_stream(seed, "renormalize")
        n_y, n_x = len(graph.y_part), len(graph.x_part)
        # dense lookup of the edge index, -1 where there is no edge
        self._edge_lookup = np.full((n_y, n_x), -1, dtype=np.intp)
        self._edge_lookup[graph.edge_y, graph.edge_x] = np.arange(len(graph.edge_y))
        if self.kind is EnergyKind.TFIDF:
            deg = graph.y_degree.astype(float)
            with np.errstate(divide="ignore"):
                idf = np.where(deg > 0, np.log2(max(n_x, 1) / np.maximum(deg, 1)), 0.0)
            self._idf = idf

    def __repr__(self):
        return f"EnergyModel(kind={self.kind.value}, {self.graph!r}, dim={self.dim})"

    # -- lookups ------------------------------------------------------------

    def _yi(self, y: Entity) -> int:
        try:
            return self.graph.y_index[y]
        except KeyError:
            raise KeyError(f"unknown Y entity {y}") from None

    def _xj(self, x: Entity) -> int:
        try:
            return self.graph.x_index[x]
        except KeyError:
            raise KeyError(f"unknown X entity {x}") from None

    def entity_index(self, e: Entity) -> tuple[str, int]:
        if e in self.graph.y_index:
            return "y", self.graph.y_index[e]
        if e in self.graph.x_index:
            return "x", self.graph.x_index[e]
        raise KeyError(f"unknown entity {e}")

    # -- scalar evaluation ----------------------------------------------------

    def f_value(self, y: Entity, x: Entity) -> float:
        return self.f_index(self._yi(y), self._xj(x))

    def f_index(self, i: int, j: int) -> float:
        """f for Y index ``i`` and X index ``j``, evaluated pair by pair."""
        kind = self.kind
        if kind.embedded:
            yv, xv = self.y_emb[i], self.x_emb[j]
            if kind is EnergyKind.LFM:
                u = yv @ self.W
                nu = math.sqrt(float(u @ u))
                return 0.0 if nu == 0 else -float(u @ xv) / nu
            v = yv + self.r - xv
            return math.sqrt(float(v @ v)) + self.gamma
        k = self._edge_lookup[i, j]
        if k < 0:
            return 0.0
        if kind is EnergyKind.THETA:
            return float(self.theta[k])
        w = float(self.graph.edge_w[k])
        if kind is EnergyKind.WEIGHT:
            return -w
        lw = math.log2(w + 1.0)
        if kind is EnergyKind.LOG_WEIGHT:
            return -lw
        return -lw * float(self._idf[i])

    def energy(self, y: Entity, y_val: float, x: Entity, x_val: float) -> float:
        return self.f_value(y, x) * (y_val * x_val)

    # -- vectorised evaluation -------------------------------------------------

    def f_block(self, yi, xj) -> np.ndarray:
        """Matrix of f over Y indices ``yi`` (rows) and X indices ``xj`` (columns)."""
        yi = np.asarray(yi, dtype=np.intp)
        xj = np.asarray(xj, dtype=np.intp)
        kind = self.kind
        if kind is EnergyKind.LFM:
            u = self.y_emb[yi] @ self.W
            nu = np.linalg.norm(u, axis=1, keepdims=True)
            un = np.divide(u, nu, out=np.zeros_like(u), where=nu > 0)
            return -(un @ self.x_emb[xj].T)
        if kind is EnergyKind.TRANS:
            v = (self.y_emb[yi] + self.r)[:, None, :] - self.x_emb[xj][None, :, :]
            return np.sqrt(np.einsum("ijk,ijk->ij", v, v)) + self.gamma
        k = self._edge_lookup[np.ix_(yi, xj)]
        has = k >= 0
        out = np.zeros(k.shape)
        if kind is EnergyKind.THETA:
            out[has] = self.theta[k[has]]
            return out
        w = self.graph.edge_w[k[has]]
        if kind is EnergyKind.WEIGHT:
            out[has] = -w
        elif kind is EnergyKind.LOG_WEIGHT:
            out[has] = -np.log2(w + 1.0)
        else:
            rows = np.broadcast_to(self._idf[yi][:, None], k.shape)[has]
            out[has] = -np.log2(w + 1.0) * rows
        return out

    def f_columns(self, xj) -> np.ndarray:
        return self.f_block(np.arange(len(self.graph.y_part)), xj)

    def f_edges(self) -> np.ndarray:
        """f on every observed edge, aligned with ``graph.edge_y`` / ``graph.edge_x``."""
        g = self.graph
        kind = self.kind
        if kind is EnergyKind.THETA:
            return self.theta.copy()
        if kind is EnergyKind.WEIGHT:
            return -g.edge_w
        if kind is EnergyKind.LOG_WEIGHT:
            return -np.log2(g.edge_w + 1.0)
        if kind is EnergyKind.TFIDF:
            return -np.log2(g.edge_w + 1.0) * self._idf[g.edge_y]
        if kind is EnergyKind.LFM:
            u = self.y_emb @ self.W
            nu = np.linalg.norm(u, axis=1, keepdims=True)
            un = np.divide(u, nu, out=np.zeros_like(u), where=nu > 0)
            return -np.einsum("ij,ij->i", un[g.edge_y], self.x_emb[g.edge_x])
        v = self.y_emb[g.edge_y] + self.r - self.x_emb[g.edge_x]
        return np.linalg.norm(v, axis=1) + self.gamma

    # -- gradients ---------------------------------------------------------------

    def f_grad_sum(self, yi, xj, coef) -> dict:
        """Sum over the block of ``coef[a, b] * d f(yi[a], xj[b]) / d p``.

        Returns a dict keyed by parameter group: ``"theta"``, ``"y"`` and
        ``"x"`` map to ``(indices, values)`` pairs, ``"W"`` and ``"r"`` to
        dense arrays. Only parameters the block touches appear.
        """
        if not self.kind.learnable:
            raise NonLearnableEnergyError(f"non-learnable energy {self.kind.value!r}")
        yi = np.asarray(yi, dtype=np.intp)
        xj = np.asarray(xj, dtype=np.intp)
        coef = np.asarray(coef, dtype=float).reshape(len(yi), len(xj))
        if self.kind is EnergyKind.THETA:
            k = self._edge_lookup[np.ix_(yi, xj)]
            has = k >= 0
            if not has.any():
                return {}
            idx, inv = np.unique(k[has], return_inverse=True)
            return {"theta": (idx, np.bincount(inv, weights=coef[has], minlength=len(idx)))}
        ys, xs = self.y_emb[yi], self.x_emb[xj]
        if self.kind is EnergyKind.LFM:
            u = ys @ self.W
            nu = np.linalg.norm(u, axis=1)
            safe = np.where(nu > 0, nu, 1.0)
            n = u / safe[:, None]
            # f = -n.x ; df/dx = -n ; df/du = -(x - (n.x) n) / |u|
            gx = -(coef.T @ n)
            cx = coef @ xs
            cnx = np.einsum("ab,ab->a", coef, n @ xs.T)
            gu = -(cx - cnx[:, None] * n) / safe[:, None]
            gu[nu == 0] = 0.0
            gy = gu @ self.W.T
            gW = ys.T @ gu
            out = {"y": (yi, gy), "x": (xj, gx), "W": gW}
        else:
            v = (ys + self.r)[:, None, :] - xs[None, :, :]
            dist = np.linalg.norm(v, axis=2)
            unit = np.divide(v, dist[..., None], out=np.zeros_like(v), where=dist[..., None] > 0)
            cu = coef[..., None] * unit
            out = {"y": (yi, cu.sum(axis=1)), "x": (xj, -cu.sum(axis=0)), "r": cu.sum(axis=(0, 1))}
        for part in ("y", "x"):
            idx, g = out[part]
            uniq, inv = np.unique(idx, return_inverse=True)
            if len(uniq) != len(idx):
                acc = np.zeros((len(uniq), g.shape[1]))
                np.add.at(acc, inv, g)
                out[part] = (uniq, acc)
        return out

    def grad(self, y: Entity, y_val: float, x: Entity, x_val: float) -> dict:
        """Partial derivatives of the edge energy with respect to every touched parameter.

        Keys are ``("theta", k)``, ``("y", i)``, ``("x", j)``, ``("W",)`` and
        ``("r",)``; values are floats or arrays shaped like the parameter.
        """
        if not self.kind.learnable:
            raise NonLearnableEnergyError(f"non-learnable energy {self.kind.value!r}")
        i, j = self._yi(y), self._xj(x)
        scale = float(y_val) * float(x_val)
        block = self.f_grad_sum([i], [j], [[scale]])
        out = {}
        for name, val in block.items():
            if name in ("theta", "y", "x"):
                for idx, g in zip(*val):
                    out[(name, int(idx))] = g if name != "theta" else float(g)
            else:
                out[(name,)] = val
        return out

    # -- parameters ----------------------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        names = {
            EnergyKind.THETA: ("theta",),
            EnergyKind.LFM: ("y_emb", "x_emb", "W"),
            EnergyKind.TRANS: ("y_emb", "x_emb", "r"),
        }.get(self.kind, ())
        return {n: getattr(self, n) for n in names}

    def param_view(self, key: tuple) -> np.ndarray:
        """Writable view of the parameter addressed by a :meth:`grad` key."""
        name = key[0]
        if name == "theta":
            return self.theta[key[1]:key[1] + 1]
        if name == "y":
            return self.y_emb[key[1]]
        if name == "x":
            return self.x_emb[key[1]]
        return getattr(self, name)

    def sq_norm(self) -> float:
        return float(sum(np.sum(p * p) for p in self.parameters().values()))

    def copy(self) -> "EnergyModel":
        m = EnergyModel(self.kind, self.graph, self.dim, self.gamma, self.seed)
        for name, p in self.parameters().items():
            setattr(m, name, p.copy())
        return m

    def normalize_embeddings(self, y_rows=None, x_rows=None) -> None:
        """Rescale entity embeddings to unit length; W and r are untouched.

        ``y_rows`` / ``x_rows`` restrict the work to the given rows (all
        rows when both are omitted); a zero vector is replaced by a fresh
        random unit vector.
        """
        if not self.kind.embedded:
            raise NonLearnableEnergyError(f"{self.kind.value!r} has no embeddings")
        if y_rows is None and x_rows is None:
            y_rows, x_rows = slice(None), slice(None)
        for emb, rows in ((self.y_emb, y_rows), (self.x_emb, x_rows)):
            if rows is None:
                continue
            sub = emb[rows]
            if sub.size == 0:
                continue
            norms = np.linalg.norm(sub, axis=1)
            zero = norms == 0
            if zero.any():
                logger.warning("re-randomizing %d zero embedding(s)", int(zero.sum()))
                sub[zero] = _unit_rows(self._rng, int(zero.sum()), self.dim)
                norms[zero] = 1.0
            emb[rows] = sub / norms[:, None]

    def nearest_neighbors(self, e: Entity, n: int = 10) -> list[tuple[Entity, float]]:
        """Top-``n`` entities of the same part by cosine similarity, excluding ``e``."""
        if not self.kind.embedded:
            raise NonLearnableEnergyError(f"{self.kind.value!r} has no embeddings")
        part, idx = self.entity_index(e)
        emb = self.y_emb if part == "y" else self.x_emb
        names = self.graph.y_part if part == "y" else self.graph.x_part
        norms = np.linalg.norm(emb, axis=1)
        q = emb[idx] / (norms[idx] or 1.0)
        sims = (emb @ q) / np.where(norms > 0, norms, 1.0)
        order = sorted((k for k in range(len(names)) if k != idx), key=lambda k: (-sims[k], names[k]))
        return [(names[k], float(sims[k])) for k in order[:n]]


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    bound = 6.0 / math.sqrt(dim)
    v = rng.uniform(-bound, bound, size=(n, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # Zero draws have probability 0 under a continuous uniform.
    return v / norms


def init_model(kind, graph: Bigraph, h: HyperParams | None = None) -> EnergyModel:
    """Fresh model: theta at 0, unit embeddings, identity W and zero r."""
    h = h or HyperParams()
    m = EnergyModel(kind, graph, dim=h.dim, gamma=h.gamma, seed=h.seed)
    if m.kind is EnergyKind.THETA:
        m.theta = np.zeros(len(graph.edge_y))
    elif m.kind.embedded:
        rng = rng_stream(h.seed, "init")
        m.y_emb = _unit_rows(rng, len(graph.y_part), h.dim)
        m.x_emb = _unit_rows(rng, len(graph.x_part), h.dim)
        if m.kind is EnergyKind.LFM:
            m.W = np.eye(h.dim)
        else:
            m.r = np.zeros(h.dim)
    return m


# -- persistence -------------------------------------------------------------------


def _entities_to_json(ents):
    return [[e.name, e.kind.value] for e in ents]


def _entities_from_json(rows):
    return [Entity(name, EntityType(kind)) for name, kind in rows]


def model_to_dict(m: EnergyModel, hyper: HyperParams | None = None, run_config: dict | None = None) -> dict:
    g = m.graph
    d = {
        "format": CHECKPOINT_FORMAT,
        "kind": m.kind.value,
        "task": g.task.value,
        "dim": m.dim,
        "gamma": m.gamma,
        "seed": m.seed,
        "hyperparams": asdict(hyper) if hyper is not None else None,
        "run_config": run_config,
        "x_part": _entities_to_json(g.x_part),
        "y_part": _entities_to_json(g.y_part),
        "edges": [[int(i), int(j), float(w)] for i, j, w in zip(g.edge_y, g.edge_x, g.edge_w)],
    }
    for name, p in m.parameters().items():
        d[name] = p.tolist()
    return d


def model_from_dict(d: dict) -> EnergyModel:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a checkpoint (format={d.get('format')!r})")
    xs = _entities_from_json(d["x_part"])
    ys = _entities_from_json(d["y_part"])
    edges = {(ys[i], xs[j]): w for i, j, w in d["edges"]}
    g = Bigraph(TaskKind(d["task"]), xs, ys, edges)
    m = EnergyModel(d["kind"], g, dim=d["dim"], gamma=d["gamma"], seed=d["seed"])
    for name in ("theta", "y_emb", "x_emb", "W", "r"):
        if name in d:
            setattr(m, name, np.array(d[name], dtype=float))
    return m


def save_model(m: EnergyModel, path, hyper: HyperParams | None = None, run_config: dict | None = None) -> None:
    """Write a JSON checkpoint; floats are stored in shortest round-trip form."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(m, hyper, run_config), fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[EnergyModel, dict]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return model_from_dict(d), d


def write_embeddings(m: EnergyModel, stream: TextIO) -> None:
    """One line per entity: ``name<TAB>kind<TAB>v1,...,vd`` (9 significant digits)."""
    if not m.kind.embedded:
        raise NonLearnableEnergyError(f"{m.kind.value!r} has no embeddings")
    for ents, emb in ((m.graph.y_part, m.y_emb), (m.graph.x_part, m.x_emb)):
        for e, v in zip(ents, emb):
            stream.write(f"{e.name}\t{e.kind.value}\t{','.join(f'{c:.9g}' for c in v)}\n")
