"""Matrix and embedding codec for normalized documents.

A document becomes an ``N x 14`` matrix of command rows
``(rho, tau, mu0, nu0, mu1, nu1, mu2, nu2, mu3, nu3, r, g, b, opacity)``
framed as ``[SOS, rows..., EOS, PAD...]``. Continuous columns are mapped to
[-1, 1] and, together with element/command embeddings, projected to the
model width ``D_e``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vexel.errors import BadFraming, ShapeMismatch, TooManyCommands, UnknownIndex
from vexel.io import atomic_write, pack_grid, unpack_grid
from vexel.svg.model import Color, Document, Element, ElementKind, PathCommand

D_M = 14
N_DEFAULT = 1024
COORDS = slice(2, 10)
STYLE = slice(10, 14)
OPACITY_PLACES = 4


@dataclass(frozen=True)
class Vocabulary:
    elements: tuple[str, ...] = ("SOS", "EOS", "path", "circle", "ellipse", "PAD", "rect")
    commands: tuple[str, ...] = ("none", "M", "L", "C", "Q", "A", "Z")

    def element(self, name: str) -> int:
        return self.elements.index(name)

    def command(self, name: str) -> int:
        return self.commands.index(name)


VOCAB = Vocabulary()
SOS, EOS, PATH, CIRCLE, ELLIPSE, PAD, RECT = range(7)
CMD_INDEX = {k: VOCAB.command(k) for k in "MLCQAZ"}
CMD_NAME = {v: k for k, v in CMD_INDEX.items()}
SHAPE_INDEX = {ElementKind.CIRCLE: CIRCLE, ElementKind.ELLIPSE: ELLIPSE, ElementKind.RECT: RECT}


def _style(el: Element) -> tuple[float, float, float, float]:
    return (*el.fill.as_tuple(), el.opacity)


def _path_rows(el: Element, canvas: int) -> list[list[float]]:
    rows = []
    style = _style(el)
    cur = start = None
    for cmd in el.commands:
        k, a = cmd.kind, cmd.args
        if k == "M":
            t = (a[0], a[1])
            p0 = t if cur is None else cur
            slots = (*p0, *t, *t, *t)
            cur = start = t
        elif k == "Z":
            slots = (*start, *start, *start, *start)
            cur = start
        elif k == "L":
            t = (a[0], a[1])
            dx, dy = t[0] - cur[0], t[1] - cur[1]
            slots = (*cur, cur[0] + dx / 3, cur[1] + dy / 3, cur[0] + 2 * dx / 3, cur[1] + 2 * dy / 3, *t)
            cur = t
        elif k == "C":
            slots = (*cur, *a)
            cur = (a[4], a[5])
        elif k == "Q":
            slots = (*cur, a[0], a[1], a[0], a[1], a[2], a[3])
            cur = (a[2], a[3])
        elif k == "A":
            rx, ry, rot, large, sweep, x, y = a
            slots = (*cur, rx, ry, rot / 360.0 * canvas, (2 * large + sweep) * canvas / 3.0, x, y)
            cur = (x, y)
        else:
            raise UnknownIndex(f"path command {k} is not in the codec vocabulary")
        rows.append([PATH, CMD_INDEX[k], *slots, *style])
    return rows


def element_rows(el: Element, canvas: int) -> list[list[float]]:
    p = el.params
    if el.kind == ElementKind.PATH:
        return _path_rows(el, canvas)
    if el.kind == ElementKind.CIRCLE:
        slots = (p[0], p[1], p[2], p[2], 0.0, 0.0, p[0], p[1])
    elif el.kind == ElementKind.ELLIPSE:
        slots = (p[0], p[1], p[2], p[3], 0.0, 0.0, p[0], p[1])
    elif el.kind == ElementKind.RECT:
        slots = (p[0], p[1], p[2], p[3], p[4], p[5], p[0] + p[4], p[1] + p[5])
    else:
        raise UnknownIndex(f"element <{el.kind.value}> is not in the codec vocabulary")
    return [[SHAPE_INDEX[el.kind], 0, *slots, *_style(el)]]


def _frame(value: int) -> list[float]:
    return [value, 0] + [0.0] * 12


def encode_matrix(doc: Document, n: int = N_DEFAULT, vocab: Vocabulary = VOCAB) -> np.ndarray:
    """Encode a normalized document as an ``n x 14`` float64 matrix."""
    if vocab != VOCAB:
        raise UnknownIndex("only the default vocabulary layout is supported")
    body = [row for el in doc.elements for row in element_rows(el, doc.canvas)]
    if len(body) > n - 2:
        raise TooManyCommands(len(body), n - 2)
    rows = [_frame(SOS)] + body + [_frame(EOS)]
    rows += [_frame(PAD)] * (n - len(rows))
    return np.array(rows, dtype=np.float64)


def command_rows(doc: Document) -> int:
    return sum(len(el.commands) if el.kind == ElementKind.PATH else 1 for el in doc.elements)


def _q(v: float, places: int) -> float:
    r = round(float(v), places)
    return 0.0 if r == 0 else r


def _index(v: float, strict: bool) -> int | None:
    i = int(round(float(v)))
    if abs(v - i) > 1e-3 or not 0 <= i < 7:
        if strict:
            raise UnknownIndex(f"index value {v} is not a vocabulary entry")
        return None
    return i


def _color(row, strict: bool) -> tuple[Color, float]:
    rgb = [min(max(float(c), 0.0), 1.0) for c in row[10:13]]
    fill = Color.from_bytes(*(int(round(c * 255)) for c in rgb))
    alpha = _q(min(max(float(row[13]), 0.0), 1.0), OPACITY_PLACES)
    return fill, alpha


def _shape(rho: int, s, fill, alpha, strict: bool) -> Element | None:
    if rho == CIRCLE:
        kind, params = ElementKind.CIRCLE, (s[0], s[1], s[2])
        ok = s[2] >= 0
    elif rho == ELLIPSE:
        kind, params = ElementKind.ELLIPSE, (s[0], s[1], s[2], s[3])
        ok = s[2] >= 0 and s[3] >= 0
    else:
        kind, params = ElementKind.RECT, (s[0], s[1], s[2], s[3], s[4], s[5])
        ok = s[2] >= 0 and s[3] >= 0 and s[4] > 0 and s[5] > 0
    if not ok:
        if strict:
            raise BadFraming(f"invalid {kind.value} parameters {params}")
        return None
    return Element(kind, params=params, fill=fill, opacity=alpha)


def _command(tau: int, s, raw, canvas: int, places: int) -> PathCommand:
    k = CMD_NAME[tau]
    if k in "ML":
        return PathCommand(k, (s[6], s[7]))
    if k == "Z":
        return PathCommand("Z")
    if k == "C":
        return PathCommand("C", (s[2], s[3], s[4], s[5], s[6], s[7]))
    if k == "Q":
        return PathCommand("Q", (s[2], s[3], s[6], s[7]))
    # rotation and flag level come from the unrounded slots
    level = min(max(int(round(raw[5] * 3.0 / canvas)), 0), 3)
    rot = _q(raw[4] * 360.0 / canvas, places) % 360.0
    return PathCommand("A", (abs(s[2]), abs(s[3]), rot, level // 2, level % 2, s[6], s[7]))


def decode_matrix(m: np.ndarray, vocab: Vocabulary = VOCAB, canvas: int = 128,
                  places: int = 2, strict: bool = True) -> Document:
    """Rebuild a Document from a command-row matrix.

    Coordinates are rounded to ``places`` decimals and colors to 8 bits, so a
    matrix stored as 32-bit floats still decodes to the exact source document.
    ``strict=False`` repairs model output: invalid rows are skipped, a path
    always starts with M, and a missing EOS ends the document at the last row.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != D_M:
        raise ShapeMismatch(f"matrix must be N x {D_M}, got {m.shape}")
    if vocab != VOCAB:
        raise UnknownIndex("only the default vocabulary layout is supported")
    if m.shape[0] == 0 or _index(m[0, 0], strict) != SOS:
        if strict:
            raise BadFraming("row 0 is not SOS")
    elements: list[Element] = []
    path: list[PathCommand] = []
    path_style = None

    def flush():
        nonlocal path, path_style
        cmds = [c for c in path]
        while cmds and cmds[-1].kind == "M":
            cmds.pop()
        if cmds:
            elements.append(Element(ElementKind.PATH, commands=tuple(cmds), fill=path_style[0], opacity=path_style[1]))
        path, path_style = [], None

    ended = False
    for i in range(1, m.shape[0]):
        row = m[i]
        rho = _index(row[0], strict)
        tau = _index(row[1], strict)
        if rho is None or tau is None:
            continue
        if rho == EOS:
            ended = True
            break
        if rho in (SOS, PAD):
            if strict:
                raise BadFraming(f"row {i}: {vocab.elements[rho]} before EOS")
            continue
        s = [_q(v, places) for v in row[2:10]]
        fill, alpha = _color(row, strict)
        if rho != PATH:
            if tau != 0:
                if strict:
                    raise BadFraming(f"row {i}: shape row with command index {tau}")
            flush()
            el = _shape(rho, s, fill, alpha, strict)
            if el is not None:
                elements.append(el)
            continue
        if tau == 0:
            if strict:
                raise UnknownIndex(f"row {i}: path row without a command")
            continue
        k = CMD_NAME[tau]
        starts = k == "M" and (s[0], s[1]) == (s[6], s[7])
        if starts or path_style is None:
            flush()
            path_style = (fill, alpha)
            if k != "M":
                if strict:
                    raise BadFraming(f"row {i}: path element starts with {k}")
                path.append(PathCommand("M", (s[0], s[1])))
        path.append(_command(tau, s, row[2:10], canvas, places))
    flush()
    if strict and not ended:
        raise BadFraming("no EOS row")
    return Document(canvas=canvas, elements=tuple(elements))


def normalize_continuous(m: np.ndarray, canvas: int = 128) -> np.ndarray:
    """Map coordinate slots by c -> 2c/V - 1 and style slots by c -> 2c - 1."""
    out = np.array(m, dtype=np.float64)
    out[:, COORDS] = 2.0 * out[:, COORDS] / canvas - 1.0
    out[:, STYLE] = 2.0 * out[:, STYLE] - 1.0
    return out


def denormalize_coords(c_rec, canvas: int = 128):
    """``(clip(c, -1, 1) + 1) / 2 * V``."""
    return (np.clip(c_rec, -1.0, 1.0) + 1.0) / 2.0 * canvas


def denormalize_continuous(m: np.ndarray, canvas: int = 128) -> np.ndarray:
    out = np.array(m, dtype=np.float64)
    out[:, COORDS] = denormalize_coords(out[:, COORDS], canvas)
    out[:, STYLE] = (np.clip(out[:, STYLE], -1.0, 1.0) + 1.0) / 2.0
    return out


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def _equal_norm_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass
class EmbedTables:
    """Element/command tables, the input projection and positional rows.

    The projection has orthonormal columns, so its pseudo-inverse is its
    transpose and ``unembed(embed(m))`` is exact. Table rows share one norm,
    which makes the tied-logit argmax a nearest-row lookup.
    """

    element: np.ndarray  # (7, d_tok)
    command: np.ndarray  # (7, d_tok)
    proj: np.ndarray  # (D_e, 2 * d_tok + 12)
    bias: np.ndarray  # (D_e,)
    pos: np.ndarray  # (N, D_e)

    @classmethod
    def init(cls, n: int, d_e: int, d_tok: int = 32, seed: int = 0, pos_std: float = 0.02) -> EmbedTables:
        from vexel.nn.rng import make_rng

        width = 2 * d_tok + 12
        if width > d_e:
            raise ShapeMismatch(f"2*d_tok+12 = {width} exceeds D_e = {d_e}; projection cannot be full rank")
        rng = make_rng(seed, "embed")
        return cls(
            element=_equal_norm_rows(rng, 7, d_tok),
            command=_equal_norm_rows(rng, 7, d_tok),
            proj=_orthonormal(rng, d_e, width),
            bias=np.zeros(d_e),
            pos=pos_std * rng.standard_normal((n, d_e)),
        )

    @property
    def d_tok(self) -> int:
        return self.element.shape[1]

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    @property
    def d_e(self) -> int:
        return self.proj.shape[0]

    def named(self, prefix: str = "embed.") -> dict[str, np.ndarray]:
        return {prefix + k: getattr(self, k) for k in ("element", "command", "proj", "bias", "pos")}

    @classmethod
    def from_named(cls, tensors: dict[str, np.ndarray], prefix: str = "embed.") -> EmbedTables:
        return cls(**{k: np.asarray(tensors[prefix + k], dtype=np.float64)
                      for k in ("element", "command", "proj", "bias", "pos")})


def token_features(m_norm: np.ndarray, tables: EmbedTables) -> np.ndarray:
    """Pre-projection features ``[elemEmb[rho], cmdEmb[tau], 12 continuous]``."""
    rho = np.rint(m_norm[:, 0]).astype(np.int64)
    tau = np.rint(m_norm[:, 1]).astype(np.int64)
    return np.concatenate([tables.element[rho], tables.command[tau], m_norm[:, 2:]], axis=1)


def embed(m_norm: np.ndarray, tables: EmbedTables) -> np.ndarray:
    if m_norm.shape != (tables.n, D_M):
        raise ShapeMismatch(f"matrix shape {m_norm.shape} does not match tables ({tables.n}, {D_M})")
    return token_features(m_norm, tables) @ tables.proj.T + tables.bias + tables.pos


def unembed_features(rec: np.ndarray, tables: EmbedTables) -> np.ndarray:
    return (np.asarray(rec) - tables.pos - tables.bias) @ tables.proj


def unembed(rec: np.ndarray, tables: EmbedTables, canvas: int = 128) -> np.ndarray:
    """Recover a denormalized matrix: tied-logit argmax plus pseudo-inverse."""
    if rec.shape != (tables.n, tables.d_e):
        raise ShapeMismatch(f"embedding shape {rec.shape} does not match ({tables.n}, {tables.d_e})")
    f = unembed_features(rec, tables)
    d = tables.d_tok
    out = np.zeros((rec.shape[0], D_M))
    # np.argmax returns the first maximum, i.e. ties go to the lower index
    out[:, 0] = np.argmax(f[:, :d] @ tables.element.T, axis=1)
    out[:, 1] = np.argmax(f[:, d:2 * d] @ tables.command.T, axis=1)
    out[:, 2:] = f[:, 2 * d:]
    return denormalize_continuous(out, canvas)


MAT_MAGIC = b"VXM1"


def write_mat(path: str | Path, m: np.ndarray):
    if np.asarray(m).shape[1:] != (D_M,):
        raise ShapeMismatch(f"matrix must have {D_M} columns")
    atomic_write(path, pack_grid(MAT_MAGIC, m))


def read_mat(path: str | Path) -> np.ndarray:
    m = unpack_grid(MAT_MAGIC, Path(path).read_bytes())
    if m.shape[1] != D_M:
        raise ShapeMismatch(f"matrix has {m.shape[1]} columns, expected {D_M}")
    return m


def token_accuracy(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of rows whose (rho, tau) agree, over rows up to b's EOS."""
    end = int(np.argmax(np.rint(b[:, 0]) == EOS)) + 1 if np.any(np.rint(b[:, 0]) == EOS) else len(b)
    same = (np.rint(a[:end, 0]) == np.rint(b[:end, 0])) & (np.rint(a[:end, 1]) == np.rint(b[:end, 1]))
    return float(np.mean(same))


__all__ = [
    "D_M", "N_DEFAULT", "VOCAB", "Vocabulary", "EmbedTables", "encode_matrix", "decode_matrix",
    "normalize_continuous", "denormalize_coords", "denormalize_continuous", "embed", "unembed",
    "write_mat", "read_mat", "token_accuracy", "command_rows",
]
