"""Factor graphs, SCMA codebooks and bit-to-codeword mapping."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np


class FactorGraphError(ValueError):
    pass


class CodebookError(ValueError):
    pass


@dataclass(frozen=True)
class FactorGraph:
    """Binary user-to-subcarrier assignment with regular degrees.

    ``entries[j, k] == 1`` when user ``j`` transmits on subcarrier ``k``.
    Construction does not check the degrees; use :func:`validate_factor_graph`.
    """

    entries: np.ndarray
    d_f: int
    d_v: int

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.int8, copy=True)
        if arr.ndim != 2:
            raise FactorGraphError("factor graph must be a 2-D matrix")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def J(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    @property
    def overloading(self) -> float:
        return self.J / self.K

    def supports(self) -> list[tuple[int, ...]]:
        return [tuple(np.flatnonzero(row)) for row in self.entries]

    def users_on(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.entries[:, k])

    def __eq__(self, other):
        if not isinstance(other, FactorGraph):
            return NotImplemented
        return (self.d_f, self.d_v) == (other.d_f, other.d_v) and np.array_equal(
            self.entries, other.entries
        )

    def __hash__(self):
        return hash((self.entries.tobytes(), self.entries.shape, self.d_f, self.d_v))


@dataclass(frozen=True)
class RelaxedFactorGraph:
    """Continuous relaxation of a factor graph, entries in [0, 1]."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float, copy=True)
        if arr.ndim != 2:
            raise FactorGraphError("relaxed factor graph must be a 2-D matrix")
        if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
            raise FactorGraphError("relaxed factor graph entries must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def J(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def from_graph(cls, graph: FactorGraph) -> "RelaxedFactorGraph":
        return cls(graph.entries.astype(float))


def canonical_factor_graph(J: int, K: int, d_f: int) -> FactorGraph:
    """First ``J`` size-``d_f`` subsets of the subcarriers, lexicographic order."""
    if K < 1 or J < 1 or not 1 <= d_f <= K:
        raise FactorGraphError(f"invalid dimensions J={J}, K={K}, d_f={d_f}")
    capacity = math.comb(K, d_f)
    if J > capacity:
        raise FactorGraphError(f"capacity exceeded: J={J} > C({K},{d_f})={capacity}")
    if (J * d_f) % K:
        raise FactorGraphError(f"degree infeasible: J*d_f={J * d_f} is not divisible by K={K}")
    entries = np.zeros((J, K), dtype=np.int8)
    for j, support in enumerate(itertools.islice(itertools.combinations(range(K), d_f), J)):
        entries[j, list(support)] = 1
    cols = entries.sum(axis=0)
    if np.any(cols != cols[0]):
        raise FactorGraphError(
            f"degree infeasible: the first {J} lexicographic supports give column sums {cols.tolist()}"
        )
    return FactorGraph(entries, d_f, J * d_f // K)


def validate_factor_graph(F: FactorGraph) -> list[str]:
    """Return the list of violated degree/binary constraints (empty when valid)."""
    violations = []
    e = np.asarray(F.entries)
    bad = np.argwhere((e != 0) & (e != 1))
    for j, k in bad:
        violations.append(f"entry ({j},{k}) = {e[j, k]} is not binary")
    for j, s in enumerate(e.sum(axis=1)):
        if s != F.d_f:
            violations.append(f"row {j} sums to {s}, expected d_f={F.d_f}")
    for k, s in enumerate(e.sum(axis=0)):
        if s != F.d_v:
            violations.append(f"column {k} sums to {s}, expected d_v={F.d_v}")
    if F.J * F.d_f != F.K * F.d_v:
        violations.append(f"degree mismatch: J*d_f={F.J * F.d_f} != K*d_v={F.K * F.d_v}")
    return violations


def is_valid_factor_graph(F: FactorGraph) -> bool:
    return not validate_factor_graph(F)


# -- codebooks -------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """M codewords of one user; ``support`` is the user's factor-graph row."""

    codewords: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        cw = np.array(self.codewords, dtype=complex, copy=True)
        sup = np.array(self.support, dtype=bool, copy=True)
        if cw.ndim != 2 or sup.shape != (cw.shape[1],):
            raise CodebookError("codewords must be (M, K) with a length-K support")
        cw.setflags(write=False)
        sup.setflags(write=False)
        object.__setattr__(self, "codewords", cw)
        object.__setattr__(self, "support", sup)

    @property
    def M(self) -> int:
        return self.codewords.shape[0]

    @property
    def K(self) -> int:
        return self.codewords.shape[1]

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.M))

    def average_energy(self) -> float:
        return float(np.mean(np.sum(np.abs(self.codewords) ** 2, axis=1)))

    def check(self) -> None:
        M = self.M
        if M < 2 or M & (M - 1):
            raise CodebookError(f"codebook size M={M} is not a power of 2")
        nz = self.codewords != 0
        for m in range(M):
            if not np.array_equal(nz[m], self.support):
                raise CodebookError(
                    f"codeword {m} support {np.flatnonzero(nz[m]).tolist()} "
                    f"differs from factor-graph row {np.flatnonzero(self.support).tolist()}"
                )
        energy = self.average_energy()
        if abs(energy - 1.0) > 1e-9:
            raise CodebookError(f"average codeword energy {energy:.12g} is not 1")


@dataclass(frozen=True)
class CodebookSet:
    """Codebooks of all users sharing one factor graph."""

    books: tuple[Codebook, ...]
    codewords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        books = tuple(self.books)
        if not books:
            raise CodebookError("empty codebook set")
        if len({(b.M, b.K) for b in books}) != 1:
            raise CodebookError("all users must share M and K")
        object.__setattr__(self, "books", books)
        arr = np.stack([b.codewords for b in books])
        arr.setflags(write=False)
        object.__setattr__(self, "codewords", arr)

    def __len__(self):
        return len(self.books)

    def __getitem__(self, j):
        return self.books[j]

    def __iter__(self):
        return iter(self.books)

    @property
    def J(self) -> int:
        return len(self.books)

    @property
    def M(self) -> int:
        return self.books[0].M

    @property
    def K(self) -> int:
        return self.books[0].K

    @property
    def support_matrix(self) -> np.ndarray:
        return np.stack([b.support for b in self.books]).astype(np.int8)

    def factor_graph(self) -> FactorGraph:
        e = self.support_matrix
        return FactorGraph(e, int(e[0].sum()), int(round(e.sum() / e.shape[1])))

    def subcarrier_energy(self) -> np.ndarray:
        """Mean per-subcarrier codeword energy, shape (J, K)."""
        return np.mean(np.abs(self.codewords) ** 2, axis=1)


def _bit_reverse(m: int, nbits: int) -> int:
    out = 0
    for _ in range(nbits):
        out = (out << 1) | (m & 1)
        m >>= 1
    return out


def rotated_codebooks(F: FactorGraph | np.ndarray, M: int = 4, rank_offset: np.ndarray | None = None) -> CodebookSet:
    """Rotated-PSK SCMA codebooks for an arbitrary binary factor graph.

    The mother constellation places an M-PSK point on every occupied
    subcarrier; odd-numbered nonzero dimensions use the bit-reversed symbol
    order so that distinct codewords differ on every occupied subcarrier.
    On subcarrier k the r-th occupant is rotated by ``r * (2*pi/M) / d_v(k)``.
    Codewords are scaled to unit energy.
    """
    entries = np.asarray(F.entries if isinstance(F, FactorGraph) else F, dtype=np.int8)
    if M < 2 or M & (M - 1):
        raise CodebookError(f"M={M} is not a power of 2")
    J, K = entries.shape
    nbits = int(np.log2(M))
    psk = np.exp(1j * (np.pi / M + 2 * np.pi * np.arange(M) / M))
    occupancy = entries.sum(axis=0)
    rank = np.cumsum(entries, axis=0) - 1
    if rank_offset is not None:
        rank = rank + np.asarray(rank_offset)[:, None]
    books = []
    for j in range(J):
        support = np.flatnonzero(entries[j])
        if support.size == 0:
            raise CodebookError(f"user {j} has an empty support")
        cw = np.zeros((M, K), dtype=complex)
        scale = 1.0 / np.sqrt(support.size)
        for d, k in enumerate(support):
            order = np.arange(M) if d % 2 == 0 else np.array([_bit_reverse(m, nbits) for m in range(M)])
            theta = rank[j, k] * (2 * np.pi / M) / occupancy[k]
            cw[:, k] = scale * psk[order] * np.exp(1j * theta)
        books.append(Codebook(cw, entries[j].astype(bool)))
    return CodebookSet(tuple(books))


# -- encoding --------------------------------------------------------------


def encode(word: int, user: int, codebook: CodebookSet | Codebook) -> np.ndarray:
    """Codeword of ``user`` for the integer value of a log2(M)-bit word."""
    book = codebook if isinstance(codebook, Codebook) else codebook[user]
    if not 0 <= int(word) < book.M:
        raise ValueError(f"word {word} out of range [0, {book.M})")
    return book.codewords[int(word)]


def bits_to_words(bits: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """MSB-first packing of ``(..., n*bps)`` bits into ``(..., n)`` integers."""
    bits = np.asarray(bits, dtype=np.int64)
    shaped = bits.reshape(*bits.shape[:-1], -1, bits_per_symbol)
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1)
    return shaped @ weights


def words_to_bits(words: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.int64)
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    bits = (words[..., None] >> shifts) & 1
    return bits.reshape(*words.shape[:-1], -1).astype(np.int8)


def nearest_codeword(vec: np.ndarray, book: Codebook) -> int:
    return int(np.argmin(np.sum(np.abs(book.codewords - vec) ** 2, axis=1)))


# -- file format -----------------------------------------------------------
#
#   # comment lines are ignored
#   codebook J=<J> K=<K> M=<M>
#   user <j> support <K binary digits>
#   <re_1> <im_1> ... <re_K> <im_K>        (M lines)
#   ...


def dump_codebook(books: CodebookSet, path: str | Path | None = None) -> str:
    lines = [
        "# SCMA codebook: one block per user, M rows of K (real, imag) pairs",
        f"codebook J={books.J} K={books.K} M={books.M}",
    ]
    for j, b in enumerate(books):
        lines.append(f"user {j} support " + "".join("1" if s else "0" for s in b.support))
        for row in b.codewords:
            lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_codebook(text: str) -> CodebookSet:
    rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise CodebookError("parse error: empty codebook document")
    head = rows[0].split()
    try:
        if head[0] != "codebook":
            raise ValueError
        dims = dict(tok.split("=", 1) for tok in head[1:])
        J, K, M = int(dims["J"]), int(dims["K"]), int(dims["M"])
    except (ValueError, KeyError, IndexError):
        raise CodebookError(f"parse error: bad header {rows[0]!r}") from None
    expected = 1 + J * (M + 1)
    if len(rows) != expected:
        raise CodebookError(f"parse error: expected {expected} non-comment lines, found {len(rows)}")
    books = []
    pos = 1
    for j in range(J):
        tag = rows[pos].split()
        if len(tag) != 4 or tag[0] != "user" or tag[2] != "support" or int(tag[1]) != j:
            raise CodebookError(f"parse error: expected 'user {j} support ...', got {rows[pos]!r}")
        if len(tag[3]) != K or set(tag[3]) - {"0", "1"}:
            raise CodebookError(f"parse error: support {tag[3]!r} is not {K} binary digits")
        support = np.array([c == "1" for c in tag[3]])
        cw = np.empty((M, K), dtype=complex)
        for m in range(M):
            try:
                vals = [float(v) for v in rows[pos + 1 + m].split()]
            except ValueError:
                raise CodebookError(f"parse error in user {j} codeword {m}") from None
            if len(vals) != 2 * K:
                raise CodebookError(f"parse error: user {j} codeword {m} has {len(vals)} numbers, expected {2 * K}")
            cw[m] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
        pos += M + 1
        book = Codebook(cw, support)
        try:
            book.check()
        except CodebookError as exc:
            raise CodebookError(f"user {j}: {exc}") from None
        books.append(book)
    degrees = {int(b.support.sum()) for b in books}
    if len(degrees) != 1:
        raise CodebookError(f"irregular supports: row degrees {sorted(degrees)}")
    return CodebookSet(tuple(books))


def load_codebook(path: str | Path | None = None) -> CodebookSet:
    """Load a codebook file, or the embedded 6-user/4-subcarrier/M=4 default."""
    if path is None:
        text = resources.files("hdnoma").joinpath("data/default_codebook.txt").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise CodebookError(f"cannot read codebook file {path}: {exc}") from None
    return parse_codebook(text)


def default_codebook() -> CodebookSet:
    return load_codebook(None)


def codebooks_for(F: FactorGraph, M: int = 4) -> CodebookSet:
    """Default codebook when ``F`` matches its supports, else rotated PSK for ``F``."""
    if M == 4:
        base = default_codebook()
        if base.support_matrix.shape == F.entries.shape and np.array_equal(base.support_matrix, F.entries):
            return base
    return rotated_codebooks(F, M)


def stack_supports(books: Sequence[Codebook]) -> np.ndarray:
    return np.stack([b.support for b in books]).astype(np.int8)
