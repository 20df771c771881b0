"""Problem instances, file readers, PCA, and exhaustive or exact oracles."""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .pauli import PAULI_MATRICES, PauliSum


class ProblemError(ValueError):
    pass


class ParseError(ProblemError):
    pass


# --- MaxCut -------------------------------------------------------------


@dataclass(frozen=True)
class WeightedGraph:
    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ProblemError("graph needs at least one vertex")
        clean = []
        for u, v, w in self.edges:
            u, v, w = int(u), int(v), float(w)
            if u == v:
                raise ProblemError(f"self-loop on vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ProblemError(f"edge ({u}, {v}) out of range for n={self.n}")
            if not math.isfinite(w):
                raise ProblemError("edge weights must be finite")
            clean.append((u, v, w))
        object.__setattr__(self, "edges", tuple(clean))

    def cut_value(self, bits) -> float:
        return float(sum(w for u, v, w in self.edges if bits[u] != bits[v]))

    def to_text(self) -> str:
        return "".join(f"{u} {v} {w!r}\n" for u, v, w in self.edges)


def load_graph(path, n: int | None = None) -> WeightedGraph:
    """Read ``u v w`` lines (0-indexed vertices, ``#`` comments)."""
    edges = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: expected 'u v w', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not edges:
        raise ParseError(f"{path}: no edges")
    size = n if n is not None else 1 + max(max(u, v) for u, v, _ in edges)
    return WeightedGraph(size, tuple(edges))


def default_graph() -> WeightedGraph:
    """Bundled 6-vertex complete graph with seed-0 uniform [0, 1) weights."""
    path = resources.files("mps_pretrain") / "data" / "maxcut6.edges"
    with resources.as_file(path) as p:
        return load_graph(p, 6)


def seeded_complete_graph(n: int, seed: int) -> WeightedGraph:
    rng = np.random.default_rng(seed)
    edges = [(u, v, float(rng.uniform())) for u in range(n) for v in range(u + 1, n)]
    return WeightedGraph(n, tuple(edges))


def maxcut_hamiltonian(g: WeightedGraph) -> PauliSum:
    """``sum_uv w_uv (1 - Z_u Z_v)``; its expectation is twice the expected cut."""
    terms = []
    for u, v, w in g.edges:
        terms.append((w, ()))
        terms.append((-w, ((u, "Z"), (v, "Z"))))
    return PauliSum.from_terms(g.n, terms)


def brute_force_maxcut(g: WeightedGraph, max_n: int = 24) -> tuple[str, float]:
    """Exhaustive maximum cut; bit of vertex 0 is the leftmost character.

    Ties go to the numerically smallest bitstring.
    """
    if g.n > max_n:
        raise ProblemError(f"brute force limited to {max_n} vertices")
    idx = np.arange(2**g.n, dtype=np.int64)
    total = np.zeros(idx.size)
    for u, v, w in g.edges:
        bu = (idx >> (g.n - 1 - u)) & 1
        bv = (idx >> (g.n - 1 - v)) & 1
        total += w * (bu != bv)
    best = int(np.argmax(total))  # argmax returns the first (smallest) maximizer
    return format(best, f"0{g.n}b"), float(total[best])


# --- spin chains --------------------------------------------------------


def tfim_hamiltonian(n: int, j: float = 1.0, g: float = 1.0):
    """Open-chain ``-j sum Z_i Z_{i+1} - g sum X_i``.

    Returns ``(PauliSum, bonds)`` where ``bonds`` are ``(i, h_i)`` 4x4 terms on
    ``(i, i+1)``; each field is split equally between the bonds touching it
    (boundary sites belong to a single bond).
    """
    if n < 2:
        raise ProblemError("TFIM needs n >= 2")
    terms = [(-j, ((i, "Z"), (i + 1, "Z"))) for i in range(n - 1)]
    terms += [(-g, ((i, "X"),)) for i in range(n)]
    h = PauliSum.from_terms(n, terms)
    x, z, eye = PAULI_MATRICES["X"], PAULI_MATRICES["Z"], PAULI_MATRICES["I"]
    bonds = []
    for i in range(n - 1):
        wl = 1.0 if i == 0 else 0.5
        wr = 1.0 if i == n - 2 else 0.5
        local = -j * np.kron(z, z) - g * (wl * np.kron(x, eye) + wr * np.kron(eye, x))
        bonds.append((i, local))
    return h, bonds


def pauli_sum_two_site_bonds(h: PauliSum):
    """Split a Pauli sum with at most two-qubit terms into ``(i, j, h_ij)`` terms.

    One-qubit terms are attached to a bond touching the qubit; the identity
    part is returned separately as ``(bonds, constant)``.
    """
    n = h.n
    pairs: dict[tuple[int, int], np.ndarray] = {}
    singles = []
    const = 0.0
    for c, s in h.terms:
        if not s:
            const += c
        elif len(s) == 1:
            singles.append((c, s[0]))
        elif len(s) == 2:
            (a, pa), (b, pb) = s
            key = (a, b)
            pairs[key] = pairs.get(key, 0) + c * np.kron(PAULI_MATRICES[pa], PAULI_MATRICES[pb])
        else:
            raise ProblemError("terms on more than two qubits cannot be split into bonds")
    for c, (q, p) in singles:
        key = next((k for k in sorted(pairs) if q in k), None)
        if key is None:
            key = (q, q + 1) if q + 1 < n else (q - 1, q)
            pairs[key] = np.zeros((4, 4), dtype=complex)
        op = PAULI_MATRICES[p]
        eye = np.eye(2)
        pairs[key] = pairs[key] + c * (np.kron(op, eye) if key[0] == q else np.kron(eye, op))
    return [(a, b, m) for (a, b), m in sorted(pairs.items())], const


# --- Hamiltonian files --------------------------------------------------


def parse_pauli_text(text: str, source: str = "<text>", n: int | None = None) -> PauliSum:
    """Parse ``<coeff> [<P><q>]*`` lines; ``#`` starts a comment."""
    terms = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            coeff = float(parts[0])
        except ValueError:
            try:
                complex(parts[0].replace("i", "j"))
            except ValueError:
                raise ParseError(f"{source}:{lineno}: bad coefficient {parts[0]!r}") from None
            raise ParseError(f"{source}:{lineno}: complex coefficients are not allowed") from None
        if not math.isfinite(coeff):
            raise ParseError(f"{source}:{lineno}: coefficient must be finite")
        string = []
        for tok in parts[1:]:
            letter, rest = tok[:1].upper(), tok[1:]
            if letter not in ("X", "Y", "Z") or not rest.isdigit():
                raise ParseError(f"{source}:{lineno}: bad Pauli factor {tok!r}")
            string.append((int(rest), letter))
        if len({q for q, _ in string}) != len(string):
            raise ParseError(f"{source}:{lineno}: repeated qubit in one term")
        terms.append((coeff, tuple(string)))
    if not terms:
        raise ParseError(f"{source}: empty operator")
    width = 1 + max((q for _, s in terms for q, _ in s), default=0)
    if n is not None:
        if n < width:
            raise ParseError(f"{source}: operator acts on {width} qubits, more than n={n}")
        width = n
    return PauliSum.from_terms(width, terms)


def load_pauli_hamiltonian(path, n: int | None = None) -> PauliSum:
    path = Path(path)
    return parse_pauli_text(path.read_text(), str(path), n)


def h2_hamiltonian_path() -> Path:
    return Path(str(resources.files("mps_pretrain") / "data" / "h2_sto3g_jw.txt"))


def recorded_minimum(path) -> float | None:
    """Value of a ``# minimum_eigenvalue: <x>`` header line, if present."""
    for line in Path(path).read_text().splitlines():
        if line.startswith("# minimum_eigenvalue:"):
            return float(line.split(":", 1)[1])
    return None


# --- exact diagonalization ----------------------------------------------

DENSE_EIG_LIMIT = 10


def exact_ground(h: PauliSum, n: int | None = None, max_n: int = 14) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and a unit eigenvector.

    Dense ``eigh`` up to 10 qubits; beyond that a sparse Lanczos solve.
    """
    n = h.n if n is None else n
    if n > max_n:
        raise ProblemError(f"exact diagonalization limited to {max_n} qubits")
    if n != h.n:
        h = PauliSum(n, h.terms)
    if n <= DENSE_EIG_LIMIT:
        w, v = np.linalg.eigh(h.to_dense())
        return float(w[0]), v[:, 0]
    mat = h.to_sparse()
    v0 = np.ones(mat.shape[0], dtype=complex) / math.sqrt(mat.shape[0])
    w, v = spla.eigsh(mat, k=1, which="SA", v0=v0, tol=1e-12)
    return float(w[0]), v[:, 0] / np.linalg.norm(v[:, 0])


# --- PCA ----------------------------------------------------------------


@dataclass(frozen=True)
class PCAModel:
    components: np.ndarray  # columns are principal directions
    eigenvalues: np.ndarray
    mean: np.ndarray


def pca_fit(x: np.ndarray, center: bool = True) -> PCAModel:
    """Principal components from the eigendecomposition of ``X^T X``.

    Columns are centered first unless ``center`` is false. Each component's
    largest-magnitude entry is made positive.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ProblemError("PCA needs a sample matrix with at least 2 rows")
    mean = x.mean(axis=0) if center else np.zeros(x.shape[1])
    xc = x - mean
    sigma = xc.T @ xc
    w, u = np.linalg.eigh(sigma)
    order = np.argsort(w)[::-1]
    w, u = w[order], u[:, order]
    for k in range(u.shape[1]):
        j = np.argmax(np.abs(u[:, k]))
        if u[j, k] < 0:
            u[:, k] = -u[:, k]
    return PCAModel(u, w, mean)


def pca_project(m: PCAModel, x: np.ndarray, n_components: int) -> np.ndarray:
    """Inner products of centered samples with the leading components."""
    x = np.asarray(x, dtype=float)
    if n_components > m.components.shape[1]:
        raise ProblemError("more components requested than available")
    if x.shape[-1] != m.mean.shape[0]:
        raise ProblemError("sample dimension does not match the PCA model")
    return (x - m.mean) @ m.components[:, :n_components]


def rescale_to_angles(train: np.ndarray, *others: np.ndarray, high: float = math.pi / 2):
    """Affine map of each column onto ``[0, high]`` using the training range."""
    lo = train.min(axis=0)
    span = np.where(train.max(axis=0) > lo, train.max(axis=0) - lo, 1.0)
    out = [(train - lo) / span * high] + [np.clip((o - lo) / span * high, 0, high) for o in others]
    return out if others else out[0]


# --- datasets -----------------------------------------------------------


@dataclass(frozen=True)
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise ProblemError("samples must be a matrix")
        if y.shape != (x.shape[0],):
            raise ProblemError("labels must have one entry per sample")
        if not np.all(np.isfinite(x)):
            raise ProblemError("samples must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise ProblemError("labels must be 0 or 1")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "labels", y.astype(int))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]


def load_delimited_dataset(path, delimiter: str | None = None) -> LabeledDataset:
    """Rows of features followed by an integer label; ``#`` lines skipped."""
    rows = []
    text = Path(path).read_text()
    if delimiter is None:
        delimiter = "," if "," in text else None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(t) for t in line.split(delimiter)])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise ParseError(f"{path}: no samples")
    if len({len(r) for r in rows}) != 1 or len(rows[0]) < 2:
        raise ParseError(f"{path}: rows must share a width of at least 2")
    arr = np.array(rows)
    labels = arr[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ParseError(f"{path}: labels must be integers")
    return LabeledDataset(arr[:, :-1], labels.astype(int))


def save_delimited_dataset(path, data: LabeledDataset) -> None:
    lines = [",".join(repr(float(v)) for v in row) + f",{int(lab)}" for row, lab in zip(data.samples, data.labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def _open_maybe_gzip(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read a big-endian IDX file of unsigned bytes (images 0x803 or labels 0x801)."""
    with _open_maybe_gzip(path) as fh:
        head = fh.read(4)
        if len(head) != 4:
            raise ParseError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", head)
        if magic not in (0x00000801, 0x00000803):
            raise ParseError(f"{path}: unsupported IDX magic {magic:#010x}")
        ndim = magic & 0xFF
        dims = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype=np.uint8)
    if data.size != int(np.prod(dims)):
        raise ParseError(f"{path}: payload size does not match header")
    return data.reshape(dims)


def load_idx_dataset(images_path, labels_path, classes: tuple[int, int] = (0, 1)) -> LabeledDataset:
    """Binary dataset of two classes from IDX image/label files, images flattened."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ParseError("image and label counts differ")
    mask = np.isin(labels, classes)
    x = images[mask].reshape(int(mask.sum()), -1).astype(float) / 255.0
    y = (labels[mask] == classes[1]).astype(int)
    return LabeledDataset(x, y)


def product_teacher_dataset(
    n: int,
    samples: int,
    seed: int = 0,
    margin: float = 0.05,
    low: float = 0.0,
    high: float = math.pi / 2,
) -> tuple[LabeledDataset, np.ndarray]:
    """Balanced dataset labelled by a hidden product state.

    Features are uniform angles in ``[low, high]``; the label is 1 exactly
    when ``prod_i cos^2(x_i - a_i) >= 0.5`` for seeded teacher angles ``a``.
    Samples within ``margin`` of the threshold are rejected, so a bond-1 MPS
    (the teacher itself) separates the data perfectly. Returns the dataset
    and the teacher angles.
    """
    rng = np.random.default_rng(seed)
    teacher = rng.uniform(0.2, 1.0, size=n)
    want = samples // 2
    pos, neg = [], []
    while len(pos) < want or len(neg) < samples - want:
        x = rng.uniform(low, high, size=(4096, n))
        f = np.prod(np.cos(x - teacher) ** 2, axis=1)
        keep = np.abs(f - 0.5) >= margin
        for row, val in zip(x[keep], f[keep]):
            if val >= 0.5 and len(pos) < want:
                pos.append(row)
            elif val < 0.5 and len(neg) < samples - want:
                neg.append(row)
    x = np.array(pos + neg)
    y = np.array([1] * len(pos) + [0] * len(neg))
    order = rng.permutation(len(y))
    return LabeledDataset(x[order], y[order]), teacher
