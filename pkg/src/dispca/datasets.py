"""Data loaders and synthetic generators for the experiment harness.

Loaders densify everything: the harness works at desk scale. Synthetic
generators stand in for the large public datasets.
"""

import csv

import numpy as np
import scipy.sparse as sp

from .exceptions import DatasetError, ParameterError

FORMATS = ("csv-dense", "matrix-market", "libsvm")


def _parse_float(token, lineno, path):
    try:
        value = float(token)
    except ValueError:
        raise DatasetError(f"cannot parse {token!r} as a number", line=lineno, path=path) from None
    if not np.isfinite(value):
        raise DatasetError(f"non-finite value {token!r}", line=lineno, path=path)
    return value


def load_csv(path, skip_header=False):
    rows, width = [], None
    pending_header = skip_header
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not "".join(record).strip() or record[0].lstrip().startswith("#"):
                continue
            if pending_header:
                pending_header = False
                continue
            values = [_parse_float(tok.strip(), lineno, path) for tok in record]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetError(f"expected {width} columns, found {len(values)}", line=lineno, path=path)
            rows.append(values)
    if not rows:
        raise DatasetError("no data rows", path=path)
    return np.array(rows, dtype=np.float64)


def load_matrix_market(path):
    """Dense array from a MatrixMarket ``coordinate`` or ``array`` file (real/integer/pattern)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise DatasetError("missing %%MatrixMarket banner", line=1, path=path)
    banner = lines[0].lower().split()
    if len(banner) != 5 or banner[1] != "matrix":
        raise DatasetError("malformed banner", line=1, path=path)
    layout, field, symmetry = banner[2], banner[3], banner[4]
    if layout not in ("coordinate", "array"):
        raise DatasetError(f"unsupported layout {layout!r}", line=1, path=path)
    if field not in ("real", "integer", "pattern", "double"):
        raise DatasetError(f"unsupported field {field!r}", line=1, path=path)
    if symmetry not in ("general", "symmetric", "skew-symmetric"):
        raise DatasetError(f"unsupported symmetry {symmetry!r}", line=1, path=path)
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise DatasetError("missing size line", path=path)
    size_line, size_text = body[0]
    try:
        dims = [int(tok) for tok in size_text.split()]
    except ValueError:
        raise DatasetError("size line must hold integers", line=size_line, path=path) from None
    entries = body[1:]
    if layout == "coordinate":
        if len(dims) != 3:
            raise DatasetError("coordinate size line needs rows cols nnz", line=size_line, path=path)
        n, d, nnz = dims
        if len(entries) != nnz:
            raise DatasetError(f"header promises {nnz} entries, found {len(entries)}", path=path)
        out = np.zeros((n, d))
        for lineno, text in entries:
            toks = text.split()
            want = 2 if field == "pattern" else 3
            if len(toks) != want:
                raise DatasetError(f"expected {want} fields", line=lineno, path=path)
            try:
                i, j = int(toks[0]) - 1, int(toks[1]) - 1
            except ValueError:
                raise DatasetError("indices must be integers", line=lineno, path=path) from None
            if not (0 <= i < n and 0 <= j < d):
                raise DatasetError(f"index ({i + 1}, {j + 1}) outside {n} x {d}", line=lineno, path=path)
            value = 1.0 if field == "pattern" else _parse_float(toks[2], lineno, path)
            out[i, j] += value
            if symmetry != "general" and i != j:
                out[j, i] += value if symmetry == "symmetric" else -value
        return out
    if len(dims) != 2:
        raise DatasetError("array size line needs rows cols", line=size_line, path=path)
    n, d = dims
    if symmetry != "general":
        raise DatasetError("only general array layout is supported", line=1, path=path)
    if len(entries) != n * d:
        raise DatasetError(f"expected {n * d} values, found {len(entries)}", path=path)
    values = [_parse_float(text.strip(), lineno, path) for lineno, text in entries]
    return np.array(values).reshape((d, n)).T  # column-major


def load_libsvm(path, n_features=None):
    """Features and targets from a libsvm/svmlight file (1-based feature indices)."""
    labels, rows, cols, vals = [], [], [], []
    max_col = 0
    with open(path, encoding="utf-8") as fh:
        r = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            labels.append(_parse_float(toks[0], lineno, path))
            for tok in toks[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise DatasetError(f"expected index:value, got {tok!r}", line=lineno, path=path)
                try:
                    j = int(idx)
                except ValueError:
                    raise DatasetError(f"bad feature index {idx!r}", line=lineno, path=path) from None
                if j < 1:
                    raise DatasetError("feature indices are 1-based", line=lineno, path=path)
                if n_features is not None and j > n_features:
                    raise DatasetError(f"feature index {j} exceeds d = {n_features}", line=lineno, path=path)
                rows.append(r)
                cols.append(j - 1)
                vals.append(_parse_float(val, lineno, path))
                max_col = max(max_col, j)
            r += 1
    if not labels:
        raise DatasetError("no data rows", path=path)
    d = n_features if n_features is not None else max_col
    if d < 1:
        raise DatasetError("no features found", path=path)
    x = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), d)).toarray()
    return x, np.array(labels)


def load_dataset(path, fmt, n_features=None):
    """Load ``path`` as a dense matrix.

    For ``libsvm`` input the target becomes the last column, matching the
    harness convention that regression targets live in the last column.
    """
    if fmt == "csv-dense":
        return load_csv(path)
    if fmt == "matrix-market":
        return load_matrix_market(path)
    if fmt == "libsvm":
        x, y = load_libsvm(path, n_features)
        return np.column_stack([x, y])
    raise ParameterError(f"unknown format {fmt!r}; choose from {FORMATS}")


def _orthonormal(n, k, rng, centered=False):
    g = rng.standard_normal((n, k))
    if centered:
        g -= g.mean(axis=0)
    q, _ = np.linalg.qr(g)
    return q


def make_spectrum_data(n, d, spectrum, seed=0):
    """Centered ``n x d`` matrix whose singular values are exactly ``spectrum``."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    m = spectrum.size
    if m > min(n - 1, d):
        raise ParameterError("a centered matrix has at most min(n - 1, d) singular values")
    rng = np.random.default_rng(seed)
    u = _orthonormal(n, m, rng, centered=True)
    v = _orthonormal(d, m, rng)
    return (u * spectrum) @ v.T


def make_low_rank_plus_noise(n, d, rank, noise=0.1, decay=1.0, seed=0):
    """Centered data with ``rank`` strong directions (``sigma_i ~ i^-decay``) plus isotropic noise."""
    rng = np.random.default_rng(seed)
    strengths = np.arange(1, rank + 1, dtype=np.float64) ** -decay
    scores = rng.standard_normal((n, rank)) * strengths
    x = scores @ _orthonormal(d, rank, rng).T + noise * rng.standard_normal((n, d)) / np.sqrt(d)
    return x - x.mean(axis=0)


def make_gaussian_mixture(n, d, k, separation=10.0, spread=1.0, seed=0):
    """Points from ``k`` spherical Gaussians; returns ``(points, labels)``."""
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((k, d)) * separation / np.sqrt(2.0)
    labels = rng.integers(0, k, size=n)
    x = means[labels] + spread * rng.standard_normal((n, d))
    return x - x.mean(axis=0), labels


def make_sparse_low_rank(n, d, density=0.01, rank=10, noise=0.1, seed=0):
    """Sparse CSR matrix whose non-zeros follow a rank-``rank`` model plus noise."""
    rng = np.random.default_rng(seed)
    nnz = max(1, int(round(density * n * d)))
    flat = rng.choice(n * d, size=nnz, replace=False)
    rows, cols = np.divmod(flat, d)
    left = rng.standard_normal((n, rank))
    right = rng.standard_normal((d, rank)) * (np.arange(1, rank + 1) ** -0.5)
    vals = np.einsum("ij,ij->i", left[rows], right[cols]) + noise * rng.standard_normal(nnz)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, d))


def make_regression(n, d, rank=5, noise=0.1, target_noise=0.05, seed=0):
    """Centered low-rank-plus-noise features and a target linear in the strong directions."""
    x = make_low_rank_plus_noise(n, d, rank, noise=noise, decay=0.5, seed=seed)
    rng = np.random.default_rng(seed + 1)
    top = np.linalg.svd(x, full_matrices=False)[2][:rank].T
    y = x @ (top @ rng.standard_normal(rank)) + target_noise * rng.standard_normal(n)
    return x, y - y.mean()
