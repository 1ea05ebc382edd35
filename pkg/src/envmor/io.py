"""Matrix Market text files (real ``array`` and ``coordinate`` formats).

Values are written with 17 significant digits, which round-trips every
IEEE double exactly.  Empty matrices (a zero dimension) are supported.
"""
from pathlib import Path

import numpy as np

from .errors import LoadError

__all__ = ['write_matrix', 'read_matrix', 'format_matrix', 'parse_matrix']

_HEADER = '%%MatrixMarket matrix array real general'


def _fmt(v):
    return format(float(v), '.17g')


def format_matrix(M):
    """Matrix Market ``array`` text of `M` (column-major, as the format requires)."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError('only 2-D arrays can be written')
    lines = [_HEADER, f'{M.shape[0]} {M.shape[1]}']
    lines.extend(_fmt(v) for v in M.T.ravel())
    return '\n'.join(lines) + '\n'


def write_matrix(path, M):
    Path(path).write_text(format_matrix(M))


def parse_matrix(text, source='<string>'):
    """Dense array from Matrix Market text (array or coordinate, real or integer)."""
    lines = text.splitlines()
    if not lines or not lines[0].lower().startswith('%%matrixmarket'):
        raise LoadError(f'{source}: missing Matrix Market header')
    head = lines[0].split()
    if len(head) < 5 or head[1].lower() != 'matrix':
        raise LoadError(f'{source}: unsupported header {lines[0]!r}')
    fmt, field, symm = head[2].lower(), head[3].lower(), head[4].lower()
    if field not in ('real', 'integer', 'double'):
        raise LoadError(f'{source}: field {field!r} not supported')
    if symm not in ('general', 'symmetric', 'skew-symmetric'):
        raise LoadError(f'{source}: symmetry {symm!r} not supported')
    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith('%')]
    if not body:
        raise LoadError(f'{source}: missing size line')
    try:
        size = [int(v) for v in body[0].split()]
        data = [ln.split() for ln in body[1:]]
        if fmt == 'array':
            rows, cols = size
            M = _parse_array(data, rows, cols, symm)
        elif fmt == 'coordinate':
            rows, cols, nnz = size
            M = _parse_coordinate(data, rows, cols, nnz, symm)
        else:
            raise LoadError(f'{source}: format {fmt!r} not supported')
    except (ValueError, IndexError) as exc:
        raise LoadError(f'{source}: malformed data ({exc})') from exc
    if not np.all(np.isfinite(M)):
        raise LoadError(f'{source}: non-finite entries')
    return M


def _parse_array(data, rows, cols, symm):
    vals = [float(tok) for row in data for tok in row]
    if symm == 'general':
        if len(vals) != rows * cols:
            raise ValueError(f'expected {rows * cols} values, got {len(vals)}')
        return np.array(vals, dtype=float).reshape((cols, rows)).T.copy()
    M = np.zeros((rows, cols))
    k = 0
    sign = -1.0 if symm == 'skew-symmetric' else 1.0
    for j in range(cols):
        for i in range(j + (symm == 'skew-symmetric'), rows):
            M[i, j] = vals[k]
            M[j, i] = sign * vals[k] if i != j else vals[k]
            k += 1
    return M


def _parse_coordinate(data, rows, cols, nnz, symm):
    if len(data) != nnz:
        raise ValueError(f'expected {nnz} entries, got {len(data)}')
    M = np.zeros((rows, cols))
    sign = -1.0 if symm == 'skew-symmetric' else 1.0
    for row in data:
        i, j, v = int(row[0]) - 1, int(row[1]) - 1, float(row[2])
        if not (0 <= i < rows and 0 <= j < cols):
            raise ValueError(f'index ({i + 1}, {j + 1}) outside {rows} x {cols}')
        M[i, j] += v
        if symm != 'general' and i != j:
            M[j, i] += sign * v
    return M


def read_matrix(path):
    path = Path(path)
    return parse_matrix(path.read_text(), str(path))
