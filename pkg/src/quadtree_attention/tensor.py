"""Minimal reverse-mode tensor core on top of numpy arrays.

Design points, all deliberate:

* A ``Tape`` is an ordered list of recorded operations. Backward replays the
  list in exact reverse recording order and accumulates gradients per node in
  a fixed order, so gradients are bit-reproducible for identical inputs.
* There is no broadcasting engine. Elementwise ops demand identical shapes;
  the only scalar case is ``scale`` (Python number times tensor). Row/column
  vector interactions go through dedicated ops (``add_bias``, ``mul_rows``,
  ``mul_colvec``) whose gradient rules are explicit.
* Ops never mutate their inputs and always allocate fresh output arrays.
  Leaf ``.data`` may be updated in place between tapes (optimizer steps).
* Two dtypes only: float32 (default) and float64 (verification mode).
"""

import numpy as np
from scipy.special import erf

from .errors import ContractError, DimensionError

LAYER_NORM_EPS = 1e-6

_ALLOWED_DTYPES = (np.float32, np.float64)


class Tape:
    """Recorded operations plus node bookkeeping for one backward pass."""

    def __init__(self):
        self._records = []
        self._num_nodes = 0

    def _register(self):
        node = self._num_nodes
        self._num_nodes += 1
        return node

    def _record(self, out_node, contribs):
        """contribs: list of (node, fn) where fn maps d(out) to d(input)."""
        def step(g, acc):
            for node, fn in contribs:
                delta = fn(g)
                if node in acc:
                    acc[node] = acc[node] + delta
                else:
                    acc[node] = delta
        self._records.append((out_node, step))

    def __len__(self):
        return len(self._records)


class Tensor:
    """A numpy array plus an optional handle into a differentiation tape."""

    __slots__ = ("data", "tape", "_node")

    def __init__(self, data, tape=None):
        arr = np.ascontiguousarray(data)
        if arr.dtype.type not in _ALLOWED_DTYPES:
            raise DimensionError(
                f"tensor dtype must be float32 or float64, got {arr.dtype}")
        self.data = arr
        self.tape = tape
        self._node = tape._register() if tape is not None else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def tracked(self):
        return self.tape is not None

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        """Same values, no tape."""
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = "tracked" if self.tracked else "const"
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, {tag})"

    # Thin conveniences over the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, dtype=np.float32, tape=None):
    """Build a tensor, converting to the requested dtype (float32 default)."""
    return Tensor(np.asarray(data, dtype=dtype), tape)


def zeros(shape, dtype=np.float32, tape=None):
    return Tensor(np.zeros(shape, dtype=dtype), tape)


def ones(shape, dtype=np.float32, tape=None):
    return Tensor(np.ones(shape, dtype=dtype), tape)


def eye(n, dtype=np.float32, tape=None):
    return Tensor(np.eye(n, dtype=dtype), tape)


def _common_tape(*tensors):
    tapes = [t.tape for t in tensors if isinstance(t, Tensor) and t.tape is not None]
    if not tapes:
        return None
    first = tapes[0]
    for other in tapes[1:]:
        if other is not first:
            raise ContractError("operands recorded on different tapes")
    return first


def _emit(data, contribs, tape):
    """Wrap an op result; record backward contributions of tracked inputs."""
    out = Tensor(data, tape)
    if tape is not None:
        tracked = [(t._node, fn) for t, fn in contribs if t.tape is not None]
        tape._record(out._node, tracked)
    return out


def _check_tensor(x, op):
    if not isinstance(x, Tensor):
        raise ContractError(f"{op} expects Tensor operands, got {type(x).__name__}")


def _check_same_dtype(a, b, op):
    if a.data.dtype != b.data.dtype:
        raise DimensionError(
            f"{op}: dtype mismatch {a.data.dtype} vs {b.data.dtype}")


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    """Elementwise sum; shapes must match exactly."""
    _check_tensor(a, "add"), _check_tensor(b, "add")
    _check_same_dtype(a, b, "add")
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add: shape {a.data.shape} vs {b.data.shape}")
    tape = _common_tape(a, b)
    return _emit(a.data + b.data, [(a, lambda g: g), (b, lambda g: g)], tape)


def sub(a, b):
    """Elementwise difference; shapes must match exactly."""
    _check_tensor(a, "sub"), _check_tensor(b, "sub")
    _check_same_dtype(a, b, "sub")
    if a.data.shape != b.data.shape:
        raise DimensionError(f"sub: shape {a.data.shape} vs {b.data.shape}")
    tape = _common_tape(a, b)
    return _emit(a.data - b.data, [(a, lambda g: g), (b, lambda g: -g)], tape)


def mul(a, b):
    """Elementwise (Hadamard) product; shapes must match exactly."""
    _check_tensor(a, "mul"), _check_tensor(b, "mul")
    _check_same_dtype(a, b, "mul")
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul: shape {a.data.shape} vs {b.data.shape}")
    tape = _common_tape(a, b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, [(a, lambda g: g * bd), (b, lambda g: g * ad)], tape)


def scale(x, s):
    """Multiply by a Python scalar (the only scalar-times-tensor case)."""
    _check_tensor(x, "scale")
    if isinstance(s, Tensor):
        raise ContractError("scale expects a Python number, not a Tensor")
    s = float(s)
    return _emit(x.data * np.dtype(x.data.dtype).type(s),
                 [(x, lambda g: g * np.dtype(g.dtype).type(s))], x.tape)


# ---------------------------------------------------------------------------
# linear algebra and shape


def matmul(a, b):
    """Rank-2 matrix product [m,k] @ [k,n] -> [m,n]."""
    _check_tensor(a, "matmul"), _check_tensor(b, "matmul")
    _check_same_dtype(a, b, "matmul")
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    tape = _common_tape(a, b)
    ad, bd = a.data, b.data
    return _emit(ad @ bd,
                 [(a, lambda g: g @ bd.T), (b, lambda g: ad.T @ g)], tape)


def transpose(x):
    """Rank-2 transpose (copying)."""
    _check_tensor(x, "transpose")
    if x.data.ndim != 2:
        raise DimensionError(f"transpose: rank-2 required, got shape {x.data.shape}")
    return _emit(x.data.T.copy(), [(x, lambda g: g.T.copy())], x.tape)


def reshape(x, shape):
    """Size-preserving reshape (copying)."""
    _check_tensor(x, "reshape")
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(
            f"reshape: cannot view {x.data.shape} as {shape}")
    old = x.data.shape
    return _emit(x.data.reshape(shape).copy(),
                 [(x, lambda g: g.reshape(old).copy())], x.tape)


# ---------------------------------------------------------------------------
# indexed access (indices are constants; gradients never flow through them)


def _check_indices(idx, n, op):
    idx = np.asarray(idx)
    if idx.ndim != 1 or idx.dtype.kind not in "iu":
        raise ContractError(f"{op}: indices must be a 1-d integer array")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ContractError(
            f"{op}: index out of range for axis of length {n}")
    return idx.astype(np.int64)


def gather_rows(x, indices):
    """out[i] = x[indices[i]] along axis 0; duplicates allowed."""
    _check_tensor(x, "gather_rows")
    if x.data.ndim < 1:
        raise DimensionError("gather_rows: rank >= 1 required")
    idx = _check_indices(indices, x.data.shape[0], "gather_rows")
    shape0 = x.data.shape

    def back(g):
        dx = np.zeros(shape0, dtype=g.dtype)
        np.add.at(dx, idx, g)
        return dx

    return _emit(x.data[idx].copy(), [(x, back)], x.tape)


def scatter_add_rows(rows, indices, num_rows):
    """Zero tensor of num_rows rows with ``rows`` added at ``indices``.

    Adjoint of gather_rows: duplicates in ``indices`` accumulate.
    """
    _check_tensor(rows, "scatter_add_rows")
    if rows.data.ndim < 1:
        raise DimensionError("scatter_add_rows: rank >= 1 required")
    num_rows = int(num_rows)
    idx = _check_indices(indices, num_rows, "scatter_add_rows")
    if idx.shape[0] != rows.data.shape[0]:
        raise DimensionError(
            f"scatter_add_rows: {rows.data.shape[0]} rows vs {idx.shape[0]} indices")
    out = np.zeros((num_rows,) + rows.data.shape[1:], dtype=rows.data.dtype)
    np.add.at(out, idx, rows.data)
    return _emit(out, [(rows, lambda g: g[idx].copy())], rows.tape)


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(x):
    """Sum of all elements -> scalar tensor (shape ())."""
    _check_tensor(x, "reduce_sum")
    shape0, dt = x.data.shape, x.data.dtype
    return _emit(np.asarray(x.data.sum(), dtype=dt),
                 [(x, lambda g: np.full(shape0, g, dtype=g.dtype))], x.tape)


def reduce_mean(x):
    """Mean of all elements -> scalar tensor (shape ())."""
    _check_tensor(x, "reduce_mean")
    if x.data.size == 0:
        raise DimensionError("reduce_mean: empty tensor")
    shape0, n, dt = x.data.shape, x.data.size, x.data.dtype
    return _emit(np.asarray(x.data.mean(dtype=np.float64), dtype=dt),
                 [(x, lambda g: np.full(shape0, g / n, dtype=g.dtype))], x.tape)


# ---------------------------------------------------------------------------
# row-structured ops for [tokens, channels] layouts


def add_bias(x, b):
    """Add a length-C vector to every row of an [N, C] tensor."""
    _check_tensor(x, "add_bias"), _check_tensor(b, "add_bias")
    _check_same_dtype(x, b, "add_bias")
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise DimensionError(
            f"add_bias: shape {x.data.shape} with bias {b.data.shape}")
    tape = _common_tape(x, b)
    return _emit(x.data + b.data[None, :],
                 [(x, lambda g: g), (b, lambda g: g.sum(axis=0))], tape)


def mul_rows(x, v):
    """Multiply every row of an [N, C] tensor elementwise by a length-C vector."""
    _check_tensor(x, "mul_rows"), _check_tensor(v, "mul_rows")
    _check_same_dtype(x, v, "mul_rows")
    if x.data.ndim != 2 or v.data.shape != (x.data.shape[1],):
        raise DimensionError(
            f"mul_rows: shape {x.data.shape} with vector {v.data.shape}")
    tape = _common_tape(x, v)
    xd, vd = x.data, v.data
    return _emit(xd * vd[None, :],
                 [(x, lambda g: g * vd[None, :]),
                  (v, lambda g: (g * xd).sum(axis=0))], tape)


def mul_colvec(x, c):
    """Scale row i of an [N, C] tensor by the scalar c[i, 0]."""
    _check_tensor(x, "mul_colvec"), _check_tensor(c, "mul_colvec")
    _check_same_dtype(x, c, "mul_colvec")
    if x.data.ndim != 2 or c.data.shape != (x.data.shape[0], 1):
        raise DimensionError(
            f"mul_colvec: shape {x.data.shape} with column {c.data.shape}")
    tape = _common_tape(x, c)
    xd, cd = x.data, c.data
    return _emit(xd * cd,
                 [(x, lambda g: g * cd),
                  (c, lambda g: (g * xd).sum(axis=1, keepdims=True))], tape)


# ---------------------------------------------------------------------------
# nonlinearities


def softmax_rows(x):
    """Row-wise softmax of an [N, M] tensor, stabilized by max subtraction."""
    _check_tensor(x, "softmax_rows")
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_rows: rank-2 required, got {x.data.shape}")
    if x.data.shape[1] == 0:
        raise DimensionError("softmax_rows: empty rows")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return y * (g - dot)

    return _emit(y, [(x, back)], x.tape)


def gelu(x):
    """Exact (erf-based) GELU, elementwise."""
    _check_tensor(x, "gelu")
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / np.sqrt(2.0)))
    out = (xd * cdf).astype(xd.dtype)

    def back(g):
        pdf = np.exp(-0.5 * xd * xd) / np.sqrt(2.0 * np.pi)
        return (g * (cdf + xd * pdf)).astype(g.dtype)

    return _emit(out, [(x, back)], x.tape)


def layer_norm(x, gamma, beta):
    """Per-row (per-token) normalization over channels with affine params.

    Uses biased variance and a 1e-6 variance floor inside the square root, so
    constant rows map to beta instead of producing non-finite values.
    """
    _check_tensor(x, "layer_norm")
    _check_tensor(gamma, "layer_norm"), _check_tensor(beta, "layer_norm")
    _check_same_dtype(x, gamma, "layer_norm")
    _check_same_dtype(x, beta, "layer_norm")
    if x.data.ndim != 2:
        raise DimensionError(f"layer_norm: rank-2 required, got {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(
            f"layer_norm: affine shapes {gamma.data.shape}/{beta.data.shape} "
            f"for {c} channels")
    tape = _common_tape(x, gamma, beta)
    xd = x.data
    mu = xd.mean(axis=1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.dtype(xd.dtype).type(LAYER_NORM_EPS))
    xhat = xc * inv
    gd = gamma.data

    def back_x(g):
        dxhat = g * gd[None, :]
        term = dxhat - dxhat.mean(axis=1, keepdims=True) \
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        return inv * term

    return _emit(xhat * gd[None, :] + beta.data[None, :],
                 [(x, back_x),
                  (gamma, lambda g: (g * xhat).sum(axis=0)),
                  (beta, lambda g: g.sum(axis=0))], tape)


# ---------------------------------------------------------------------------
# backward


class Gradients:
    """Gradient lookup for one backward pass over one tape."""

    def __init__(self, tape, table):
        self._tape = tape
        self._table = table

    def of(self, t):
        """d(root)/d(t); zero for tracked tensors the root never touched."""
        if not isinstance(t, Tensor) or t.tape is not self._tape:
            raise ContractError("gradient queried for a tensor from another tape")
        got = self._table.get(t._node)
        if got is None:
            return np.zeros_like(t.data)
        return got


def backward(tape, root):
    """Reverse sweep from a tracked scalar root; returns a Gradients table."""
    if not isinstance(root, Tensor) or root.tape is not tape:
        raise ContractError("backward root must be recorded on the given tape")
    if root.data.size != 1:
        raise ContractError(
            f"backward root must be scalar, got shape {root.data.shape}")
    acc = {root._node: np.ones_like(root.data)}
    for out_node, step in reversed(tape._records):
        g = acc.get(out_node)
        if g is None:
            continue
        step(g, acc)
    return Gradients(tape, acc)
