"""Float64 tensors with taped reverse-mode differentiation.

A ``Tensor`` wraps a row-major numpy array plus an optional gradient buffer.
Operations executed while a ``Tape`` is active record a backward rule; calling
``backward(loss)`` on a scalar replays the recorded rules once, in reverse
order, accumulating gradients into every reachable tensor that requires them.
The operation set is intentionally small: elementwise arithmetic, the dense
and convolution layers needed by 1-D/2-D conv nets, dropout, and reductions.
No general broadcasting; operands must share a shape, or one side must be a
plain Python scalar.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as _sfft
from scipy.special import expit as _expit

from .errors import ContractError, DimensionError, DomainError

__all__ = [
    "Tensor", "Tape", "backward", "constant",
    "add", "sub", "mul", "neg", "scale", "power",
    "abs_", "exp", "log", "relu", "leaky_relu", "sigmoid", "softplus",
    "softmax", "log_softmax", "cumsum",
    "asum", "mean", "l1_mean", "cross_entropy", "dot",
    "getitem", "reshape", "concat", "stack", "pad_last",
    "conv1d", "conv2d", "maxpool2d", "upsample1d", "dense", "dropout",
    "Adam", "zero_grads", "check_finite",
]

# Minimum kernel length at which stride-1 conv1d switches to the FFT path.
_FFT_KERNEL_MIN = 96

CHECK_FINITE = False


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _f64(data)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor) or not np.isscalar(other):
            raise ContractError("tensor division only supports scalar divisors")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


# --------------------------------------------------------------------------
# tape

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, so replaying the list backwards is
    a valid reverse topological order; each node is visited at most once.
    Exiting the context releases the recorded graph, so ``backward`` must be
    called inside the ``with`` block.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._pos: dict[int, int] = {}

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        # recorded tensors point back at the tape; dropping the nodes breaks
        # the cycle so each step's graph is freed by refcount, not gc timing
        self._nodes.clear()
        self._pos.clear()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], fn) -> None:
        self._pos[id(out)] = len(self._nodes)
        self._nodes.append((out, inputs, fn))
        out._tape = self

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise ContractError("backward() needs a scalar loss")
        idx = self._pos.get(id(loss))
        if idx is None:
            raise ContractError("loss was not produced on this tape")
        loss.grad[...] = 1.0
        needed = {id(loss)}
        for out, inputs, fn in reversed(self._nodes[: idx + 1]):
            if id(out) not in needed:
                continue
            for t in inputs:
                if t.requires_grad:
                    needed.add(id(t))
            fn(out.grad)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into every reachable grad buffer."""
    if not isinstance(loss, Tensor) or loss._tape is None:
        raise ContractError("loss does not belong to an active tape")
    loss._tape.backward(loss)


def _active() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], fn) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise DomainError("operation produced a non-finite value")
    tape = _active()
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor(data, requires_grad=True)
        tape._record(out, inputs, fn)
        return out
    return Tensor(data)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# --------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    if np.isscalar(b) and not isinstance(b, Tensor):
        a = _coerce(a)
        c = float(b)

        def back(g, a=a):
            if a.requires_grad:
                a.grad += g

        return _make(a.data + c, (a,), back)
    a, b = _coerce(a), _coerce(b)
    _same_shape(a, b, "add")

    def back(g, a=a, b=b):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad += g

    return _make(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    if np.isscalar(b) and not isinstance(b, Tensor):
        return add(a, -float(b))
    a, b = _coerce(a), _coerce(b)
    _same_shape(a, b, "sub")

    def back(g, a=a, b=b):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad -= g

    return _make(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    if np.isscalar(b) and not isinstance(b, Tensor):
        return scale(a, float(b))
    if np.isscalar(a) and not isinstance(a, Tensor):
        return scale(b, float(a))
    a, b = _coerce(a), _coerce(b)
    _same_shape(a, b, "mul")

    def back(g, a=a, b=b):
        if a.requires_grad:
            a.grad += g * b.data
        if b.requires_grad:
            b.grad += g * a.data

    return _make(a.data * b.data, (a, b), back)


def scale(a, c: float) -> Tensor:
    a = _coerce(a)
    c = float(c)

    def back(g, a=a):
        if a.requires_grad:
            a.grad += c * g

    return _make(a.data * c, (a,), back)


def neg(a) -> Tensor:
    return scale(a, -1.0)


def power(a, p: float) -> Tensor:
    a = _coerce(a)
    p = float(p)
    if p != int(p) and np.any(a.data < 0):
        raise DomainError("fractional power of a negative value")
    out = a.data ** p

    def back(g, a=a):
        if a.requires_grad:
            a.grad += g * p * a.data ** (p - 1.0)

    return _make(out, (a,), back)


def abs_(a) -> Tensor:
    a = _coerce(a)

    def back(g, a=a):
        if a.requires_grad:
            a.grad += g * np.sign(a.data)

    return _make(np.abs(a.data), (a,), back)


def exp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.data)

    def back(g, a=a, out=out):
        if a.requires_grad:
            a.grad += g * out

    return _make(out, (a,), back)


def log(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of a non-positive value")

    def back(g, a=a):
        if a.requires_grad:
            a.grad += g / a.data

    return _make(np.log(a.data), (a,), back)


def relu(a) -> Tensor:
    a = _coerce(a)
    mask = a.data > 0.0

    def back(g, a=a, mask=mask):
        if a.requires_grad:
            a.grad += g * mask

    return _make(np.where(mask, a.data, 0.0), (a,), back)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _coerce(a)
    slope = float(slope)
    mask = a.data > 0.0
    mult = np.where(mask, 1.0, slope)

    def back(g, a=a, mult=mult):
        if a.requires_grad:
            a.grad += g * mult

    return _make(a.data * mult, (a,), back)


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    out = _expit(a.data)

    def back(g, a=a, out=out):
        if a.requires_grad:
            a.grad += g * out * (1.0 - out)

    return _make(out, (a,), back)


def softplus(a) -> Tensor:
    a = _coerce(a)
    out = np.logaddexp(0.0, a.data)

    def back(g, a=a):
        if a.requires_grad:
            a.grad += g * _expit(a.data)

    return _make(out, (a,), back)


def softmax(a) -> Tensor:
    a = _coerce(a)
    if a.ndim != 1:
        raise DimensionError("softmax expects a 1-D tensor")
    z = a.data - a.data.max()
    e = np.exp(z)
    out = e / e.sum()

    def back(g, a=a, out=out):
        if a.requires_grad:
            a.grad += out * (g - np.dot(g, out))

    return _make(out, (a,), back)


def log_softmax(a) -> Tensor:
    a = _coerce(a)
    if a.ndim != 1:
        raise DimensionError("log_softmax expects a 1-D tensor")
    z = a.data - a.data.max()
    lse = np.log(np.exp(z).sum())
    out = z - lse
    sm = np.exp(out)

    def back(g, a=a, sm=sm):
        if a.requires_grad:
            a.grad += g - sm * g.sum()

    return _make(out, (a,), back)


def cumsum(a) -> Tensor:
    a = _coerce(a)
    if a.ndim != 1:
        raise DimensionError("cumsum expects a 1-D tensor")

    def back(g, a=a):
        if a.requires_grad:
            a.grad += np.cumsum(g[::-1])[::-1]

    return _make(np.cumsum(a.data), (a,), back)


# --------------------------------------------------------------------------
# reductions

def asum(a, axis: int | None = None) -> Tensor:
    a = _coerce(a)
    if axis is None:
        def back(g, a=a):
            if a.requires_grad:
                a.grad += g

        return _make(a.data.sum(), (a,), back)

    def back(g, a=a, axis=axis):
        if a.requires_grad:
            a.grad += np.expand_dims(g, axis)

    return _make(a.data.sum(axis=axis), (a,), back)


def mean(a) -> Tensor:
    a = _coerce(a)
    n = a.data.size
    if n == 0:
        raise DimensionError("mean of an empty tensor")

    def back(g, a=a, n=n):
        if a.requires_grad:
            a.grad += g / n

    return _make(a.data.mean(), (a,), back)


def l1_mean(a, b) -> Tensor:
    """Mean absolute difference of two same-shaped tensors."""
    a, b = _coerce(a), _coerce(b)
    _same_shape(a, b, "l1_mean")
    if a.data.size == 0:
        raise DimensionError("l1_mean of empty tensors")
    diff = a.data - b.data
    n = diff.size

    def back(g, a=a, b=b, diff=diff, n=n):
        s = g * np.sign(diff) / n
        if a.requires_grad:
            a.grad += s
        if b.requires_grad:
            b.grad -= s

    return _make(np.abs(diff).mean(), (a, b), back)


def cross_entropy(probs, onehot) -> Tensor:
    """Negative log-likelihood of a probability vector against a one-hot target."""
    probs = _coerce(probs)
    y = _f64(onehot)
    if probs.data.shape != y.shape:
        raise DimensionError("cross_entropy: probability and target shapes differ")
    support = y > 0.0
    if np.any(probs.data[support] <= 0.0):
        raise DomainError("cross_entropy: zero probability at the target class")

    def back(g, probs=probs, y=y, support=support):
        if probs.requires_grad:
            gp = np.zeros_like(probs.data)
            gp[support] = -y[support] / probs.data[support]
            probs.grad += g * gp

    return _make(-np.sum(y[support] * np.log(probs.data[support])), (probs,), back)


def dot(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _same_shape(a, b, "dot")

    def back(g, a=a, b=b):
        if a.requires_grad:
            a.grad += g * b.data
        if b.requires_grad:
            b.grad += g * a.data

    return _make(np.dot(a.data.ravel(), b.data.ravel()), (a, b), back)


# --------------------------------------------------------------------------
# shape ops

def getitem(a, idx) -> Tensor:
    a = _coerce(a)
    out = np.array(a.data[idx])

    def back(g, a=a, idx=idx):
        if a.requires_grad:
            a.grad[idx] += g

    return _make(out, (a,), back)


def reshape(a, shape) -> Tensor:
    a = _coerce(a)

    def back(g, a=a):
        if a.requires_grad:
            a.grad += g.reshape(a.data.shape)

    return _make(a.data.reshape(shape).copy(), (a,), back)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [_coerce(p) for p in parts]
    if not parts:
        raise DimensionError("concat of an empty sequence")
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def back(g, parts=parts, bounds=bounds, axis=axis):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p.grad += g[tuple(sl)]

    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), back)


def stack(parts, axis: int = 0) -> Tensor:
    parts = [_coerce(p) for p in parts]
    if not parts:
        raise DimensionError("stack of an empty sequence")

    def back(g, parts=parts, axis=axis):
        for i, p in enumerate(parts):
            if p.requires_grad:
                p.grad += np.take(g, i, axis=axis)

    return _make(np.stack([p.data for p in parts], axis=axis), tuple(parts), back)


def pad_last(a, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    a = _coerce(a)
    if left < 0 or right < 0:
        raise DimensionError("pad widths must be non-negative")
    width = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    n = a.data.shape[-1]

    def back(g, a=a, left=left, n=n):
        if a.requires_grad:
            a.grad += g[..., left:left + n]

    return _make(np.pad(a.data, width), (a,), back)


# --------------------------------------------------------------------------
# convolution and friends

def _same_pad_1d(t: int, k: int, stride: int) -> tuple[int, int, int]:
    out_len = -(-t // stride)
    total = max((out_len - 1) * stride + k - t, 0)
    right = total // 2
    left = total - right
    return left, right, out_len


def _corr_fft(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of [C_in, Tp] with [C_out, C_in, K] via FFT."""
    tp = xp.shape[1]
    k = w.shape[2]
    n = _sfft.next_fast_len(tp)
    xf = _sfft.rfft(xp, n=n)
    wf = _sfft.rfft(w, n=n)
    prod = np.einsum("if,oif->of", xf, wf.conj())
    full = _sfft.irfft(prod, n=n)
    return full[:, : tp - k + 1]


def conv1d(x, kernels, stride: int = 1, padding: str = "same") -> Tensor:
    """Multi-channel 1-D cross-correlation.

    ``x`` is [C_in, T], ``kernels`` is [C_out, C_in, K]; the result is
    [C_out, T'].  "same" padding zero-pads so that T' == ceil(T / stride),
    placing the extra tap on the left when the total padding is odd.
    """
    x, kernels = _coerce(x), _coerce(kernels)
    if x.ndim != 2 or kernels.ndim != 3:
        raise DimensionError("conv1d expects x [C_in, T] and kernels [C_out, C_in, K]")
    cin, t = x.data.shape
    cout, cin_k, k = kernels.data.shape
    if cin_k != cin:
        raise DimensionError(f"conv1d: kernel C_in {cin_k} != input C_in {cin}")
    if stride < 1:
        raise DomainError("conv1d: stride must be >= 1")
    if padding == "same":
        left, right, out_len = _same_pad_1d(t, k, stride)
    elif padding == "valid":
        if k > t:
            raise DimensionError(f"conv1d: kernel {k} longer than input {t}")
        left = right = 0
        out_len = (t - k) // stride + 1
    else:
        raise ContractError(f"conv1d: unknown padding {padding!r}")
    xp = np.pad(x.data, ((0, 0), (left, right)))
    tp = xp.shape[1]
    wd = kernels.data

    use_fft = stride == 1 and k >= _FFT_KERNEL_MIN
    if use_fft:
        out = _corr_fft(xp, wd)[:, :out_len]
    else:
        win = sliding_window_view(xp, k, axis=1)[:, ::stride][:, :out_len]
        col = win.transpose(1, 0, 2).reshape(out_len, cin * k)
        out = wd.reshape(cout, cin * k) @ col.T

    def back(g, x=x, kernels=kernels, xp=xp, wd=wd, stride=stride,
             left=left, t=t, k=k, out_len=out_len, use_fft=use_fft,
             cin=cin, cout=cout, tp=tp):
        if use_fft:
            n = _sfft.next_fast_len(tp)
            if kernels.requires_grad:
                xf = _sfft.rfft(xp, n=n)
                gf = _sfft.rfft(g, n=n)
                gw = _sfft.irfft(np.einsum("if,of->oif", xf, gf.conj()), n=n)
                kernels.grad += gw[:, :, :k]
            if x.requires_grad:
                gf = _sfft.rfft(g, n=n)
                wf = _sfft.rfft(wd, n=n)
                gxp = _sfft.irfft(np.einsum("of,oif->if", gf, wf), n=n)[:, :tp]
                x.grad += gxp[:, left:left + t]
            return
        win = sliding_window_view(xp, k, axis=1)[:, ::stride][:, :out_len]
        col = win.transpose(1, 0, 2).reshape(out_len, cin * k)
        if kernels.requires_grad:
            kernels.grad += (g @ col).reshape(cout, cin, k)
        if x.requires_grad:
            gw = (wd.reshape(cout, cin * k).T @ g).reshape(cin, k, out_len)
            gxp = np.zeros_like(xp)
            hi = (out_len - 1) * stride + 1
            for kk in range(k):
                gxp[:, kk:kk + hi:stride] += gw[:, kk, :]
            x.grad += gxp[:, left:left + t]

    return _make(out, (x, kernels), back)


def conv2d(x, kernels, stride: tuple[int, int] = (1, 1), padding: str = "same") -> Tensor:
    """Multi-channel 2-D cross-correlation over [C_in, H, W] planes."""
    x, kernels = _coerce(x), _coerce(kernels)
    if x.ndim != 3 or kernels.ndim != 4:
        raise DimensionError("conv2d expects x [C_in, H, W] and kernels [C_out, C_in, KH, KW]")
    cin, h, w = x.data.shape
    cout, cin_k, kh, kw = kernels.data.shape
    if cin_k != cin:
        raise DimensionError(f"conv2d: kernel C_in {cin_k} != input C_in {cin}")
    sh, sw = stride
    if sh < 1 or sw < 1:
        raise DomainError("conv2d: strides must be >= 1")
    if padding == "same":
        top, bot, out_h = _same_pad_1d(h, kh, sh)
        left, right, out_w = _same_pad_1d(w, kw, sw)
    elif padding == "valid":
        if kh > h or kw > w:
            raise DimensionError("conv2d: kernel larger than input")
        top = bot = left = right = 0
        out_h = (h - kh) // sh + 1
        out_w = (w - kw) // sw + 1
    else:
        raise ContractError(f"conv2d: unknown padding {padding!r}")
    xp = np.pad(x.data, ((0, 0), (top, bot), (left, right)))
    wd = kernels.data

    def im2col(arr):
        win = sliding_window_view(arr, (kh, kw), axis=(1, 2))
        win = win[:, ::sh, ::sw][:, :out_h, :out_w]
        return win.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, cin * kh * kw)

    col = im2col(xp)
    out = (wd.reshape(cout, cin * kh * kw) @ col.T).reshape(cout, out_h, out_w)

    def back(g, x=x, kernels=kernels, xp=xp, wd=wd, sh=sh, sw=sw,
             top=top, left=left, h=h, w=w, kh=kh, kw=kw,
             out_h=out_h, out_w=out_w, cin=cin, cout=cout):
        g2 = g.reshape(cout, out_h * out_w)
        col = im2col(xp)
        if kernels.requires_grad:
            kernels.grad += (g2 @ col).reshape(cout, cin, kh, kw)
        if x.requires_grad:
            gw = (wd.reshape(cout, cin * kh * kw).T @ g2)
            gw = gw.reshape(cin, kh, kw, out_h, out_w)
            gxp = np.zeros_like(xp)
            hh = (out_h - 1) * sh + 1
            ww = (out_w - 1) * sw + 1
            for ih in range(kh):
                for iw in range(kw):
                    gxp[:, ih:ih + hh:sh, iw:iw + ww:sw] += gw[:, ih, iw]
            x.grad += gxp[:, top:top + h, left:left + w]

    return _make(out, (x, kernels), back)


def maxpool2d(x, pool: tuple[int, int]) -> Tensor:
    """Non-overlapping max pooling; the window must tile the input exactly."""
    x = _coerce(x)
    if x.ndim != 3:
        raise DimensionError("maxpool2d expects [C, H, W]")
    ph, pw = pool
    c, h, w = x.data.shape
    if h % ph or w % pw:
        raise DimensionError(f"maxpool2d: window {pool} does not tile ({h}, {w})")
    oh, ow = h // ph, w // pw
    r = x.data.reshape(c, oh, ph, ow, pw).transpose(0, 1, 3, 2, 4).reshape(c, oh, ow, ph * pw)
    am = r.argmax(axis=3)
    out = np.take_along_axis(r, am[..., None], axis=3)[..., 0]

    def back(g, x=x, am=am, c=c, oh=oh, ow=ow, ph=ph, pw=pw):
        if x.requires_grad:
            z = np.zeros((c, oh, ow, ph * pw))
            np.put_along_axis(z, am[..., None], g[..., None], axis=3)
            z = z.reshape(c, oh, ow, ph, pw).transpose(0, 1, 3, 2, 4)
            x.grad += z.reshape(c, oh * ph, ow * pw)

    return _make(out, (x,), back)


def upsample1d(x, factor: int) -> Tensor:
    """Nearest-neighbour upsampling along the last axis of [C, T]."""
    x = _coerce(x)
    if x.ndim != 2:
        raise DimensionError("upsample1d expects [C, T]")
    if factor < 1:
        raise DomainError("upsample1d: factor must be >= 1")
    c, t = x.data.shape

    def back(g, x=x, c=c, t=t, factor=factor):
        if x.requires_grad:
            x.grad += g.reshape(c, t, factor).sum(axis=2)

    return _make(np.repeat(x.data, factor, axis=1), (x,), back)


def add_channelwise(x, b) -> Tensor:
    """Add a per-channel bias [C] to a [C, ...] tensor."""
    x, b = _coerce(x), _coerce(b)
    if b.ndim != 1 or x.ndim < 1 or x.data.shape[0] != b.data.shape[0]:
        raise DimensionError("add_channelwise expects x [C, ...] and b [C]")
    shape = (b.data.shape[0],) + (1,) * (x.ndim - 1)
    tail = tuple(range(1, x.ndim))

    def back(g, x=x, b=b, tail=tail):
        if x.requires_grad:
            x.grad += g
        if b.requires_grad:
            b.grad += g.sum(axis=tail) if tail else g

    return _make(x.data + b.data.reshape(shape), (x, b), back)


def dense(x, weight, bias) -> Tensor:
    """Affine layer: weight [U, F] @ x [F] + bias [U]."""
    x, weight, bias = _coerce(x), _coerce(weight), _coerce(bias)
    if x.ndim != 1 or weight.ndim != 2 or bias.ndim != 1:
        raise DimensionError("dense expects x [F], weight [U, F], bias [U]")
    u, f = weight.data.shape
    if x.data.shape[0] != f or bias.data.shape[0] != u:
        raise DimensionError("dense: incompatible shapes")

    def back(g, x=x, weight=weight, bias=bias):
        if weight.requires_grad:
            weight.grad += np.outer(g, x.data)
        if bias.requires_grad:
            bias.grad += g
        if x.requires_grad:
            x.grad += weight.data.T @ g

    return _make(weight.data @ x.data + bias.data, (x, weight, bias), back)


def dropout(x, rate: float, rng, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    x = _coerce(x)
    if not 0.0 <= rate < 1.0:
        raise DomainError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x
    gen = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    mask = (gen.random(x.data.shape) >= rate) / (1.0 - rate)

    def back(g, x=x, mask=mask):
        if x.requires_grad:
            x.grad += g * mask

    return _make(x.data * mask, (x,), back)


# --------------------------------------------------------------------------
# optimizer

class Adam:
    """Adam with bias correction; zeroes the grads it consumes on each step."""

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        for p in self.params:
            if not p.requires_grad:
                raise ContractError("Adam: every parameter must require gradients")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ContractError("Adam: parameter has no gradient buffer")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
            g[...] = 0.0

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        arrays = []
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            arrays.append((f"m{i}", m))
            arrays.append((f"v{i}", v))
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for i in range(len(self.params)):
            self.m[i][...] = arrays[f"m{i}"]
            self.v[i][...] = arrays[f"v{i}"]
        self.step_count = int(step_count)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def check_finite(t: Tensor, label: str = "tensor") -> None:
    if not np.all(np.isfinite(t.data)):
        raise DomainError(f"{label} contains non-finite values")
