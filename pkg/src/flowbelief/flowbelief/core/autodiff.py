# Copyright 2026 The flowbelief Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reverse-mode automatic differentiation over 64-bit numpy arrays.

Operations run eagerly. While a `Tape` is active, every operation whose inputs
require gradients appends a node to it; `backward` walks the nodes in strict
reverse append order. Outside a tape operations only compute values, which is
how rollouts and evaluation run.

Typical use:

  with autodiff.Tape():
    loss = autodiff.sum(autodiff.square(autodiff.matmul(x, w)))
  grads = autodiff.backward(loss, wrt=[w])
"""

import contextvars
import dataclasses
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy import special


class Error(Exception):
  """Base error for the autodiff module."""


class ShapeError(Error):
  """Raised when input shapes do not conform to an operation's rule."""

  def __init__(self, kind: str, shapes: Sequence[tuple[int, ...]], detail=""):
    self.kind = kind
    self.shapes = tuple(tuple(s) for s in shapes)
    message = f"{kind}: incompatible shapes {list(self.shapes)}"
    if detail:
      message = f"{message} ({detail})"
    super().__init__(message)


class NumericError(Error):
  """Raised when an operation produces NaN or Inf."""


class GradientError(Error):
  """Raised when backward is called on an invalid loss."""


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[Any]]

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "flowbelief_active_tape", default=None
)


class Tensor:
  """A dense float64 array that may participate in a tape.

  Attributes:
    value: The underlying row-major float64 array.
    requires_grad: Whether gradients are tracked for this tensor.
    node: The tape node that produced this tensor, None for leaves.
    name: Optional label used in error messages and checkpoints.
  """

  __slots__ = ("value", "requires_grad", "node", "name")
  # numpy defers mixed arithmetic to the Tensor operators.
  __array_ufunc__ = None

  def __init__(
      self,
      value: Any,
      requires_grad: bool = False,
      name: Optional[str] = None,
  ):
    self.value = np.array(value, dtype=np.float64)
    self.requires_grad = requires_grad
    self.node: Optional["Node"] = None
    self.name = name

  @property
  def shape(self) -> tuple[int, ...]:
    return self.value.shape

  @property
  def ndim(self) -> int:
    return self.value.ndim

  @property
  def node_id(self) -> Optional[int]:
    return None if self.node is None else self.node.node_id

  def numpy(self) -> np.ndarray:
    """Returns a copy of the values."""
    return self.value.copy()

  def item(self) -> float:
    return float(self.value)

  def __repr__(self) -> str:
    label = f" name={self.name!r}" if self.name else ""
    return f"Tensor(shape={self.shape}{label}, grad={self.requires_grad})"

  def __add__(self, other: ArrayLike) -> "Tensor":
    return add(self, other)

  def __radd__(self, other: ArrayLike) -> "Tensor":
    return add(other, self)

  def __sub__(self, other: ArrayLike) -> "Tensor":
    return sub(self, other)

  def __rsub__(self, other: ArrayLike) -> "Tensor":
    return sub(other, self)

  def __mul__(self, other: ArrayLike) -> "Tensor":
    return mul(self, other)

  def __rmul__(self, other: ArrayLike) -> "Tensor":
    return mul(other, self)

  def __truediv__(self, other: ArrayLike) -> "Tensor":
    return div(self, other)

  def __rtruediv__(self, other: ArrayLike) -> "Tensor":
    return div(other, self)

  def __neg__(self) -> "Tensor":
    return neg(self)

  def __matmul__(self, other: ArrayLike) -> "Tensor":
    return matmul(self, other)

  def __getitem__(self, key: Any) -> "Tensor":
    return slice_(self, key)

  def sum(self, axis: Optional[int] = None) -> "Tensor":
    return sum(self, axis=axis)

  def mean(self, axis: Optional[int] = None) -> "Tensor":
    return mean(self, axis=axis)

  def reshape(self, *shape: int) -> "Tensor":
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
      shape = tuple(shape[0])
    return reshape(self, shape)


@dataclasses.dataclass(eq=False)
class Node:
  """One recorded operation on a tape.

  Attributes:
    node_id: Position in the tape's append order.
    kind: The operation kind.
    parents: Input tensors, in argument order.
    output: The tensor produced by the operation.
    vjp: Maps the output cotangent to one cotangent per parent.
    tape: The tape the node was appended to.
  """

  node_id: int
  kind: str
  parents: tuple[Tensor, ...]
  output: Tensor
  vjp: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]
  tape: "Tape"


class Tape:
  """Append-only record of operations for one differentiation pass."""

  def __init__(self):
    self.nodes: list[Node] = []
    self._token: Optional[contextvars.Token] = None

  def __enter__(self) -> "Tape":
    self._token = _ACTIVE_TAPE.set(self)
    return self

  def __exit__(self, *exc_info) -> None:
    _ACTIVE_TAPE.reset(self._token)
    self._token = None

  def __len__(self) -> int:
    return len(self.nodes)

  def record(
      self,
      kind: str,
      parents: tuple[Tensor, ...],
      output: Tensor,
      vjp: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]],
  ) -> Node:
    node = Node(len(self.nodes), kind, parents, output, vjp, self)
    self.nodes.append(node)
    output.node = node
    return node


def active_tape() -> Optional[Tape]:
  """Returns the tape currently recording, if any."""
  return _ACTIVE_TAPE.get()


def as_tensor(value: ArrayLike) -> Tensor:
  """Wraps constants into non-differentiable tensors."""
  if isinstance(value, Tensor):
    return value
  return Tensor(value)


def _broadcast_shape(
    kind: str, a: tuple[int, ...], b: tuple[int, ...]
) -> tuple[int, ...]:
  """Resolves trailing-dimension and scalar broadcasting."""
  if a == b:
    return a
  if not a:
    return b
  if not b:
    return a
  if len(a) < len(b) and b[len(b) - len(a):] == a:
    return b
  if len(b) < len(a) and a[len(a) - len(b):] == b:
    return a
  raise ShapeError(kind, [a, b], "only trailing-dimension broadcast")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
  if grad.shape == shape:
    return grad
  if not shape:
    return np.asarray(grad.sum())
  leading = grad.ndim - len(shape)
  return grad.sum(axis=tuple(range(leading)))


@dataclasses.dataclass(frozen=True)
class _Rule:
  forward: Callable[..., tuple[np.ndarray, Any]]
  vjp: Callable[..., tuple[Optional[np.ndarray], ...]]


_RULES: dict[str, _Rule] = {}


def _rule(kind: str):
  def register(cls):
    _RULES[kind] = _Rule(forward=cls.forward, vjp=cls.vjp)
    return cls

  return register


def _binary_shapes(kind, a, b):
  _broadcast_shape(kind, a.shape, b.shape)


@_rule("add")
class _Add:

  @staticmethod
  def forward(a, b):
    _binary_shapes("add", a, b)
    return a + b, None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return g, g


@_rule("sub")
class _Sub:

  @staticmethod
  def forward(a, b):
    _binary_shapes("sub", a, b)
    return a - b, None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return g, -g


@_rule("mul")
class _Mul:

  @staticmethod
  def forward(a, b):
    _binary_shapes("mul", a, b)
    return a * b, None

  @staticmethod
  def vjp(g, inputs, out, saved):
    a, b = inputs
    return g * b, g * a


@_rule("div")
class _Div:

  @staticmethod
  def forward(a, b):
    _binary_shapes("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
      return a / b, None

  @staticmethod
  def vjp(g, inputs, out, saved):
    a, b = inputs
    return g / b, -g * a / (b * b)


@_rule("neg")
class _Neg:

  @staticmethod
  def forward(x):
    return -x, None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (-g,)


@_rule("matmul")
class _Matmul:

  @staticmethod
  def forward(a, b):
    if a.ndim not in (1, 2) or b.ndim != 2 or a.shape[-1] != b.shape[0]:
      raise ShapeError("matmul", [a.shape, b.shape])
    return a @ b, None

  @staticmethod
  def vjp(g, inputs, out, saved):
    a, b = inputs
    grad_a = g @ b.T
    grad_b = np.outer(a, g) if a.ndim == 1 else a.T @ g
    return grad_a, grad_b


@_rule("broadcast")
class _Broadcast:

  @staticmethod
  def forward(x, shape):
    shape = tuple(shape)
    if _broadcast_shape("broadcast", x.shape, shape) != shape:
      raise ShapeError("broadcast", [x.shape, shape])
    return np.broadcast_to(x, shape).copy(), None

  @staticmethod
  def vjp(g, inputs, out, saved, shape=None):
    return (g,)


@_rule("concat")
class _Concat:

  @staticmethod
  def forward(*arrays, axis=-1):
    ndims = {a.ndim for a in arrays}
    if len(ndims) != 1 or not arrays:
      raise ShapeError("concat", [a.shape for a in arrays])
    ndim = ndims.pop()
    ax = axis % ndim if ndim else 0
    rest = {a.shape[:ax] + a.shape[ax + 1:] for a in arrays}
    if len(rest) != 1:
      raise ShapeError("concat", [a.shape for a in arrays])
    sizes = [a.shape[ax] for a in arrays]
    return np.concatenate(arrays, axis=ax), (ax, sizes)

  @staticmethod
  def vjp(g, inputs, out, saved):
    ax, sizes = saved
    bounds = np.cumsum(sizes)[:-1]
    return tuple(np.split(g, bounds, axis=ax))


@_rule("slice")
class _Slice:

  @staticmethod
  def forward(x, key):
    try:
      out = x[key]
    except IndexError as e:
      raise ShapeError("slice", [x.shape], str(e)) from e
    return np.array(out, dtype=np.float64), None

  @staticmethod
  def vjp(g, inputs, out, saved, key=None):
    (x,) = inputs
    grad = np.zeros_like(x)
    if _is_basic_index(key):
      grad[key] += g
    else:
      np.add.at(grad, key, g)
    return (grad,)


def _is_basic_index(key: Any) -> bool:
  parts = key if isinstance(key, tuple) else (key,)
  return all(
      p is Ellipsis or p is None or isinstance(p, (slice, int, np.integer))
      for p in parts
  )


@_rule("sum")
class _Sum:

  @staticmethod
  def forward(x, axis=None):
    if axis is not None and not -x.ndim <= axis < x.ndim:
      raise ShapeError("sum", [x.shape], f"axis {axis}")
    return np.asarray(x.sum(axis=axis)), None

  @staticmethod
  def vjp(g, inputs, out, saved, axis=None):
    (x,) = inputs
    if axis is not None:
      g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, x.shape).copy(),)


@_rule("mean")
class _Mean:

  @staticmethod
  def forward(x, axis=None):
    if x.size == 0:
      raise ShapeError("mean", [x.shape], "empty input")
    if axis is not None and not -x.ndim <= axis < x.ndim:
      raise ShapeError("mean", [x.shape], f"axis {axis}")
    return np.asarray(x.mean(axis=axis)), None

  @staticmethod
  def vjp(g, inputs, out, saved, axis=None):
    (x,) = inputs
    count = x.size if axis is None else x.shape[axis]
    if axis is not None:
      g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, x.shape) / count,)


@_rule("tanh")
class _Tanh:

  @staticmethod
  def forward(x):
    return np.tanh(x), None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (g * (1.0 - out * out),)


@_rule("sigmoid")
class _Sigmoid:

  @staticmethod
  def forward(x):
    return special.expit(x), None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (g * out * (1.0 - out),)


@_rule("exp")
class _Exp:

  @staticmethod
  def forward(x):
    with np.errstate(over="ignore"):
      return np.exp(x), None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (g * out,)


@_rule("log")
class _Log:

  @staticmethod
  def forward(x):
    with np.errstate(divide="ignore", invalid="ignore"):
      return np.log(x), None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (g / inputs[0],)


@_rule("softplus")
class _Softplus:

  @staticmethod
  def forward(x):
    return np.logaddexp(0.0, x), None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (g * special.expit(inputs[0]),)


@_rule("square")
class _Square:

  @staticmethod
  def forward(x):
    return x * x, None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (2.0 * g * inputs[0],)


@_rule("relu")
class _Relu:

  @staticmethod
  def forward(x):
    return np.maximum(x, 0.0), None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (g * (inputs[0] > 0.0),)


@_rule("abs")
class _Abs:

  @staticmethod
  def forward(x):
    return np.abs(x), None

  @staticmethod
  def vjp(g, inputs, out, saved):
    return (g * np.sign(inputs[0]),)


@_rule("maximum")
class _Maximum:
  """Elementwise max against a constant floor; zero gradient below it."""

  @staticmethod
  def forward(x, floor=0.0):
    return np.maximum(x, floor), None

  @staticmethod
  def vjp(g, inputs, out, saved, floor=0.0):
    return (g * (inputs[0] > floor),)


@_rule("reshape")
class _Reshape:

  @staticmethod
  def forward(x, shape):
    try:
      return x.reshape(shape), None
    except ValueError as e:
      raise ShapeError("reshape", [x.shape, tuple(shape)]) from e

  @staticmethod
  def vjp(g, inputs, out, saved, shape=None):
    return (g.reshape(inputs[0].shape),)


@_rule("transpose")
class _Transpose:

  @staticmethod
  def forward(x, axes=None):
    return np.transpose(x, axes), None

  @staticmethod
  def vjp(g, inputs, out, saved, axes=None):
    if axes is None:
      return (np.transpose(g),)
    return (np.transpose(g, np.argsort(axes)),)


@_rule("solve_triangular")
class _SolveTriangular:
  """Solves `a @ x_i = b_i` for every row `b_i` of `b`."""

  @staticmethod
  def forward(a, b, lower=True, unit_diagonal=False):
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape[-1] != a.shape[0]:
      raise ShapeError("solve_triangular", [a.shape, b.shape])
    if b.ndim not in (1, 2):
      raise ShapeError("solve_triangular", [a.shape, b.shape])
    x = linalg.solve_triangular(
        a, b.T, lower=lower, unit_diagonal=unit_diagonal
    ).T
    return np.ascontiguousarray(x), None

  @staticmethod
  def vjp(g, inputs, out, saved, lower=True, unit_diagonal=False):
    a, _ = inputs
    grad_b = linalg.solve_triangular(
        a.T, g.T, lower=not lower, unit_diagonal=unit_diagonal
    ).T
    if grad_b.ndim == 1:
      grad_a = -np.outer(grad_b, out)
    else:
      grad_a = -(grad_b.T @ out)
    offset = -1 if unit_diagonal else 0
    if lower:
      grad_a = np.tril(grad_a, offset)
    else:
      grad_a = np.triu(grad_a, -offset)
    return grad_a, np.ascontiguousarray(grad_b)


@_rule("conv2d")
class _Conv2d:
  """Valid strided cross-correlation, NCHW input and OIHW kernel."""

  @staticmethod
  def forward(x, w, stride=1):
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
      raise ShapeError("conv2d", [x.shape, w.shape])
    kh, kw = w.shape[2], w.shape[3]
    if x.shape[2] < kh or x.shape[3] < kw:
      raise ShapeError("conv2d", [x.shape, w.shape], "kernel exceeds input")
    windows = np.lib.stride_tricks.sliding_window_view(
        x, (kh, kw), axis=(2, 3)
    )[:, :, ::stride, ::stride]
    out = np.einsum("bchwuv,ocuv->bohw", windows, w, optimize=True)
    return out, windows

  @staticmethod
  def vjp(g, inputs, out, saved, stride=1):
    x, w = inputs
    windows = saved
    grad_w = np.einsum("bohw,bchwuv->ocuv", g, windows, optimize=True)
    grad_x = np.zeros_like(x)
    out_h, out_w = g.shape[2], g.shape[3]
    for u in range(w.shape[2]):
      for v in range(w.shape[3]):
        grad_x[
            :,
            :,
            u : u + stride * (out_h - 1) + 1 : stride,
            v : v + stride * (out_w - 1) + 1 : stride,
        ] += np.einsum("bohw,oc->bchw", g, w[:, :, u, v])
    return grad_x, grad_w


def forward_op(kind: str, *inputs: ArrayLike, **attrs: Any) -> Tensor:
  """Runs one operation and records it on the active tape.

  Args:
    kind: Operation kind, one of the registered rules.
    *inputs: Tensors or constants.
    **attrs: Non-tensor attributes of the operation (axis, shape, ...).

  Returns:
    The output tensor.

  Raises:
    ShapeError: If input shapes do not conform to the kind's rule.
    NumericError: If the output contains NaN or Inf.
    ValueError: If the kind is unknown.
  """
  rule = _RULES.get(kind)
  if rule is None:
    raise ValueError(f"Unknown operation kind: {kind!r}")
  tensors = tuple(as_tensor(x) for x in inputs)
  values = [t.value for t in tensors]
  out, saved = rule.forward(*values, **attrs)
  out = np.asarray(out, dtype=np.float64)
  if not np.all(np.isfinite(out)):
    raise NumericError(
        f"{kind} produced non-finite values for shapes"
        f" {[v.shape for v in values]}"
    )
  tape = _ACTIVE_TAPE.get()
  tracked = tape is not None and any(t.requires_grad for t in tensors)
  result = Tensor(out, requires_grad=tracked)
  if tracked:

    def vjp(g, _values=values, _out=out, _saved=saved):
      return rule.vjp(g, _values, _out, _saved, **_vjp_attrs(kind, attrs))

    tape.record(kind, tensors, result, vjp)
  return result


def _vjp_attrs(kind: str, attrs: Mapping[str, Any]) -> dict[str, Any]:
  if kind == "concat":
    return {}
  return dict(attrs)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
  return forward_op("add", a, b)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
  return forward_op("sub", a, b)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
  return forward_op("mul", a, b)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
  return forward_op("div", a, b)


def neg(x: ArrayLike) -> Tensor:
  return forward_op("neg", x)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
  return forward_op("matmul", a, b)


def broadcast(x: ArrayLike, shape: Sequence[int]) -> Tensor:
  return forward_op("broadcast", x, shape=tuple(shape))


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
  return forward_op("concat", *tensors, axis=axis)


def slice_(x: ArrayLike, key: Any) -> Tensor:
  return forward_op("slice", x, key=key)


def sum(x: ArrayLike, axis: Optional[int] = None) -> Tensor:  # pylint: disable=redefined-builtin
  return forward_op("sum", x, axis=axis)


def mean(x: ArrayLike, axis: Optional[int] = None) -> Tensor:
  return forward_op("mean", x, axis=axis)


def tanh(x: ArrayLike) -> Tensor:
  return forward_op("tanh", x)


def sigmoid(x: ArrayLike) -> Tensor:
  return forward_op("sigmoid", x)


def exp(x: ArrayLike) -> Tensor:
  return forward_op("exp", x)


def log(x: ArrayLike) -> Tensor:
  return forward_op("log", x)


def softplus(x: ArrayLike) -> Tensor:
  return forward_op("softplus", x)


def square(x: ArrayLike) -> Tensor:
  return forward_op("square", x)


def relu(x: ArrayLike) -> Tensor:
  return forward_op("relu", x)


def abs(x: ArrayLike) -> Tensor:  # pylint: disable=redefined-builtin
  return forward_op("abs", x)


def maximum(x: ArrayLike, floor: float) -> Tensor:
  return forward_op("maximum", x, floor=float(floor))


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
  return forward_op("reshape", x, shape=tuple(shape))


def transpose(x: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
  return forward_op(
      "transpose", x, axes=None if axes is None else tuple(axes)
  )


def solve_triangular(
    a: ArrayLike, b: ArrayLike, lower: bool, unit_diagonal: bool = False
) -> Tensor:
  return forward_op(
      "solve_triangular", a, b, lower=lower, unit_diagonal=unit_diagonal
  )


def conv2d(x: ArrayLike, w: ArrayLike, stride: int = 1) -> Tensor:
  return forward_op("conv2d", x, w, stride=stride)


def stop_gradient(x: ArrayLike) -> Tensor:
  """Returns a value-identical constant; no gradient reaches `x`."""
  return Tensor(as_tensor(x).value.copy())


def backward(
    loss: Tensor, wrt: Optional[Iterable[Any]] = None
) -> dict[Any, np.ndarray]:
  """Computes d(loss)/d(leaf) for the leaves of the loss's tape.

  Args:
    loss: A scalar tensor.
    wrt: Optional tensors or parameters (anything with a `.tensor` leaf) to
      report. Unreachable entries receive zeros. When omitted, every reached
      leaf is reported.

  Returns:
    Mapping from each requested item (or reached leaf tensor) to its gradient.

  Raises:
    GradientError: If the loss is not a scalar.
  """
  if loss.shape != ():
    raise GradientError(f"backward needs a scalar loss, got {loss.shape}")
  slots: dict[int, tuple[Tensor, np.ndarray]] = {}
  if loss.requires_grad:
    slots[id(loss)] = (loss, np.ones((), dtype=np.float64))
  if loss.node is not None:
    tape_nodes = loss.node.tape.nodes[: loss.node.node_id + 1]
    for node in reversed(tape_nodes):
      entry = slots.pop(id(node.output), None)
      if entry is None:
        continue
      parent_grads = node.vjp(entry[1])
      for parent, grad in zip(node.parents, parent_grads):
        if grad is None or not parent.requires_grad:
          continue
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), parent.shape)
        previous = slots.get(id(parent))
        if previous is None:
          slots[id(parent)] = (parent, grad)
        else:
          slots[id(parent)] = (parent, previous[1] + grad)
  leaves = {t: g for t, g in slots.values() if t.node is None}
  if wrt is None:
    return leaves
  result = {}
  for item in wrt:
    leaf = item.tensor if hasattr(item, "tensor") else item
    grad = leaves.get(leaf)
    result[item] = (
        np.zeros_like(leaf.value) if grad is None else np.array(grad)
    )
  return result


def numerical_gradient(
    fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
  """Central finite differences of a scalar function at `x`."""
  x = np.array(x, dtype=np.float64)
  grad = np.zeros_like(x)
  it = np.nditer(x, flags=["multi_index"])
  for _ in it:
    idx = it.multi_index
    original = x[idx]
    x[idx] = original + h
    upper = fn(x)
    x[idx] = original - h
    lower = fn(x)
    x[idx] = original
    grad[idx] = (upper - lower) / (2.0 * h)
  return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
  """Norm-wise relative error used by gradient checks."""
  diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
  scale = max(
      np.linalg.norm(np.ravel(analytic)), np.linalg.norm(np.ravel(numeric))
  )
  if scale < 1e-12:
    return float(diff)
  return float(diff / scale)
