"""
Asymmetric uniform fake quantization.

    s = (u − l) / (2ⁿ − 1)
    b = l / s + 2^{n−1}
    q = clip(round(x / s − b), −2^{n−1}, 2^{n−1} − 1)
    x_fake = (q + b) · s

round 为 half-away-from-zero；反向传播为 STE：[l, u] 内梯度为 1，外部为 0。
权重 per-channel（沿输出通道 axis 0），激活 per-layer。
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from acq_core.autodiff import ops
from acq_core.autodiff.ops import round_half_away
from acq_core.autodiff.tensor import Tensor
from acq_core.nn.graph import LayerGraph, quantizable_layers
from acq_core.utils.logger import debug

PER_LAYER = "per-layer"
PER_CHANNEL = "per-channel"

_BITS_RE = re.compile(r"^(\d+)w(\d+)a$")


def check_bits(n: int, what: str = "bits") -> int:
    n = int(n)
    if not 2 <= n <= 8:
        raise ValueError(f"{what} must be in [2, 8], got {n}")
    return n


def parse_bits(text: str) -> Tuple[int, int]:
    """'4w4a' → (4, 4)."""
    m = _BITS_RE.match(text.strip().lower())
    if not m:
        raise ValueError(f"bit-width string must look like '4w4a', got {text!r}")
    return check_bits(int(m.group(1)), "n_w"), check_bits(int(m.group(2)), "n_a")


@dataclass
class QuantizerState:
    """Quantization parameters of one site (a weight or an activation input)."""
    site: str
    n: int
    granularity: str = PER_LAYER
    observer_min: Optional[np.ndarray] = None
    observer_max: Optional[np.ndarray] = None
    l: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    frozen: bool = False

    def __post_init__(self):
        check_bits(self.n, f"{self.site}: n")
        if self.granularity not in (PER_LAYER, PER_CHANNEL):
            raise ValueError(f"{self.site}: unknown granularity {self.granularity!r}")

    @property
    def qmin(self) -> int:
        return -(2 ** (self.n - 1))

    @property
    def qmax(self) -> int:
        return 2 ** (self.n - 1) - 1

    @property
    def observed(self) -> bool:
        return self.observer_min is not None

    def to_dict(self) -> Dict[str, Any]:
        """Scalars only; arrays travel separately (see ``arrays``)."""
        return {"site": self.site, "n": self.n, "granularity": self.granularity, "frozen": self.frozen}

    def arrays(self) -> Dict[str, np.ndarray]:
        out = {}
        for key in ("observer_min", "observer_max", "l", "u"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_parts(cls, meta: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> "QuantizerState":
        state = cls(site=meta["site"], n=int(meta["n"]), granularity=meta["granularity"])
        state.observer_min = arrays.get("observer_min")
        state.observer_max = arrays.get("observer_max")
        if meta.get("frozen"):
            _set_bounds(state, arrays["l"], arrays["u"])
        return state


def _reduce_axes(x: np.ndarray, granularity: str) -> Tuple[int, ...]:
    if granularity == PER_CHANNEL:
        return tuple(range(1, x.ndim))
    return tuple(range(x.ndim))


def observe(x: Tensor, state: QuantizerState) -> None:
    """Fold x into the running min / max (per channel along axis 0 when per-channel)."""
    if state.frozen:
        raise RuntimeError(f"{state.site}: cannot observe a frozen quantizer")
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if data.size == 0:
        raise ValueError(f"{state.site}: cannot observe an empty tensor")
    axes = _reduce_axes(data, state.granularity)
    lo = np.min(data, axis=axes).astype(np.float32)
    hi = np.max(data, axis=axes).astype(np.float32)
    if state.observer_min is None:
        state.observer_min, state.observer_max = lo, hi
    else:
        if lo.shape != state.observer_min.shape:
            raise ValueError(f"{state.site}: observed channel shape {lo.shape} != {state.observer_min.shape}")
        state.observer_min = np.minimum(state.observer_min, lo)
        state.observer_max = np.maximum(state.observer_max, hi)


def _set_bounds(state: QuantizerState, l: np.ndarray, u: np.ndarray) -> None:
    l = np.asarray(l, dtype=np.float32)
    u = np.asarray(u, dtype=np.float32)
    if np.any(u <= l):
        raise ValueError(f"{state.site}: degenerate bounds (u <= l) cannot be frozen")
    l64, u64 = l.astype(np.float64), u.astype(np.float64)
    s = (u64 - l64) / (2 ** state.n - 1)
    state.l, state.u = l, u
    state.s = s
    state.b = l64 / s + 2 ** (state.n - 1)
    state.frozen = True


def freeze(state: QuantizerState) -> None:
    """Fix (l, u) to the observed extrema and derive s, b."""
    if state.frozen:
        return
    if not state.observed:
        raise RuntimeError(f"quantizer site '{state.site}' was never observed")
    _set_bounds(state, state.observer_min, state.observer_max)


def _broadcast_param(value: np.ndarray, x: np.ndarray, granularity: str) -> np.ndarray:
    if granularity == PER_CHANNEL:
        return value.reshape((-1,) + (1,) * (x.ndim - 1))
    return value


def fake_quantize(x: Tensor, state: QuantizerState) -> Tensor:
    """(clip(round(x/s − b), qmin, qmax) + b)·s with a bound-clamped STE."""
    if not state.frozen:
        raise RuntimeError(f"{state.site}: fake_quantize needs a frozen quantizer")
    x64 = x.data.astype(np.float64)
    s = _broadcast_param(state.s, x64, state.granularity)
    b = _broadcast_param(state.b, x64, state.granularity)
    l = _broadcast_param(state.l, x64, state.granularity)
    u = _broadcast_param(state.u, x64, state.granularity)
    q = np.clip(round_half_away(x64 / s - b), state.qmin, state.qmax)
    out = (q + b) * s
    inside = (x.data >= l) & (x.data <= u)
    return ops.custom("fake_quantize", out, (x,), lambda g: (g * inside,))


class QuantizerHook:
    """Layer hook: observe while open, fake-quantize once frozen."""

    def __init__(self, state: QuantizerState):
        self.state = state

    def __call__(self, x: Tensor) -> Tensor:
        if self.state.frozen:
            return fake_quantize(x, self.state)
        observe(x, self.state)
        return x


def weight_state(site: str, weight: np.ndarray, n: int) -> QuantizerState:
    """Per-channel state frozen immediately from the current weights."""
    state = QuantizerState(site=site, n=n, granularity=PER_CHANNEL)
    observe(Tensor(weight), state)
    freeze(state)
    return state


def attach_quantizers(graph: LayerGraph, states: Dict[str, QuantizerState]) -> None:
    """Install hooks for ``{layer}.weight`` / ``{layer}.input`` sites found in ``states``."""
    for layer in quantizable_layers(graph):
        w = states.get(f"{layer.name}.weight")
        a = states.get(f"{layer.name}.input")
        layer.weight_quantizer = QuantizerHook(w) if w is not None else None
        layer.input_quantizer = QuantizerHook(a) if a is not None else None


def quantizer_states(graph: LayerGraph) -> Dict[str, QuantizerState]:
    """Site name → state, in forward order."""
    out: Dict[str, QuantizerState] = {}
    for layer in quantizable_layers(graph):
        for hook in (layer.weight_quantizer, layer.input_quantizer):
            if isinstance(hook, QuantizerHook):
                out[hook.state.site] = hook.state
    return out


def activation_states(graph: LayerGraph) -> List[QuantizerState]:
    return [s for s in quantizer_states(graph).values() if s.granularity == PER_LAYER]


def freeze_activations(graph: LayerGraph) -> None:
    """Freeze every activation site; an unobserved site is an error naming it."""
    pending = [s.site for s in activation_states(graph) if not s.observed]
    if pending:
        raise RuntimeError(f"activation quantizers never observed: {', '.join(pending)}")
    for state in activation_states(graph):
        freeze(state)


def all_frozen(graph: LayerGraph) -> bool:
    return all(s.frozen for s in quantizer_states(graph).values())


def quantize_graph(
    fp: LayerGraph,
    n_w: int,
    n_a: int,
    quantize_first_last: bool = True,
) -> LayerGraph:
    """
    Deep copy of ``fp`` with per-channel weight quantizers (frozen now) and
    per-layer activation quantizers (observers open) on every conv / linear.

    The copy runs in eval mode permanently, so its stored BN statistics stay fixed.
    """
    n_w = check_bits(n_w, "n_w")
    n_a = check_bits(n_a, "n_a")
    student = fp.clone()
    for t in student.parameters():
        t.requires_grad = True
    student.mode = "eval"

    layers = quantizable_layers(student)
    skip = set()
    if not quantize_first_last and len(layers) >= 2:
        skip = {layers[0].name, layers[-1].name}

    states: Dict[str, QuantizerState] = {}
    for layer in layers:
        if layer.name in skip:
            continue
        weight = dict(layer.named_parameters())[f"{layer.name}.weight"]
        states[f"{layer.name}.weight"] = weight_state(f"{layer.name}.weight", weight.data, n_w)
        states[f"{layer.name}.input"] = QuantizerState(site=f"{layer.name}.input", n=n_a, granularity=PER_LAYER)
    attach_quantizers(student, states)
    student.arch = {**student.arch, "quantized": {"n_w": n_w, "n_a": n_a, "quantize_first_last": quantize_first_last}}
    debug(f"quantize_graph: {len(states)} sites, {n_w}w{n_a}a, skipped {sorted(skip)}")
    return student
