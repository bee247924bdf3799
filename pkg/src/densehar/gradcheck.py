"""Finite-difference verification of every backward rule.

Each registry entry builds a scalar loss from a set of leaf tensors; the
analytic gradients from one taped backward pass are compared against
central finite differences (f(x+e) - f(x-e)) / 2e with e = 1e-5, at 64-bit
precision.  The reported error is max over elements of
|ga - gn| / max(1, |ga|, |gn|).

The straight-through generators are checked against the relaxation whose
Jacobian their backward rule claims to be (the hard forward is a sampling
step, not a differentiable map); the chain is additionally checked end to
end in teacher-forced mode (exact gradients) and in soft-conditioning mode
(the full relaxed conditioning path).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainConfig, LabelSpec, UNetChain, chain_loss
from .conditioning import generate_gumbel_max, generate_naive_max
from .engine import SeededRng, Tape, Tensor, backward, ops, parameter
from .engine.tensor import accumulate, active_tape
from .unet import UNet1D, UNetConfig, unet_forward

EPS = 1e-5
OP_TOLERANCE = 1e-5
E2E_TOLERANCE = 1e-4
# minimum distance from any relu/pool/argmax kink for a base point to count
# as generic; FD perturbations of size EPS stay well inside this margin
KINK_MARGIN = 1e-4
MAX_ATTEMPTS = 20


def _project(x: Tensor, proj: np.ndarray) -> Tensor:
    """Fixed linear functional sum(proj * x), used to scalarize outputs."""
    out = Tensor(np.asarray((proj * x.data).sum()))
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            accumulate(x, float(gy) * proj)
        tape.record(out, rule)
    return out


def _away_from_zero(a: np.ndarray, margin: float = 0.2) -> np.ndarray:
    return a + np.sign(a) * margin


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _kink_margin(loss_fn) -> float:
    """Distance from the nearest piecewise boundary at the base point."""
    ops.MARGIN_SINK = []
    try:
        loss_fn()
        return min(ops.MARGIN_SINK, default=np.inf)
    finally:
        ops.MARGIN_SINK = None


def _check(loss_fn, leaves: dict[str, Tensor]) -> float:
    with Tape() as tape:
        loss = loss_fn()
        backward(loss, tape)
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in leaves.items()}
    worst = 0.0
    for k, t in leaves.items():
        flat = t.data.ravel()
        ga = analytic[k].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + EPS
            up = float(loss_fn().data)
            flat[i] = orig - EPS
            down = float(loss_fn().data)
            flat[i] = orig
            gn = (up - down) / (2 * EPS)
            err = abs(ga[i] - gn) / max(1.0, abs(ga[i]), abs(gn))
            worst = max(worst, err)
    return worst


# --- per-op entries ---------------------------------------------------------

def _entry_conv1d(rng, stride=1, pad=1):
    x = parameter(rng.normal((2, 3, 8)))
    w = parameter(rng.normal((4, 3, 3)) * 0.5)
    b = parameter(rng.normal(4) * 0.1)
    tout = (8 + 2 * pad - 3) // stride + 1
    proj = rng.normal((2, 4, tout))
    return (lambda: _project(ops.conv1d(x, w, b, stride=stride, pad=pad), proj),
            {"x": x, "w": w, "b": b})


def _entry_conv_transpose(rng):
    x = parameter(rng.normal((2, 3, 4)))
    w = parameter(rng.normal((3, 5, 2)) * 0.5)
    b = parameter(rng.normal(5) * 0.1)
    proj = rng.normal((2, 5, 8))
    return (lambda: _project(ops.conv_transpose1d(x, w, b, stride=2), proj),
            {"x": x, "w": w, "b": b})


def _entry_maxpool(rng):
    x = parameter(rng.normal((2, 3, 8)))
    proj = rng.normal((2, 3, 4))
    return lambda: _project(ops.maxpool1d(x, 2), proj), {"x": x}


def _entry_relu(rng):
    x = parameter(_away_from_zero(rng.normal((2, 3, 8))))
    proj = rng.normal((2, 3, 8))
    return lambda: _project(ops.relu(x), proj), {"x": x}


def _entry_add(rng):
    a = parameter(rng.normal((3, 4)))
    b = parameter(rng.normal((3, 4)))
    proj = rng.normal((3, 4))
    return lambda: _project(ops.add(a, b), proj), {"a": a, "b": b}


def _entry_sum_all(rng):
    x = parameter(rng.normal((3, 4)))
    return lambda: ops.sum_all(x), {"x": x}


def _entry_concat(rng):
    a = parameter(rng.normal((2, 3, 5)))
    b = parameter(rng.normal((2, 2, 5)))
    proj = rng.normal((2, 5, 5))
    return lambda: _project(ops.concat([a, b], axis=1), proj), {"a": a, "b": b}


def _entry_split(rng):
    x = parameter(rng.normal((2, 5, 4)))
    p1, p2 = rng.normal((2, 2, 4)), rng.normal((2, 3, 4))
    def loss_fn():
        lo, hi = ops.split_channels(x, [2, 3])
        return ops.add(_project(lo, p1), _project(hi, p2))
    return loss_fn, {"x": x}


def _entry_embedding(rng):
    table = parameter(rng.normal((5, 3)))
    onehot = parameter(rng.uniform((2, 5, 4)))
    proj = rng.normal((2, 3, 4))
    return (lambda: _project(ops.embedding_lookup(table, onehot), proj),
            {"W": table, "onehot": onehot})


def _entry_cross_entropy(rng):
    logits = parameter(rng.normal((2, 4, 6)))
    targets = rng.integers(4, (2, 6))
    return lambda: ops.cross_entropy_dense(logits, targets), {"logits": logits}


def _entry_naive_surrogate(rng):
    logits = parameter(rng.normal((2, 4, 6)) * 2.0)
    proj = rng.normal((2, 4, 6))
    return (lambda: _project(generate_naive_max(logits, soft=True), proj),
            {"logits": logits})


def _entry_gumbel_surrogate(rng, act):
    logits = parameter(rng.normal((2, 4, 6)))
    noise = rng.gumbel((2, 4, 6))
    proj = rng.normal((2, 4, 6))
    return (lambda: _project(
        generate_gumbel_max(logits, tau=0.8, rng=None, act=act,
                            noise=noise, soft=True), proj),
            {"logits": logits})


# --- end-to-end entries -----------------------------------------------------

_TINY_UNET = UNetConfig(in_channels=3, out_classes=2, depth=1,
                        base_channels=2, kernel_size=3)


def _entry_unet(rng):
    model = UNet1D(_TINY_UNET, rng)
    x = parameter(rng.normal((1, 3, 8)))
    targets = rng.integers(2, (1, 8))
    leaves = dict(model.parameters())
    leaves["x"] = x
    return (lambda: ops.cross_entropy_dense(unet_forward(model, x), targets),
            leaves)


def _tiny_chain(rng, teacher_forcing: bool) -> tuple[UNetChain, ChainConfig]:
    config = ChainConfig(
        labels=(LabelSpec("a", 2), LabelSpec("b", 3)),
        in_channels=3, depth=1, base_channels=2, kernel_size=3,
        teacher_forcing=teacher_forcing)
    return UNetChain(config, rng), config


def _entry_chain_teacher_forced(rng):
    model, _ = _tiny_chain(rng, teacher_forcing=True)
    x = parameter(rng.normal((1, 3, 8)))
    targets = np.stack([rng.integers(2, (1, 8)), rng.integers(3, (1, 8))])
    leaves = dict(model.parameters())
    leaves["x"] = x
    def loss_fn():
        logits = model.forward(x, mode="train", tau=1.0, targets=targets)
        return chain_loss(logits, targets)
    return loss_fn, leaves


def _entry_chain_soft(rng):
    model, _ = _tiny_chain(rng, teacher_forcing=False)
    x = parameter(rng.normal((1, 3, 8)))
    targets = np.stack([rng.integers(2, (1, 8)), rng.integers(3, (1, 8))])
    leaves = dict(model.parameters())
    leaves["x"] = x
    def loss_fn():
        # fresh rng per evaluation keeps the Gumbel draws identical
        logits = model.forward(x, mode="train", rng=SeededRng(1234),
                               tau=0.8, soft_generate=True)
        return chain_loss(logits, targets)
    return loss_fn, leaves


REGISTRY = [
    ("conv1d", OP_TOLERANCE, lambda rng: _entry_conv1d(rng)),
    ("conv1d(stride=2,pad=0)", OP_TOLERANCE, lambda rng: _entry_conv1d(rng, 2, 0)),
    ("conv_transpose1d", OP_TOLERANCE, _entry_conv_transpose),
    ("maxpool1d", OP_TOLERANCE, _entry_maxpool),
    ("relu", OP_TOLERANCE, _entry_relu),
    ("add", OP_TOLERANCE, _entry_add),
    ("sum_all", OP_TOLERANCE, _entry_sum_all),
    ("concat", OP_TOLERANCE, _entry_concat),
    ("split_channels", OP_TOLERANCE, _entry_split),
    ("embedding_lookup", OP_TOLERANCE, _entry_embedding),
    ("cross_entropy_dense", OP_TOLERANCE, _entry_cross_entropy),
    ("generate_naive_max(surrogate)", OP_TOLERANCE, _entry_naive_surrogate),
    ("generate_gumbel_max(tanh surrogate)", OP_TOLERANCE,
     lambda rng: _entry_gumbel_surrogate(rng, "tanh")),
    ("generate_gumbel_max(softmax surrogate)", OP_TOLERANCE,
     lambda rng: _entry_gumbel_surrogate(rng, "softmax")),
    ("unet_forward (end to end)", E2E_TOLERANCE, _entry_unet),
    ("chain (teacher forced, end to end)", E2E_TOLERANCE, _entry_chain_teacher_forced),
    ("chain (soft conditioning, end to end)", E2E_TOLERANCE, _entry_chain_soft),
]


def registered_ops() -> list[str]:
    return [name for name, _, _ in REGISTRY]


def run_suite(seed: int = 0) -> list[CheckResult]:
    """Check every registry entry at a generic base point.

    The loss surfaces are piecewise smooth, so a sample whose forward pass
    runs within KINK_MARGIN of a relu/pool/argmax boundary is redrawn (the
    comparison is undefined across a kink, not wrong).
    """
    results = []
    for name, tol, builder in REGISTRY:
        loss_fn = leaves = None
        for attempt in range(MAX_ATTEMPTS):
            rng = SeededRng(seed).split(f"gradcheck.{name}.{attempt}")
            loss_fn, leaves = builder(rng)
            if _kink_margin(loss_fn) > KINK_MARGIN:
                break
        results.append(CheckResult(name, _check(loss_fn, leaves), tol))
    return results
