"""Desk-scale conditional flow matching on 2-D point latents.

The data distribution conditioned on an instruction is uniform over the
union of the instruction's boxes mapped to the unit canvas [0,1]^2. A
small MLP velocity model v(x_t, t, e) is trained to regress the coupling
velocity u = x1 - x0 along the linear path x_t = (1-t) x0 + t x1, with
x1 standard normal and t uniform. Sampling integrates the learned field
with Euler steps from t = 1 (noise) down to t = 0 (data); under this
coupling u points from data toward noise, hence the downward sweep.

Everything is numpy float64 and seeded, so runs are bitwise
reproducible on a given platform.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .codec import InterleavedInstruction

DEFAULT_DIM = 2
DEFAULT_EMBED_DIM = 64
DEFAULT_WIDTH = 128


class DimensionMismatch(ValueError):
    pass


def _as_vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def interpolate(x0, x1, t: float) -> np.ndarray:
    """Linear path point x_t = (1 - t) x0 + t x1."""
    a, b = _as_vec(x0), _as_vec(x1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return (1.0 - t) * a + t * b


def target_velocity(x0, x1) -> np.ndarray:
    """Coupling velocity u = x1 - x0, constant along the path."""
    a, b = _as_vec(x0), _as_vec(x1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return b - a


# --- condition embedding ------------------------------------------------

_BOX_PROJECTION_TAG = 0x5C07B0C5


def _token_seed(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def embed_instruction(
    instruction: InterleavedInstruction,
    m: int = DEFAULT_EMBED_DIM,
    seed: int = 0,
) -> np.ndarray:
    """Deterministic condition vector: the sum of hash-seeded word-token
    embeddings plus, per coordinate block, the normalized box corners
    projected by a fixed seeded random matrix."""
    e = np.zeros(m, dtype=np.float64)
    # scales keep ||e|| well below the (x, t) input norms, so the
    # constant-per-condition channels never dominate first-layer inputs
    for word in instruction.caption_tokens:
        rng = np.random.default_rng([seed, _token_seed(word)])
        e += 0.02 * rng.standard_normal(m)
    if instruction.entities:
        proj_rng = np.random.default_rng([seed, _BOX_PROJECTION_TAG])
        projection = proj_rng.standard_normal((m, 4)) * 0.15
        for entity in instruction.entities:
            v = np.array(entity.box.as_list(), dtype=np.float64) / 1000.0
            e += projection @ v
    return e


# --- velocity model ------------------------------------------------------

_PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class VelocityModel:
    """Two-hidden-layer tanh MLP mapping (x_t, t, e) -> velocity."""

    d: int
    m: int
    width: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @classmethod
    def init(cls, d: int = DEFAULT_DIM, m: int = DEFAULT_EMBED_DIM,
             width: int = DEFAULT_WIDTH, seed: int = 0) -> "VelocityModel":
        """Random-feature initialization: first-layer columns are scaled
        per input block (position, time, condition) so threshold features
        over x and t exist from the start — the target field is sharp in
        t, and plain SGD at a fixed small rate cannot grow such weights
        from a standard init within the default step budget. The output
        layer starts at zero, the usual choice for flow heads."""
        rng = np.random.default_rng(seed)
        n_in = d + 1 + m
        w1 = rng.standard_normal((width, n_in))
        w1[:, :d] *= 8.0       # position columns
        w1[:, d] *= 20.0       # time column
        w1[:, d + 1 :] *= 0.6  # condition columns
        return cls(
            d=d, m=m, width=width,
            w1=w1,
            b1=rng.uniform(-3.0, 3.0, size=width),
            w2=rng.standard_normal((width, width)) / np.sqrt(width),
            b2=np.zeros(width),
            w3=np.zeros((d, width)),
            b3=np.zeros(d),
        )

    def _inputs(self, x: np.ndarray, t: np.ndarray, e: np.ndarray) -> np.ndarray:
        return np.concatenate([x, t[:, None], e], axis=1)

    def forward(self, x: np.ndarray, t: np.ndarray, e: np.ndarray) -> np.ndarray:
        """Batched velocity prediction; x (B,d), t (B,), e (B,m) or (m,)."""
        x = np.atleast_2d(_as_vec(x))
        t = np.atleast_1d(_as_vec(t))
        e = _as_vec(e)
        if e.ndim == 1:
            e = np.broadcast_to(e, (x.shape[0], e.shape[0]))
        z = self._inputs(x, t, e)
        h1 = np.tanh(z @ self.w1.T + self.b1)
        h2 = np.tanh(h1 @ self.w2.T + self.b2)
        return h2 @ self.w3.T + self.b3

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def flat_params(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in _PARAM_NAMES])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for name in _PARAM_NAMES:
            current = getattr(self, name)
            size = current.size
            setattr(self, name, flat[offset : offset + size].reshape(current.shape).copy())
            offset += size
        if offset != flat.size:
            raise DimensionMismatch(f"expected {offset} parameters, got {flat.size}")

    def copy(self) -> "VelocityModel":
        return VelocityModel(
            self.d, self.m, self.width,
            *(getattr(self, n).copy() for n in _PARAM_NAMES),
        )


def loss_and_grad_at(
    model: VelocityModel,
    x0: np.ndarray,
    x1: np.ndarray,
    t: np.ndarray,
    e: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Velocity-matching loss and exact gradient at given draws:
    mean over the batch of ||v(x_t, t, e) - (x1 - x0)||^2."""
    batch = x0.shape[0]
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    u = x1 - x0

    z = np.concatenate([xt, t[:, None], e], axis=1)
    a1 = z @ model.w1.T + model.b1
    h1 = np.tanh(a1)
    a2 = h1 @ model.w2.T + model.b2
    h2 = np.tanh(a2)
    out = h2 @ model.w3.T + model.b3

    diff = out - u
    loss = float(np.mean(np.sum(diff * diff, axis=1)))

    dout = 2.0 * diff / batch
    grads = {
        "w3": dout.T @ h2,
        "b3": dout.sum(axis=0),
    }
    dh2 = dout @ model.w3
    da2 = dh2 * (1.0 - h2 * h2)
    grads["w2"] = da2.T @ h1
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ model.w2
    da1 = dh1 * (1.0 - h1 * h1)
    grads["w1"] = da1.T @ z
    grads["b1"] = da1.sum(axis=0)
    return loss, grads


def fm_loss_and_grad(
    model: VelocityModel,
    batch: Sequence[tuple[np.ndarray, np.ndarray]],
    noise_seed: int,
) -> tuple[float, dict[str, np.ndarray]]:
    """Draw x1 ~ N(0, I) and t ~ U(0, 1) from the seeded generator, then
    evaluate loss_and_grad_at. Deterministic in (model, batch, seed)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    x0 = np.stack([_as_vec(x) for x, _ in batch])
    e = np.stack([_as_vec(c) for _, c in batch])
    rng = np.random.default_rng(noise_seed)
    x1 = rng.standard_normal(x0.shape)
    t = rng.uniform(0.0, 1.0, size=x0.shape[0])
    return loss_and_grad_at(model, x0, x1, t, e)


# --- training ------------------------------------------------------------

DataSampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-2
    d: int = DEFAULT_DIM
    m: int = DEFAULT_EMBED_DIM
    width: int = DEFAULT_WIDTH
    init_seed: int = 0
    data_seed: int = 1
    noise_seed: int = 2

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def box_union_sampler(
    instruction: InterleavedInstruction,
    m: int = DEFAULT_EMBED_DIM,
    embed_seed: int = 0,
) -> DataSampler:
    """Data sampler for one instruction: x0 uniform over the union of
    its boxes on the unit canvas (exact for disjoint boxes; overlap
    regions are proportionally overweighted), paired with the fixed
    condition embedding."""
    boxes = instruction.boxes
    if not boxes:
        raise ValueError("instruction has no boxes to sample from")
    corners = np.array([b.as_list() for b in boxes], dtype=np.float64) / 1000.0
    areas = (corners[:, 2] - corners[:, 0]) * (corners[:, 3] - corners[:, 1])
    weights = areas / areas.sum()
    embedding = embed_instruction(instruction, m=m, seed=embed_seed)

    def sample_data(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        picks = rng.choice(len(boxes), size=n, p=weights)
        u = rng.uniform(size=(n, 2))
        chosen = corners[picks]
        x = chosen[:, 0] + u[:, 0] * (chosen[:, 2] - chosen[:, 0])
        y = chosen[:, 1] + u[:, 1] * (chosen[:, 3] - chosen[:, 1])
        x0 = np.stack([x, y], axis=1)
        e = np.broadcast_to(embedding, (n, embedding.shape[0])).copy()
        return x0, e

    return sample_data


def mixture_sampler(samplers: Sequence[DataSampler]) -> DataSampler:
    """Uniform mixture over several instruction samplers."""

    def sample_data(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        picks = rng.integers(0, len(samplers), size=n)
        parts = [s(rng, n) for s in samplers]
        x0 = np.stack([parts[k][0][i] for i, k in enumerate(picks)])
        e = np.stack([parts[k][1][i] for i, k in enumerate(picks)])
        return x0, e

    return sample_data


def train(
    config: TrainConfig,
    data_sampler: DataSampler,
) -> tuple[VelocityModel, list[float]]:
    """Plain SGD on the velocity-matching loss; returns the trained
    model and the per-step loss curve."""
    model = VelocityModel.init(config.d, config.m, config.width, seed=config.init_seed)
    data_rng = np.random.default_rng(config.data_seed)
    curve: list[float] = []
    for step in range(config.steps):
        x0, e = data_sampler(data_rng, config.batch_size)
        rng = np.random.default_rng([config.noise_seed, step])
        x1 = rng.standard_normal(x0.shape)
        t = rng.uniform(0.0, 1.0, size=x0.shape[0])
        loss, grads = loss_and_grad_at(model, x0, x1, t, e)
        curve.append(loss)
        for name, grad in grads.items():
            setattr(model, name, getattr(model, name) - config.learning_rate * grad)
    return model, curve


def sample(
    model: VelocityModel,
    e: np.ndarray,
    n_samples: int,
    n_steps: int = 50,
    seed: int = 0,
) -> np.ndarray:
    """Euler-integrate dx/dt = v(x, t, e) from t = 1 (standard-normal
    noise) down to t = 0; returns (n_samples, d) latents."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, model.d))
    dt = 1.0 / n_steps
    for k in range(n_steps):
        t = 1.0 - k * dt
        ts = np.full(n_samples, t)
        x = x - dt * model.forward(x, ts, e)
    return x


def in_box_fraction(
    samples: np.ndarray,
    instruction: InterleavedInstruction,
    tolerance: float = 0.02,
) -> float:
    """Fraction of points inside the union of the instruction's boxes on
    the unit canvas, each box dilated by the tolerance; 0.0 when the
    instruction carries no boxes."""
    boxes = instruction.boxes
    pts = np.atleast_2d(_as_vec(samples))
    if not boxes or pts.shape[0] == 0:
        return 0.0
    inside = np.zeros(pts.shape[0], dtype=bool)
    for b in boxes:
        x1, y1, x2, y2 = (v / 1000.0 for v in b.as_list())
        hit = (
            (pts[:, 0] >= x1 - tolerance)
            & (pts[:, 0] <= x2 + tolerance)
            & (pts[:, 1] >= y1 - tolerance)
            & (pts[:, 1] <= y2 + tolerance)
        )
        inside |= hit
    return float(inside.mean())


# --- checkpoint / curve files ---------------------------------------------


def save_checkpoint(path, model: VelocityModel, meta: dict | None = None) -> None:
    """File layout: one JSON header line (shape + metadata), then the
    flat parameter vector as little-endian float64 bytes."""
    header = {
        "d": model.d,
        "m": model.m,
        "width": model.width,
        "meta": meta or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(model.flat_params().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[VelocityModel, dict]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = f.read()
    model = VelocityModel.init(header["d"], header["m"], header["width"], seed=0)
    flat = np.frombuffer(blob, dtype="<f8")
    model.set_flat_params(flat.astype(np.float64))
    return model, header.get("meta", {})


def save_loss_curve(path, curve: Sequence[float]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for step, value in enumerate(curve):
            f.write(f"{step} {value!r}\n")


def load_loss_curve(path) -> list[float]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(float(line.split()[1]))
    return out
