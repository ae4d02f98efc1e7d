"""Variational autoencoder over 13-D pose vectors, written directly in numpy.

Input layout: 12 joint angles divided by pi (arm_a then arm_b), then the safety
flag. Hidden layers use tanh, the two encoder heads (mean and log-variance) and
the decoder output are linear. Gradients are derived by hand; the test suite
checks them against central differences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset

log = logging.getLogger(__name__)

INPUT_DIM = 13
LATENT_DIM = 2
FLAG_INDEX = 12
ANGLE_SCALE = np.pi


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    hidden: tuple[int, ...] = (450, 250, 100)
    beta: float = 1e-3
    flag_weight: float = 10.0
    arm_a_weight: float = 0.1
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 200
    seed: int = 0
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8


def pose_vectors(ds: Dataset) -> np.ndarray:
    """Stack a dataset into the (n, 13) normalised layout."""
    x = np.empty((len(ds), INPUT_DIM))
    for i, s in enumerate(ds.samples):
        x[i, :6] = s.theta_a / ANGLE_SCALE
        x[i, 6:12] = s.theta_b / ANGLE_SCALE
        x[i, FLAG_INDEX] = s.flag
    return x


def pose_vector(theta_a, theta_b, flag) -> np.ndarray:
    x = np.empty(INPUT_DIM)
    x[:6] = np.asarray(theta_a, dtype=float) / ANGLE_SCALE
    x[6:12] = np.asarray(theta_b, dtype=float) / ANGLE_SCALE
    x[FLAG_INDEX] = flag
    return x


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class VaeModel:
    """Weights are (in, out) matrices applied as ``h @ W + b``."""

    enc: list[tuple[np.ndarray, np.ndarray]]
    mu_head: tuple[np.ndarray, np.ndarray]
    logvar_head: tuple[np.ndarray, np.ndarray]
    dec: list[tuple[np.ndarray, np.ndarray]]
    beta: float = 1e-3
    flag_weight: float = 1.0
    arm_a_weight: float = 1.0
    angle_scale: float = ANGLE_SCALE
    seed: int = 0
    history: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, seed: int = 0, hidden=(450, 250, 100), beta: float = 1e-3, flag_weight: float = 1.0,
             arm_a_weight: float = 1.0, input_dim: int = INPUT_DIM, latent_dim: int = LATENT_DIM) -> "VaeModel":
        rng = np.random.default_rng(seed)
        widths = [input_dim, *hidden]
        enc = [(_glorot(rng, i, o), np.zeros(o)) for i, o in zip(widths[:-1], widths[1:])]
        mu = (_glorot(rng, widths[-1], latent_dim), np.zeros(latent_dim))
        lv = (_glorot(rng, widths[-1], latent_dim), np.zeros(latent_dim))
        dwidths = [latent_dim, *reversed(hidden), input_dim]
        dec = [(_glorot(rng, i, o), np.zeros(o)) for i, o in zip(dwidths[:-1], dwidths[1:])]
        return cls(enc, mu, lv, dec, beta=beta, flag_weight=flag_weight,
                   arm_a_weight=arm_a_weight, seed=seed)

    @property
    def input_dim(self) -> int:
        return self.enc[0][0].shape[0] if self.enc else self.mu_head[0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.mu_head[0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Flat list of every weight and bias, in a fixed order."""
        out = []
        for W, b in self.enc:
            out += [W, b]
        out += list(self.mu_head) + list(self.logvar_head)
        for W, b in self.dec:
            out += [W, b]
        return out

    def layer_shapes(self) -> dict:
        return {
            "encoder": [list(W.shape) for W, _ in self.enc],
            "mu": list(self.mu_head[0].shape),
            "logvar": list(self.logvar_head[0].shape),
            "decoder": [list(W.shape) for W, _ in self.dec],
        }

    # --- forward passes -----------------------------------------------------

    def recon_weights(self) -> np.ndarray:
        w = np.ones(self.input_dim)
        if self.input_dim > FLAG_INDEX:
            w[:6] = self.arm_a_weight
            w[FLAG_INDEX] = self.flag_weight
        return w

    def _check(self, x, dim):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != dim:
            raise ValueError(f"expected last dimension {dim}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("input must be finite")
        return x

    def _encode(self, x):
        acts = [x]
        h = x
        for W, b in self.enc:
            h = np.tanh(h @ W + b)
            acts.append(h)
        mu = h @ self.mu_head[0] + self.mu_head[1]
        logvar = h @ self.logvar_head[0] + self.logvar_head[1]
        return mu, logvar, acts

    def _decode(self, z):
        acts = [z]
        h = z
        for W, b in self.dec[:-1]:
            h = np.tanh(h @ W + b)
            acts.append(h)
        W, b = self.dec[-1]
        return h @ W + b, acts

    def encode(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Mean and log-variance of the latent posterior for one vector or a batch."""
        mu, logvar, _ = self._encode(self._check(x, self.input_dim))
        return mu, logvar

    def decode(self, z) -> np.ndarray:
        out, _ = self._decode(self._check(z, self.latent_dim))
        return out

    def embed(self, x) -> np.ndarray:
        return self.encode(x)[0]

    # --- objective ----------------------------------------------------------

    def loss_and_grads(self, x: np.ndarray, eps: np.ndarray, with_grads: bool = True):
        """Batch-mean ELBO loss for fixed reparameterisation noise ``eps``.

        Returns ``(loss, recon, kl, grads)`` with grads aligned to ``parameters()``.
        """
        n = x.shape[0]
        mu, logvar, enc_acts = self._encode(x)
        std = np.exp(0.5 * logvar)
        z = mu + std * eps
        out, dec_acts = self._decode(z)
        diff = out - x
        w = self.recon_weights()
        recon = np.sum(w * diff * diff) / n
        kl = 0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar) / n
        loss = recon + self.beta * kl
        if not with_grads:
            return loss, recon, kl, None

        dec_grads = []
        g = 2.0 * w * diff / n
        W, _ = self.dec[-1]
        dec_grads.append((dec_acts[-1].T @ g, g.sum(axis=0)))
        g = g @ W.T
        for li in range(len(self.dec) - 2, -1, -1):
            h = dec_acts[li + 1]
            g = g * (1.0 - h * h)
            W, _ = self.dec[li]
            dec_grads.append((dec_acts[li].T @ g, g.sum(axis=0)))
            g = g @ W.T
        dec_grads.reverse()
        dz = g

        dmu = dz + self.beta * mu / n
        dlogvar = dz * eps * 0.5 * std + self.beta * 0.5 * (np.exp(logvar) - 1.0) / n
        top = enc_acts[-1]
        mu_grads = (top.T @ dmu, dmu.sum(axis=0))
        lv_grads = (top.T @ dlogvar, dlogvar.sum(axis=0))
        g = dmu @ self.mu_head[0].T + dlogvar @ self.logvar_head[0].T
        enc_grads = []
        for li in range(len(self.enc) - 1, -1, -1):
            h = enc_acts[li + 1]
            g = g * (1.0 - h * h)
            W, _ = self.enc[li]
            enc_grads.append((enc_acts[li].T @ g, g.sum(axis=0)))
            g = g @ W.T
        enc_grads.reverse()

        grads = []
        for gw, gb in enc_grads:
            grads += [gw, gb]
        grads += list(mu_grads) + list(lv_grads)
        for gw, gb in dec_grads:
            grads += [gw, gb]
        return loss, recon, kl, grads

    # --- persistence --------------------------------------------------------

    def to_json(self) -> dict:
        def pack(layers):
            return [{"W": W.reshape(-1).tolist(), "b": b.tolist(), "shape": list(W.shape)} for W, b in layers]

        return {
            "layer_dims": self.layer_shapes(),
            "activation": "tanh",
            "encoder": pack(self.enc),
            "mu": pack([self.mu_head])[0],
            "logvar": pack([self.logvar_head])[0],
            "decoder": pack(self.dec),
            "beta": self.beta,
            "flag_weight": self.flag_weight,
            "arm_a_weight": self.arm_a_weight,
            "normalization": {"angle_scale": self.angle_scale, "flag_index": FLAG_INDEX},
            "seed": self.seed,
            "history": self.history,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VaeModel":
        def unpack(entries):
            return [(np.asarray(e["W"], dtype=float).reshape(e["shape"]), np.asarray(e["b"], dtype=float)) for e in entries]

        return cls(
            enc=unpack(obj["encoder"]),
            mu_head=unpack([obj["mu"]])[0],
            logvar_head=unpack([obj["logvar"]])[0],
            dec=unpack(obj["decoder"]),
            beta=obj["beta"],
            flag_weight=obj.get("flag_weight", 1.0),
            arm_a_weight=obj.get("arm_a_weight", 1.0),
            angle_scale=obj["normalization"]["angle_scale"],
            seed=obj["seed"],
            history=list(obj.get("history", [])),
        )


def save_model(model: VaeModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json()) + "\n")


def load_model(path) -> VaeModel:
    return VaeModel.from_json(json.loads(Path(path).read_text()))


def elbo_loss(model: VaeModel, x, rng: np.random.Generator) -> tuple[float, float, float]:
    """(loss, reconstruction, KL) for one vector or a batch, one noise draw per row."""
    x = np.atleast_2d(model._check(x, model.input_dim))
    eps = rng.standard_normal((x.shape[0], model.latent_dim))
    loss, recon, kl, _ = model.loss_and_grads(x, eps, with_grads=False)
    return float(loss), float(recon), float(kl)


class Adam:
    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(model: VaeModel, data, cfg: TrainConfig | None = None, max_steps: int | None = None) -> tuple[VaeModel, list[float]]:
    """Minibatch Adam on the ELBO; updates ``model`` in place.

    ``data`` is a Dataset or an (n, 13) array. Returns the model and the
    per-epoch mean loss.
    """
    cfg = cfg or TrainConfig()
    x = pose_vectors(data) if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a non-empty (n, d) array")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), cfg.lr, cfg.adam_b1, cfg.adam_b2, cfg.adam_eps)
    n = x.shape[0]
    history = []
    steps = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = x[order[start:start + cfg.batch_size]]
            eps = rng.standard_normal((batch.shape[0], model.latent_dim))
            loss, _, _, grads = model.loss_and_grads(batch, eps)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, step {steps}")
            opt.step(grads)
            total += loss * batch.shape[0]
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        history.append(total / n)
        if epoch % 20 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d loss %.5f", epoch, history[-1])
        if max_steps is not None and steps >= max_steps:
            break
    model.history = list(history)
    return model, history


def flag_prob(model: VaeModel, z) -> np.ndarray:
    """Reconstructed flag component (not clamped) for latent point(s)."""
    return model.decode(z)[..., FLAG_INDEX]


def classify_latent(model: VaeModel, z) -> np.ndarray | bool:
    """True (safe) where the decoded flag is at least 0.5."""
    out = flag_prob(model, z) >= 0.5
    return bool(out) if np.ndim(out) == 0 else out


def decode_theta_b(model: VaeModel, z) -> np.ndarray:
    """arm_b joint angles from latent point(s), clipped to [-pi, pi]."""
    out = model.decode(z)[..., 6:12]
    return np.clip(out, -1.0, 1.0) * model.angle_scale


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d
