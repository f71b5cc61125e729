"""Conditional tabular GAN and tabular VAE for +1/-1 trace tables.

Both families see each row as concatenated one-hot blocks, one block of two
categories ``(+1, -1)`` per angle column.

GAN
    Generator: noise (``noise_dim``) + condition vector -> per-column logits,
    relaxed with Gumbel-softmax while training.  Discriminator: encoded row +
    condition vector -> realness logit.  Every step picks a (column, category)
    condition per batch element, uniformly over the categories observed in
    that column, and draws the real row from the rows that satisfy it.  The
    generator loss is the non-saturating logistic loss plus cross-entropy
    between the conditioned column's logits and the requested category.
    Sampling draws the column uniformly and the category with its training
    frequency, so the generated marginals follow the data.

VAE
    Encoder: encoded row -> latent mean and log-variance.  Decoder: latent ->
    per-column softmax groups.  Loss is ``loss_factor`` times the summed
    per-column cross-entropy plus the analytic Gaussian KL term.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._rng import substream
from .autodiff import Tensor
from .channel import LOS, NLOS, TraceDataset, generate_dataset
from .metrics import MetricCurve, empirical, kl_divergence, wasserstein
from .nn import (
    AdamState,
    DenseLayer,
    forward,
    frozen,
    gaussian_reparameterize,
    gumbel_softmax,
    mlp,
    parameters,
)

log = logging.getLogger(__name__)

CATEGORIES = (LOS, NLOS)


class TableEncoding:
    """One-hot blocks ``[+1, -1]`` per column; width is ``2 * len(angles)``."""

    def __init__(self, angles):
        self.angles = tuple(int(a) for a in angles)
        self.categories = CATEGORIES

    @property
    def groups(self) -> tuple[int, ...]:
        return (len(self.categories),) * len(self.angles)

    @property
    def width(self) -> int:
        return len(self.categories) * len(self.angles)

    def encode(self, cells: np.ndarray) -> np.ndarray:
        cells = np.asarray(cells)
        out = np.zeros((cells.shape[0], self.width))
        for j in range(len(self.angles)):
            for k, cat in enumerate(self.categories):
                out[:, 2 * j + k] = cells[:, j] == cat
        return out

    def decode(self, scores: np.ndarray) -> np.ndarray:
        """Hard argmax per group back to +1/-1 cells."""
        scores = np.asarray(scores)
        n = scores.shape[0]
        idx = scores.reshape(n, len(self.angles), len(self.categories)).argmax(axis=-1)
        return np.asarray(self.categories, dtype=np.int8)[idx]

    def to_dict(self):
        return {"angles": list(self.angles), "categories": list(self.categories)}


@dataclass
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 50
    learning_rate: float = 2e-4
    seed: int = 0
    track_angle: int | None = None
    # rows in the held-out real sample and in each per-epoch synthetic sample
    # used for tracking; None means the training-table size
    track_rows: int | None = None
    monitor_rows: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    noise_dim: int = 128
    gan_hidden: tuple[int, ...] = (256, 256)
    temperature: float = 0.2
    vae_hidden: tuple[int, ...] = (128, 128)
    latent_dim: int = 16
    loss_factor: float = 2.0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "noise_dim", "latent_dim"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        self.gan_hidden = tuple(int(h) for h in self.gan_hidden)
        self.vae_hidden = tuple(int(h) for h in self.vae_hidden)

    def to_dict(self):
        d = asdict(self)
        d["gan_hidden"] = list(self.gan_hidden)
        d["vae_hidden"] = list(self.vae_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# -- models -----------------------------------------------------------------


class GanModel:
    family = "gan"

    def __init__(self, generator, discriminator, encoding, cond_freqs, config):
        self.generator = generator
        self.discriminator = discriminator
        self.encoding = encoding
        # cond_freqs[j] = training frequencies of (+1, -1) in column j
        self.cond_freqs = np.asarray(cond_freqs, dtype=np.float64)
        self.config = config

    @property
    def angles(self):
        return self.encoding.angles

    @property
    def noise_dim(self) -> int:
        return self.config.noise_dim

    def networks(self):
        return {"generator": self.generator, "discriminator": self.discriminator}

    def generator_logits(self, noise, cond) -> np.ndarray:
        return forward(self.generator, np.concatenate([noise, cond], axis=1), logits=True)

    def sample(self, n: int, seed: int, cond: tuple[int, int] | None = None) -> TraceDataset:
        """``n`` synthetic rows.

        ``cond=(column_index, category_index)`` pins every condition vector
        instead of drawing it from the training frequencies.
        """
        return _sample(self, n, seed, cond)


class VaeModel:
    family = "vae"

    def __init__(self, encoder, decoder, encoding, config):
        self.encoder = encoder
        self.decoder = decoder
        self.encoding = encoding
        self.config = config

    @property
    def angles(self):
        return self.encoding.angles

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def networks(self):
        return {"encoder": self.encoder, "decoder": self.decoder}

    def encode(self, x):
        h = forward(self.encoder, x)
        L = self.latent_dim
        if isinstance(h, Tensor):
            return ad.columns(h, 0, L), ad.columns(h, L, 2 * L)
        return h[:, :L], h[:, L:]

    def decode(self, z):
        return forward(self.decoder, z)

    def sample(self, n: int, seed: int) -> TraceDataset:
        return _sample(self, n, seed)


def build_gan(encoding: TableEncoding, config: TrainingConfig, cond_freqs, rng) -> GanModel:
    w = encoding.width
    gen = mlp([config.noise_dim + w, *config.gan_hidden, w], rng=rng)
    dis = mlp([2 * w, *config.gan_hidden, 1], rng=rng)
    return GanModel(gen, dis, encoding, cond_freqs, config)


def build_vae(encoding: TableEncoding, config: TrainingConfig, rng) -> VaeModel:
    w, L = encoding.width, config.latent_dim
    enc = mlp([w, *config.vae_hidden, 2 * L], rng=rng)
    dec = mlp([L, *reversed(config.vae_hidden), w], final="softmax", groups=encoding.groups, rng=rng)
    return VaeModel(enc, dec, encoding, config)


# -- sampling ---------------------------------------------------------------

_SAMPLE_CHUNK = 8192


def _sample(model, n: int, seed: int, cond=None) -> TraceDataset:
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    enc = model.encoding
    rng = substream(seed)
    cells = np.empty((n, len(enc.angles)), dtype=np.int8)
    for start in range(0, n, _SAMPLE_CHUNK):
        m = min(_SAMPLE_CHUNK, n - start)
        if model.family == "gan":
            if cond is None:
                cond_vec, _, _ = _draw_conditions(rng, model.cond_freqs, m)
            else:
                cond_vec = np.zeros((m, enc.width))
                cond_vec[:, 2 * cond[0] + cond[1]] = 1.0
            noise = rng.standard_normal((m, model.noise_dim))
            logits = model.generator_logits(noise, cond_vec)
            # Gumbel-max: a hard categorical draw from the generator's softmax
            u = np.clip(rng.random(logits.shape), 1e-300, 1.0 - 1e-16)
            cells[start : start + m] = enc.decode(logits - np.log(-np.log(u)))
        else:
            z = rng.standard_normal((m, model.latent_dim))
            cells[start : start + m] = enc.decode(model.decode(z))
    return TraceDataset(enc.angles, cells)


def sample(model, n: int, seed: int) -> TraceDataset:
    return model.sample(n, seed)


def _draw_conditions(rng, probs, m):
    """Condition vectors: column uniform, category drawn with ``probs[column]``."""
    n_cols = probs.shape[0]
    col = rng.integers(0, n_cols, size=m)
    cum = np.cumsum(probs[col], axis=1)
    cat = (rng.random(m)[:, None] > cum[:, :-1]).sum(axis=1)
    vec = np.zeros((m, 2 * n_cols))
    vec[np.arange(m), 2 * col + cat] = 1.0
    return vec, col, cat


# -- training ---------------------------------------------------------------


def _validate_training_data(data: TraceDataset):
    if data.rows == 0 or not data.angles:
        raise ValueError("training dataset is empty")
    if not np.isin(data.cells, CATEGORIES).all():
        raise ValueError("training dataset contains values other than +1/-1")


def _category_freqs(data: TraceDataset) -> np.ndarray:
    return np.array(
        [[np.mean(data.cells[:, j] == c) for c in CATEGORIES] for j in range(len(data.angles))]
    )


class _Tracker:
    """Per-epoch monitoring shared by both trainers."""

    def __init__(self, model, data: TraceDataset, config: TrainingConfig):
        self.model = model
        self.config = config
        self.curve = MetricCurve()
        self.heldout = None
        if config.track_angle is not None:
            if config.track_angle not in data.angles:
                raise ValueError(f"track_angle {config.track_angle} is not a column of the data")
            rows = config.track_rows or data.rows
            self.heldout = empirical(
                generate_dataset([config.track_angle], rows, _epoch_seed(config.seed, 9, 0)).cells[:, 0]
            )

    def end_epoch(self, epoch: int, losses: dict[str, float]):
        cfg = self.config
        for name, value in losses.items():
            self.curve.add(epoch, name, value)
        mon = self.model.sample(cfg.monitor_rows, _epoch_seed(cfg.seed, 7, epoch))
        fractions = mon.los_fraction()
        for a, f in fractions.items():
            self.curve.add(epoch, f"los_fraction_{a}", f)
        if self.heldout is not None:
            rows = cfg.track_rows or self.heldout.sample_count
            synth = self.model.sample(rows, _epoch_seed(cfg.seed, 8, epoch))
            q = empirical(synth.column(cfg.track_angle))
            self.curve.add(epoch, "kl", kl_divergence(self.heldout, q))
            self.curve.add(epoch, "wasserstein", wasserstein(self.heldout, q))
        loss_txt = " ".join(f"{k}={v:.4f}" for k, v in losses.items())
        freq_txt = " ".join(f"{a}:{f:.4f}" for a, f in fractions.items())
        log.info("%s epoch %d %s | LOS freq %s", self.model.family, epoch, loss_txt, freq_txt)


def _epoch_seed(seed, key, epoch):
    return int(substream(seed, key, epoch).integers(0, 2**63 - 1))


def _check_finite(value, family, epoch, batch):
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite {family} loss at epoch {epoch}, batch {batch}")


def _batches(rng, n, batch_size):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_gan(data: TraceDataset, config: TrainingConfig | None = None):
    """Train the conditional GAN; returns ``(model, curve)``."""
    config = config or TrainingConfig()
    _validate_training_data(data)
    enc = TableEncoding(data.angles)
    x_all = enc.encode(data.cells)
    freqs = _category_freqs(data)
    model = build_gan(enc, config, freqs, substream(config.seed, 0))
    n_cols = len(enc.angles)

    # training conditions: category uniform over those present in the column
    present = (freqs > 0).astype(np.float64)
    train_probs = present / present.sum(axis=1, keepdims=True)
    # rows satisfying condition (j, k) are pool[offsets[2j+k] : offsets[2j+k] + sizes[2j+k]]
    pools = [np.flatnonzero(data.cells[:, j] == c) for j in range(n_cols) for c in CATEGORIES]
    sizes = np.array([len(p) for p in pools])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    pool = np.concatenate(pools)

    g_params, d_params = parameters(model.generator), parameters(model.discriminator)
    opt_g = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    opt_d = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    rng = substream(config.seed, 1)
    tracker = _Tracker(model, data, config)
    tau = config.temperature

    def fake_rows(m):
        cond, col, cat = _draw_conditions(rng, train_probs, m)
        noise = rng.standard_normal((m, config.noise_dim))
        logits = forward(model.generator, Tensor(np.concatenate([noise, cond], axis=1)), logits=True)
        fake = gumbel_softmax(logits, tau, rng, enc.groups)
        return fake, logits, cond, col, cat

    for epoch in range(1, config.epochs + 1):
        sums = {"loss_d": 0.0, "loss_g": 0.0}
        nb = 0
        for nb, idx in enumerate(_batches(rng, data.rows, config.batch_size), start=1):
            m = len(idx)
            # discriminator step
            fake, _, cond, col, cat = fake_rows(m)
            combo = 2 * col + cat
            real_idx = pool[offsets[combo] + (rng.random(m) * sizes[combo]).astype(np.int64)]
            # one pass over [real; fake]; target sign -1 for real, +1 for fake
            both = np.concatenate(
                [np.concatenate([x_all[real_idx], cond], axis=1), np.concatenate([fake.data, cond], axis=1)]
            )
            sign = np.concatenate([-np.ones((m, 1)), np.ones((m, 1))])
            with ad.GradientTape() as tape:
                d_out = forward(model.discriminator, Tensor(both))
                loss_d = ad.mul(ad.sum(ad.softplus(ad.mul(d_out, sign))), 1.0 / m)
            _check_finite(float(loss_d.data), "discriminator", epoch, nb)
            opt_d.step(d_params, tape.gradient(loss_d, d_params))

            # generator step
            with ad.GradientTape() as tape, frozen(d_params):
                fake, logits, cond, _, _ = fake_rows(m)
                d_fake = forward(model.discriminator, ad.concat([fake, Tensor(cond)], axis=1))
                adv = ad.mean(ad.softplus(-d_fake))
                logp = ad.log_softmax_groups(logits, enc.groups)
                cond_ce = ad.mul(ad.sum(ad.mul(logp, cond)), -1.0 / m)
                loss_g = adv + cond_ce
            _check_finite(float(loss_g.data), "generator", epoch, nb)
            opt_g.step(g_params, tape.gradient(loss_g, g_params))

            sums["loss_d"] += float(loss_d.data)
            sums["loss_g"] += float(loss_g.data)
        tracker.end_epoch(epoch, {k: v / nb for k, v in sums.items()})
    return model, tracker.curve


def train_vae(data: TraceDataset, config: TrainingConfig | None = None):
    """Train the tabular VAE; returns ``(model, curve)``."""
    config = config or TrainingConfig()
    _validate_training_data(data)
    enc = TableEncoding(data.angles)
    x_all = enc.encode(data.cells)
    model = build_vae(enc, config, substream(config.seed, 0))
    params = parameters(model.encoder) + parameters(model.decoder)
    opt = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    rng = substream(config.seed, 1)
    tracker = _Tracker(model, data, config)

    for epoch in range(1, config.epochs + 1):
        sums = {"loss": 0.0, "reconstruction": 0.0, "kl_term": 0.0}
        nb = 0
        for nb, idx in enumerate(_batches(rng, data.rows, config.batch_size), start=1):
            x = x_all[idx]
            m = len(idx)
            with ad.GradientTape() as tape:
                mu, log_var = model.encode(Tensor(x))
                z = gaussian_reparameterize(mu, log_var, rng)
                logits = forward(model.decoder, z, logits=True)
                recon = ad.mul(ad.sum(ad.mul(ad.log_softmax_groups(logits, enc.groups), x)), -1.0 / m)
                kl = gaussian_kl(mu, log_var)
                loss = ad.mul(recon, config.loss_factor) + kl
            _check_finite(float(loss.data), "vae", epoch, nb)
            opt.step(params, tape.gradient(loss, params))
            sums["loss"] += float(loss.data)
            sums["reconstruction"] += float(recon.data)
            sums["kl_term"] += float(kl.data)
        tracker.end_epoch(epoch, {k: v / nb for k, v in sums.items()})
    return model, tracker.curve


def gaussian_kl(mu, log_var):
    """Batch mean of ``0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1)``."""
    mu, log_var = ad.as_tensor(mu), ad.as_tensor(log_var)
    m = mu.shape[0] if mu.data.ndim == 2 else 1
    terms = ad.square(mu) + ad.exp(log_var) - log_var - 1.0
    return ad.mul(ad.sum(terms), 0.5 / m)


def reconstruction_accuracy(model: VaeModel, data: TraceDataset) -> float:
    """Fraction of cells recovered by decoding the posterior mean."""
    mu, _ = model.encode(model.encoding.encode(data.cells))
    return float(np.mean(model.encoding.decode(model.decode(mu)) == data.cells))


# -- persistence ------------------------------------------------------------

MAGIC = b"LOSGENMF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII")  # magic, format version, header length


class ModelFileError(ValueError):
    pass


class UnrecognizedModelFile(ModelFileError):
    pass


class UnsupportedFormatVersion(ModelFileError):
    pass


class TruncatedModelFile(ModelFileError):
    pass


class UnknownModelFamily(ModelFileError):
    pass


def _describe(network):
    return [
        {
            "in": layer.in_dim,
            "out": layer.out_dim,
            "activation": layer.activation,
            "groups": list(layer.groups) if layer.groups else None,
        }
        for layer in network
    ]


def save_model(model, path) -> Path:
    """Write ``model`` to ``path`` (layout documented in README)."""
    arrays, payload, offset = [], [], 0
    architecture = {}
    for name, net in model.networks().items():
        architecture[name] = _describe(net)
        for i, layer in enumerate(net):
            for kind, t in (("weights", layer.weights), ("bias", layer.bias)):
                raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
                arrays.append(
                    {"name": f"{name}.{i}.{kind}", "shape": list(t.shape), "offset": offset, "nbytes": len(raw)}
                )
                payload.append(raw)
                offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "encoding": model.encoding.to_dict(),
        "architecture": architecture,
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "arrays": arrays,
        "payload_bytes": offset,
    }
    if model.family == "gan":
        header["cond_freqs"] = model.cond_freqs.tolist()
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(b"".join(payload))
    return path


def load_model(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:8] != MAGIC:
        raise UnrecognizedModelFile(f"unrecognized model file: {path}")
    _, version, hlen = _HEADER.unpack_from(raw)
    if version > FORMAT_VERSION:
        raise UnsupportedFormatVersion(
            f"model file format version {version} is newer than supported version {FORMAT_VERSION}"
        )
    if len(raw) < _HEADER.size + hlen:
        raise TruncatedModelFile(f"truncated model file: {path} (header incomplete)")
    try:
        header = json.loads(raw[_HEADER.size : _HEADER.size + hlen])
    except ValueError as exc:
        raise UnrecognizedModelFile(f"unrecognized model file: {path} (bad header)") from exc
    body = raw[_HEADER.size + hlen :]
    if len(body) < header["payload_bytes"]:
        raise TruncatedModelFile(
            f"truncated model file: {path} (expected {header['payload_bytes']} weight bytes, found {len(body)})"
        )
    family = header.get("family")
    if family not in ("gan", "vae"):
        raise UnknownModelFamily(f"unknown model family {family!r} in {path}")

    arrays = {
        a["name"]: np.frombuffer(body, dtype="<f8", count=a["nbytes"] // 8, offset=a["offset"])
        .reshape(a["shape"])
        .astype(np.float64)
        for a in header["arrays"]
    }
    nets = {}
    for name, layers in header["architecture"].items():
        nets[name] = [
            DenseLayer(
                Tensor(arrays[f"{name}.{i}.weights"]),
                Tensor(arrays[f"{name}.{i}.bias"]),
                spec["activation"],
                tuple(spec["groups"]) if spec["groups"] else None,
            )
            for i, spec in enumerate(layers)
        ]
    encoding = TableEncoding(header["encoding"]["angles"])
    config = TrainingConfig.from_dict(header["config"])
    if family == "gan":
        return GanModel(nets["generator"], nets["discriminator"], encoding, header["cond_freqs"], config)
    return VaeModel(nets["encoder"], nets["decoder"], encoding, config)
