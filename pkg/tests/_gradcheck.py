"""Finite-difference oracle for the autodiff tape.

Each case builds a small random network plus a scalar loss as a closure over
the parameter tensors, so the loss can be re-evaluated (without a tape) after
nudging a single parameter entry.

Central differences are meaningless across a relu kink, so :func:`draw_case`
redraws any case in which some relu input lies within ``KINK_MARGIN`` of 0.
"""

from contextlib import contextmanager

import numpy as np

from losgen import autodiff as ad
from losgen.autodiff import GradientTape, Tensor
from losgen.models import gaussian_kl
from losgen.nn import ACTIVATIONS, forward, gaussian_reparameterize, gumbel_softmax, mlp, parameters

H = 1e-4
KINK_MARGIN = 1e-3


def central_difference(loss_fn, param, idx, h=H):
    old = param.data[idx]
    param.data[idx] = old + h
    up = float(loss_fn().data)
    param.data[idx] = old - h
    down = float(loss_fn().data)
    param.data[idx] = old
    return (up - down) / (2 * h)


def relative_error(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-6)


@contextmanager
def _relu_margin():
    """Record the smallest |input| seen by any relu while active."""
    seen = [np.inf]
    original = ad.relu

    def watched(a):
        data = ad.as_tensor(a).data
        if data.size:
            seen[0] = min(seen[0], float(np.min(np.abs(data))))
        return original(a)

    ad.relu = watched
    try:
        yield seen
    finally:
        ad.relu = original


def layer_case(rng, activation=None, max_units=32):
    """Random MLP with one activation type and a random linear read-out."""
    activation = activation or rng.choice(ACTIVATIONS)
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, max_units + 1)) for _ in range(depth + 1)]
    groups = None
    if activation == "softmax":
        k = int(rng.integers(1, 4))
        sizes = rng.integers(1, 4, size=k)
        dims[-1] = int(sizes.sum())
        groups = tuple(int(s) for s in sizes)
    net = mlp(dims, hidden=activation if activation != "softmax" else "tanh", final=activation, rng=rng, groups=groups)
    batch = int(rng.integers(1, 6))
    x = rng.normal(size=(batch, dims[0]))
    readout = rng.normal(size=(batch, dims[-1]))

    def loss():
        return ad.sum(ad.mul(forward(net, Tensor(x)), readout))

    return parameters(net), loss


def gan_case(rng, max_units=32):
    """Generator + discriminator with Gumbel-softmax outputs and both GAN losses."""
    n_cols = int(rng.integers(1, 4))
    width = 2 * n_cols
    noise_dim = int(rng.integers(1, max_units + 1))
    hidden = int(rng.integers(2, max_units + 1))
    groups = (2,) * n_cols
    gen = mlp([noise_dim + width, hidden, width], rng=rng)
    dis = mlp([2 * width, hidden, 1], rng=rng)
    batch = int(rng.integers(2, 6))
    noise = rng.normal(size=(batch, noise_dim))
    cond = np.zeros((batch, width))
    cond[np.arange(batch), rng.integers(0, width, size=batch)] = 1.0
    real = np.zeros((batch, width))
    for j in range(n_cols):
        real[np.arange(batch), 2 * j + rng.integers(0, 2, size=batch)] = 1.0
    gseed = int(rng.integers(0, 2**31))

    def loss():
        logits = forward(gen, Tensor(np.concatenate([noise, cond], axis=1)), logits=True)
        fake = gumbel_softmax(logits, 0.5, gseed, groups)
        d_fake = forward(dis, ad.concat([fake, Tensor(cond)], axis=1))
        d_real = forward(dis, Tensor(np.concatenate([real, cond], axis=1)))
        ce = ad.mul(ad.sum(ad.mul(ad.log_softmax_groups(logits, groups), cond)), -1.0 / batch)
        return ad.mean(ad.softplus(-d_fake)) + ad.mean(ad.softplus(-d_real)) + ad.mean(ad.softplus(d_fake)) + ce

    return parameters(gen) + parameters(dis), loss


def vae_case(rng, max_units=32):
    """Encoder, reparameterised latent, grouped-softmax decoder, ELBO-style loss."""
    n_cols = int(rng.integers(1, 4))
    width = 2 * n_cols
    latent = int(rng.integers(1, 9))
    hidden = int(rng.integers(2, max_units + 1))
    groups = (2,) * n_cols
    enc = mlp([width, hidden, 2 * latent], rng=rng)
    dec = mlp([latent, hidden, width], final="softmax", groups=groups, rng=rng)
    batch = int(rng.integers(2, 6))
    x = np.zeros((batch, width))
    for j in range(n_cols):
        x[np.arange(batch), 2 * j + rng.integers(0, 2, size=batch)] = 1.0
    zseed = int(rng.integers(0, 2**31))

    def loss():
        h = forward(enc, Tensor(x))
        mu, log_var = ad.columns(h, 0, latent), ad.columns(h, latent, 2 * latent)
        z = gaussian_reparameterize(mu, log_var, zseed)
        logits = forward(dec, z, logits=True)
        recon = ad.mul(ad.sum(ad.mul(ad.log_softmax_groups(logits, groups), x)), -1.0 / batch)
        return ad.mul(recon, 2.0) + gaussian_kl(mu, log_var)

    return parameters(enc) + parameters(dec), loss


CASES = {"layer": layer_case, "gan": gan_case, "vae": vae_case}


def draw_case(kind, rng, **kw):
    """A ``(params, loss)`` case of the given kind that stays clear of relu kinks."""
    for _ in range(1000):
        params, loss = CASES[kind](rng, **kw)
        with _relu_margin() as seen:
            loss()
        if seen[0] >= KINK_MARGIN:
            return params, loss
    raise RuntimeError("could not draw a kink-free case")


def check_case(params, loss_fn, rng, per_tensor=4):
    """Largest relative error between tape and finite-difference gradients."""
    with GradientTape() as tape:
        loss = loss_fn()
    grads = tape.gradient(loss, params)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = rng.choice(p.data.size, size=min(per_tensor, p.data.size), replace=False)
        for f in flat:
            idx = np.unravel_index(f, p.data.shape)
            worst = max(worst, relative_error(g[idx], central_difference(loss_fn, p, idx)))
    return worst
