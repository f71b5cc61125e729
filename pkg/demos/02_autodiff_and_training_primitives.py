# %% [markdown]
# # Tape-based autodiff, dense layers and Adam
#
# Operations on `Tensor`s are recorded while a `GradientTape` is active, and
# `tape.gradient` walks the record backwards.  Everything is float64 numpy.

# %%
import numpy as np

from losgen import autodiff as ad
from losgen.autodiff import GradientTape, Tensor
from losgen.nn import AdamState, forward, gaussian_reparameterize, gumbel_softmax, mlp, parameters

w = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
x = np.array([0.3, 0.1, -0.7])
with GradientTape() as tape:
    loss = ad.sum(ad.tanh(w * x))
(grad,) = tape.gradient(loss, [w])
print("analytic:", x * (1 - np.tanh(w.data * x) ** 2))
print("tape:    ", grad)

# %% [markdown]
# ## Checking a network against finite differences

# %%
rng = np.random.default_rng(0)
net = mlp([4, 16, 16, 1], hidden="relu", rng=rng)
xb = rng.normal(size=(8, 4))


def mse():
    return ad.mean(ad.square(forward(net, Tensor(xb))))


with GradientTape() as tape:
    value = mse()
grads = tape.gradient(value, parameters(net))

p, g = parameters(net)[0], grads[0]
h = 1e-4
old = p.data[2, 1]
p.data[2, 1] = old + h
up = float(mse().data)
p.data[2, 1] = old - h
down = float(mse().data)
p.data[2, 1] = old
print("tape:", g[2, 1], " central difference:", (up - down) / (2 * h))

# %% [markdown]
# ## Fitting a small regression with Adam

# %%
X = rng.uniform(-2, 2, size=(256, 1))
Y = np.sin(X)
net = mlp([1, 32, 32, 1], hidden="tanh", rng=rng)
opt = AdamState(lr=1e-2)
for step in range(1500):
    with GradientTape() as tape:
        loss = ad.mean(ad.square(forward(net, Tensor(X)) - Y))
    opt.step(parameters(net), tape.gradient(loss, parameters(net)))
    if step % 500 == 0:
        print(step, float(loss.data))
print("final mse:", float(loss.data))

# %% [markdown]
# ## Stochastic relaxations
#
# Gumbel-softmax gives a differentiable, nearly one-hot sample; its argmax
# is an exact categorical draw.  The Gaussian reparameterisation moves the
# randomness of `z ~ N(mu, sigma^2)` into a fixed noise input.

# %%
logits = np.tile([np.log(3.0), 0.0], (20_000, 1))
soft = gumbel_softmax(logits, temperature=0.2, seed=1)
print("first row:", soft[0].round(4), " P(argmax=0):", np.mean(soft.argmax(1) == 0))

z = gaussian_reparameterize(np.full(50_000, 2.0), np.full(50_000, np.log(0.25)), seed=2)
print("mean, variance:", z.mean().round(3), z.var().round(3))
