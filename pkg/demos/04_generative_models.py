# %% [markdown]
# # Training the tabular VAE and the conditional GAN
#
# Both models see each row as three one-hot blocks `[LOS, NLOS]`.  This
# script trains them briefly on a small table, compares the per-angle LOS
# frequencies of their samples with the training data, and round-trips a
# model file.  `losgen reproduce` runs the full-size experiment.

# %%
import tempfile
from pathlib import Path

import numpy as np

from losgen.channel import EXPERIMENT_ANGLES, generate_dataset
from losgen.metrics import compare_datasets, distribution_summary
from losgen.models import TrainingConfig, load_model, save_model, train_gan, train_vae

train = generate_dataset(EXPERIMENT_ANGLES, 5000, seed=1)
print("training LOS fractions:", train.los_fraction())

# %% [markdown]
# ## VAE
#
# The loss is a weighted reconstruction cross-entropy plus the closed-form
# Gaussian KL.  Sampling decodes standard-normal latents and takes the argmax
# of each block.

# %%
vae, vae_curve = train_vae(train, TrainingConfig(epochs=10, seed=0))
_, loss = vae_curve.series("loss")
print("VAE loss by epoch:", np.round(loss, 3))

# %% [markdown]
# ## GAN
#
# The generator is conditioned on a (column, category) pair.  At training
# time the real batch is resampled to match the condition and the generator
# also pays a cross-entropy penalty for ignoring it.

# %%
gan, gan_curve = train_gan(train, TrainingConfig(epochs=10, seed=0))
_, lf = gan_curve.series("los_fraction_45")
print("GAN LOS fraction at 45° by epoch:", np.round(lf, 3))

for c, cat in ((2, 0), (2, 1)):
    s = gan.sample(2000, seed=5, cond=(c, cat))
    print(f"conditioned on column {c}, category {cat}: share LOS = {np.mean(s.cells[:, c] == 1):.3f}")

# %% [markdown]
# ## Synthetic versus training data

# %%
for name, model in (("vae", vae), ("gan", gan)):
    synth = model.sample(train.rows, seed=2)
    for row in distribution_summary(train, synth):
        print(name, row["angle"], f"real={row['real_los']:.3f} synthetic={row['synthetic_los']:.3f}")
    print(name, {a: round(m["wasserstein"], 4) for a, m in compare_datasets(train, synth).items()})

# %% [markdown]
# ## Model files
#
# A saved model reproduces its samples exactly.

# %%
with tempfile.TemporaryDirectory() as d:
    path = save_model(gan, Path(d) / "gan.model")
    back = load_model(path)
    print(path.stat().st_size, "bytes;", "same samples:", back.sample(1000, 3) == gan.sample(1000, 3))
