# %% [markdown]
# # The `losgen` command line
#
# Each stage is a subcommand, and each one writes a `.manifest.json` next to
# its output.  `losgen replay` re-runs a manifest and checks that the
# artifacts come out byte-identical.  Here the commands are called through
# `losgen.cli.main` inside a temporary directory; the shell equivalents are
# shown in the comments.

# %%
import json
import os
import tempfile
from pathlib import Path

from losgen.cli import main

work = Path(tempfile.mkdtemp())
os.chdir(work)

# losgen stationary
main(["stationary"])

# %%
# losgen gen-traces --rows 5000 --seed 1 --out traces.csv
main(["gen-traces", "--rows", "5000", "--seed", "1", "--out", "traces.csv"])
print(Path("traces.csv").read_text().splitlines()[:3])

# %%
# losgen train --model vae --data traces.csv --epochs 5 --track-angle 60 --out vae.model
main(["train", "--model", "vae", "--data", "traces.csv", "--epochs", "5", "--track-angle", "60", "--out", "vae.model"])
print(Path("vae.model.curve.csv").read_text().splitlines()[:4])

# %%
# losgen sample --model vae.model --rows 5000 --seed 2 --out synth.csv
# losgen evaluate --real traces.csv --synth synth.csv --format table --out report.txt
main(["sample", "--model", "vae.model", "--rows", "5000", "--seed", "2", "--out", "synth.csv"])
main(["evaluate", "--real", "traces.csv", "--synth", "synth.csv", "--format", "table", "--out", "report.txt"])

# %% [markdown]
# ## Manifests and replay

# %%
manifest = json.loads(Path("vae.model.manifest.json").read_text())
print({k: manifest[k] for k in ("command", "argv", "seed", "outputs")})
print("replay exit code:", main(["replay", "vae.model.manifest.json"]))

# %% [markdown]
# ## Errors map to exit codes
#
# 2 for usage, 3 for invalid data or model files, 4 for runtime failures.

# %%
print(main(["train", "--model", "vae", "--data", "traces.csv", "--epochs", "0"]))
Path("bad.csv").write_text("angle_70\n1\n0\n")
print(main(["train", "--model", "vae", "--data", "bad.csv"]))
