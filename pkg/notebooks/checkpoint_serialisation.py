# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#       jupytext_version: 1.16.4
#   kernelspec:
#     display_name: Python 3 (ipykernel)
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Checkpoints
#
# A trained model is stored in a small binary file together with the
# normalisation statistics its inputs need.
# The header holds the model config as JSON, so the file describes itself.

# %%
import tempfile
from pathlib import Path

import numpy as np
from helpers.models import example_series, small_train_config

from patchad.checkpoint import load_checkpoint, save_checkpoint
from patchad.scoring import score_full_series
from patchad.trainer import train

# %%
train_series, test_series = example_series(length=1200)
model, _ = train(train_series, small_train_config())

# %%
workdir = Path(tempfile.mkdtemp())
path = workdir / "model.padc"
save_checkpoint(path, model, train_series.stats)
print(f"{path.stat().st_size} bytes for {model.param_count()} parameters")

# %% [markdown]
# ## Reading it back
#
# A checkpoint is rebuilt from its own config.
# The restored model gives exactly the same scores.

# %%
restored = load_checkpoint(path)
restored.model.config

# %%
before = score_full_series(test_series, model).scores
after = score_full_series(test_series, restored.model).scores
assert np.array_equal(before, after)

# %% [markdown]
# Parameters are written in a fixed order, so saving a restored model
# reproduces the file byte for byte.

# %%
again = workdir / "again.padc"
save_checkpoint(again, restored.model, restored.stats)
assert again.read_bytes() == path.read_bytes()

# %% [markdown]
# ## Corruption
#
# Any damage to the file is reported with the section that failed to parse.

# %%
truncated = workdir / "truncated.padc"
truncated.write_bytes(path.read_bytes()[:-100])
try:
    load_checkpoint(truncated)
except Exception as exc:  # noqa: BLE001
    print(f"{type(exc).__name__}: {exc}")
