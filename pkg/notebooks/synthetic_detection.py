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
# # Detecting synthetic anomalies
#
# This notebook walks through the whole pipeline on a generated series:
# train on clean data, score a series with injected anomalies, pick a threshold
# and evaluate the flags against the labels.

# %%
import matplotlib.pyplot as plt
import numpy as np
from helpers.models import example_series, small_train_config

from patchad.metrics import evaluate
from patchad.scoring import score_full_series, threshold_by_ratio
from patchad.spot import spot_threshold
from patchad.trainer import train

# %% [markdown]
# ## Data
#
# The training series is a noisy sine per channel.
# The test series has one anomaly of each kind the generator knows about:
# a global spike, a contextual point, a change of period, a burst of noise and a drift.

# %%
train_series, test_series = example_series()

fig, axes = plt.subplots(2, 1, figsize=(12, 5), sharex=True)
axes[0].plot(test_series.values.T, linewidth=0.6)
axes[1].fill_between(np.arange(test_series.length), test_series.labels, step="mid")
axes[1].set_ylabel("label")

# %% [markdown]
# ## Training
#
# Only normal data is seen during training.
# The log holds one record per step and a per-epoch summary including the
# entropy of the two views.

# %%
config = small_train_config()
model, log = train(train_series, config)

plt.plot([s.total for s in log.steps], label="total")
plt.plot([s.l_rec for s in log.steps], label="reconstruction")
plt.xlabel("step")
plt.legend()

# %%
log.epochs[-1]

# %% [markdown]
# ## Scoring
#
# Every timestamp gets the symmetric KL between the patch-wise and the
# within-patch view, averaged over the patch sizes.

# %%
scores = score_full_series(test_series, model).scores

fig, ax = plt.subplots(figsize=(12, 3))
ax.plot(scores, linewidth=0.6)
ax.fill_between(
    np.arange(test_series.length),
    0,
    scores.max() * test_series.labels,
    alpha=0.2,
    color="red",
)

# %% [markdown]
# ## Thresholds
#
# The simplest threshold flags a fixed share of the points.
# SPOT instead fits the tail of the scores on normal data and flags anything
# beyond an extreme quantile.

# %%
threshold, flags = threshold_by_ratio(scores, sigma=2.0)
print(f"ratio threshold {threshold:.4g} flags {flags.sum()} points")

calibration = score_full_series(train_series, model).scores
spot = spot_threshold(calibration, scores, q=1e-3, level=0.98)
print(f"SPOT flags {spot.flags.sum()} points (fallback: {spot.fallback})")

# %% [markdown]
# ## Evaluation
#
# Point-adjusted F1 credits a whole anomalous segment once any point of it is
# flagged, which is generous. The affiliation and VUS numbers are stricter.

# %%
print(evaluate(scores, test_series.labels, sigma=2.0).to_table())

# %%
print(evaluate(scores, test_series.labels, flags=spot.flags).to_table())
