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
# # Ablations
#
# Each variant below changes one part of the model or the objective and is
# trained and evaluated on the same synthetic data.
# The numbers are from a short run and mostly show how to set up a comparison.

# %%
import attrs
import pandas as pd
from helpers.models import example_series, small_train_config

from patchad.bench import estimate_flops
from patchad.metrics import evaluate
from patchad.scoring import score_full_series
from patchad.trainer import train

# %%
train_series, test_series = example_series(length=2400)
base = small_train_config()

variants = {
    "full": base,
    "no channel mixer": attrs.evolve(
        base, model=attrs.evolve(base.model, use_channel_mixer=False)
    ),
    "separate channel mixers": attrs.evolve(
        base, model=attrs.evolve(base.model, share_channel_mixer=False)
    ),
    "no mix-representation mixer": attrs.evolve(
        base, model=attrs.evolve(base.model, use_mixrep_mixer=False)
    ),
    "relu": attrs.evolve(base, model=attrs.evolve(base.model, activation="relu")),
    "reconstruct from last layer": attrs.evolve(
        base, model=attrs.evolve(base.model, reconstruct_from="last_layer")
    ),
    "single patch size": attrs.evolve(
        base, model=attrs.evolve(base.model, patch_sizes=(5,))
    ),
    "contrast only": attrs.evolve(base, model=attrs.evolve(base.model, constraint=0.0)),
    "JSD": attrs.evolve(base, loss="jsd"),
    "L2": attrs.evolve(base, loss="l2"),
}

# %%
rows = []
for name, config in variants.items():
    model, _ = train(train_series, attrs.evolve(config, diagnostics=False))
    scores = score_full_series(test_series, model).scores
    report = evaluate(scores, test_series.labels, sigma=2.0)
    rows.append(
        {
            "variant": name,
            "parameters": model.param_count(),
            "flops": estimate_flops(model),
            "pa_f1": report.pa_f1,
            "auc": report.auc,
            "aff_f1": report.aff_f1,
            "vus_roc": report.vus_roc,
        }
    )

results = pd.DataFrame(rows).set_index("variant")
results

# %% [markdown]
# ## Threshold sweep
#
# The anomaly ratio matters more than most architecture choices for
# point-adjusted F1. AUC and VUS do not depend on it.

# %%
model, _ = train(train_series, base)
scores = score_full_series(test_series, model).scores
pd.DataFrame(
    {
        sigma: attrs.asdict(
            evaluate(scores, test_series.labels, sigma=sigma, max_buffer=0)
        )
        for sigma in (0.5, 1.0, 2.0, 5.0)
    }
).loc[["precision", "recall", "pa_f1", "f1_cls", "aff_f1"]]
