import logging

import attrs
import pytest

from patchad.autograd import Tensor, count_flops
from patchad.bench import bench, estimate_flops, latency_scaling, measure_latency
from patchad.errors import ConfigError
from patchad.model import ModelConfig, PatchADModel
from patchad.nn import Linear


class TestFlops:
    def test_linear(self, rng):
        layer = Linear(4, 3, rng)
        with count_flops() as counter:
            layer(Tensor(rng.normal(size=(2, 5, 4))))
        assert counter[0] == 2 * 2 * 5 * 3 * 4

    def test_counting_is_scoped(self, rng):
        layer = Linear(4, 3, rng)
        with count_flops() as counter:
            pass
        layer(Tensor(rng.normal(size=(1, 4))))
        assert counter[0] == 0

    def test_model_flops_grow_with_window(self, tiny_config):
        small = estimate_flops(PatchADModel(tiny_config))
        large = estimate_flops(PatchADModel(attrs.evolve(tiny_config, window=24)))

        assert small > 0
        assert large > small


class TestLatency:
    def test_bench_row(self, tiny_config):
        row = bench(tiny_config, iterations=3)

        assert row.window == 12
        assert row.param_count == PatchADModel(tiny_config).param_count()
        assert row.latency > 0

    def test_measure(self, tiny_model):
        assert measure_latency(tiny_model, iterations=2, warmup=0) > 0

    def test_scaling_rows(self, tiny_config):
        fit = latency_scaling(tiny_config, [12, 24, 36], iterations=2)

        assert [r.window for r in fit.rows] == [12, 24, 36]
        assert 0 <= fit.r_squared <= 1

    def test_scaling_skips_indivisible_windows(self, tiny_config, caplog):
        with caplog.at_level(logging.WARNING):
            fit = latency_scaling(tiny_config, [12, 18, 24], iterations=2)

        assert [r.window for r in fit.rows] == [12, 24]
        assert "Skipping window lengths [18]" in caplog.text

    def test_scaling_needs_two_windows(self, tiny_config):
        with pytest.raises(ConfigError, match="need at least two window lengths"):
            latency_scaling(tiny_config, [12, 18], iterations=2)

    @pytest.mark.slow
    def test_latency_is_linear_in_window(self):
        config = ModelConfig(channels=26, window=35, patch_sizes=(5, 7))
        fit = latency_scaling(config, [35, 70, 105, 140, 175], iterations=100)

        assert fit.slope > 0
        assert fit.r_squared >= 0.9
