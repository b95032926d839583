import numpy as np
import pytest

from hcdkit.collab import PerturbConfig
from hcdkit.hcd import (
    ABLATION_SCHEMES,
    HcdConfig,
    ablation_schemes,
    hcd_rescale,
    iteration_sweep,
    param_sweep,
    quality,
    run_corpus,
    summarize,
)


class TestConfig:
    def test_defaults(self):
        c = HcdConfig()
        assert c.scheme == "hierarchical" and c.hr.iters == c.lr.iters == 15

    @pytest.mark.parametrize("scheme,hr,lr,direction", [
        ("hierarchical", 15, 15, "descend"),
        ("lr_only", 0, 15, "descend"),
        ("hr_only", 15, 0, "descend"),
        ("baseline", 0, 0, "descend"),
        ("adversarial_lr", 0, 15, "ascend"),
    ])
    def test_effective(self, scheme, hr, lr, direction):
        h, l = HcdConfig.make(scheme).effective
        assert (h.iters, l.iters, l.direction) == (hr, lr, direction)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            HcdConfig(scheme="both")

    def test_ascending_hr_rejected(self):
        with pytest.raises(ValueError, match="HR phase"):
            HcdConfig(hr=PerturbConfig(direction="ascend"))

    def test_ascending_lr_needs_adversarial(self):
        with pytest.raises(ValueError, match="adversarial_lr"):
            HcdConfig(lr=PerturbConfig(direction="ascend"), scheme="lr_only")


class TestRescale:
    def test_baseline_is_plain_rescaling(self, quick_chain, patches):
        res = hcd_rescale(quick_chain, patches, HcdConfig.make("baseline"))
        x = np.clip(quick_chain.down(patches), 0, 1)
        assert np.array_equal(res.x_out, x)
        assert np.array_equal(res.y_recon, quick_chain.up(x))
        p, s = quality(quick_chain.up(x), patches)
        assert np.array_equal(res.psnr_y, p) and np.array_equal(res.ssim_y, s)

    @pytest.mark.parametrize("scheme", ["hierarchical", "lr_only", "hr_only", "baseline",
                                        "adversarial_lr"])
    def test_valid_output(self, quick_chain, patches, scheme):
        res = hcd_rescale(quick_chain, patches, HcdConfig.make(scheme, n=4))
        assert res.x_out.shape == (4, 3, 12, 12)
        assert res.x_out.min() >= 0 and res.x_out.max() <= 1
        assert np.array_equal(quick_chain.up(res.x_out), res.y_recon)
        assert res.upscale_seconds > 0 and res.downscale_seconds >= 0

    def test_hierarchical_ny0_equals_lr_only(self, quick_chain, patches):
        cfg = HcdConfig.make("hierarchical", n=5)
        a = hcd_rescale(quick_chain, patches, cfg.with_(hr=cfg.hr.with_(iters=0)))
        b = hcd_rescale(quick_chain, patches, cfg.with_(scheme="lr_only"))
        assert np.array_equal(a.x_out, b.x_out) and np.array_equal(a.psnr_y, b.psnr_y)

    def test_hierarchical_nx0_equals_hr_only(self, quick_chain, patches):
        cfg = HcdConfig.make("hierarchical", n=5)
        a = hcd_rescale(quick_chain, patches, cfg.with_(lr=cfg.lr.with_(iters=0)))
        b = hcd_rescale(quick_chain, patches, cfg.with_(scheme="hr_only"))
        assert np.array_equal(a.x_out, b.x_out)

    def test_lr_phase_starts_from_downscaled_hr_example(self, quick_chain, patches):
        cfg = HcdConfig.make("hierarchical", n=3)
        res = hcd_rescale(quick_chain, patches, cfg)
        x0 = quick_chain.down(res.hr_run.final_input)
        assert np.allclose(res.x_out, np.clip(x0 + res.lr_run.final_delta, 0, 1), atol=0)

    def test_lr_target_is_original(self, quick_chain, patches):
        res = hcd_rescale(quick_chain, patches, HcdConfig.make("hierarchical", n=3))
        x = quick_chain.down(res.hr_run.final_input) + res.lr_run.final_delta
        per = ((quick_chain.up(x) - patches) ** 2).mean(axis=(1, 2, 3))
        assert np.allclose(res.lr_run.loss_trace[-1], per, rtol=1e-12)

    def test_collaborative_beats_adversarial(self, quick_chain, patches):
        base = hcd_rescale(quick_chain, patches, HcdConfig.make("baseline")).psnr_y
        col = hcd_rescale(quick_chain, patches, HcdConfig.make("hierarchical")).psnr_y
        adv = hcd_rescale(quick_chain, patches, HcdConfig.make("adversarial_lr")).psnr_y
        assert (col > base).all() and (adv < base).all()

    def test_single_image_3d(self, quick_chain, patches):
        res = hcd_rescale(quick_chain, patches[0], HcdConfig.make("lr_only", n=2))
        assert res.x_out.shape == (1, 3, 12, 12)

    def test_bad_dims(self, quick_chain):
        with pytest.raises(ValueError, match="divisible"):
            hcd_rescale(quick_chain, np.zeros((1, 3, 9, 8)))

    def test_bad_range(self, quick_chain):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            hcd_rescale(quick_chain, np.full((1, 3, 8, 8), 2.0))

    def test_multi_round(self, quick_chain, patches):
        one = hcd_rescale(quick_chain, patches, HcdConfig.make(n=3))
        two = hcd_rescale(quick_chain, patches, HcdConfig.make(n=3).with_(rounds=2))
        assert two.lr_run.max_radius_excess() <= 1e-9
        assert two.psnr_y.mean() >= one.psnr_y.mean() - 0.05

    def test_deterministic(self, quick_chain, patches):
        cfg = HcdConfig.make(n=3, init="uniform_small", seed=4)
        a, b = hcd_rescale(quick_chain, patches, cfg), hcd_rescale(quick_chain, patches, cfg)
        assert np.array_equal(a.x_out, b.x_out)


class TestCorpus:
    def test_order_and_jobs(self, quick_chain, patches):
        cfg = HcdConfig.make(n=2)
        serial = run_corpus(quick_chain, patches, cfg)
        threaded = run_corpus(quick_chain, patches, cfg, jobs=3)
        assert [r.psnr_y[0] for r in serial] == [r.psnr_y[0] for r in threaded]

    def test_batch_matches_single(self, quick_chain, patches):
        cfg = HcdConfig.make(n=3)
        single = summarize(run_corpus(quick_chain, patches, cfg))
        batched = summarize(run_corpus(quick_chain, patches, cfg, batch=3))
        assert batched["n"] == 4
        assert batched["psnr_mean"] == pytest.approx(single["psnr_mean"], abs=1e-9)

    def test_empty(self, quick_chain):
        with pytest.raises(ValueError):
            run_corpus(quick_chain, [], HcdConfig())

    def test_ablation_table(self, quick_chain, patches):
        table = ablation_schemes(quick_chain, patches, HcdConfig.make(n=3))
        assert list(table) == list(ABLATION_SCHEMES)
        assert all(t["n"] == 4 for t in table.values())
        base = hcd_rescale(quick_chain, patches, HcdConfig.make("baseline"))
        assert table["baseline"]["psnr_mean"] == pytest.approx(base.psnr_y.mean(), abs=1e-12)

    def test_iteration_sweep(self, quick_chain, patches):
        rows = iteration_sweep(quick_chain, patches, [0, 2])
        assert [r["value"] for r in rows] == [0, 2]
        assert rows[1]["psnr_mean"] > rows[0]["psnr_mean"]

    def test_iteration_sweep_validation(self, quick_chain, patches):
        with pytest.raises(ValueError):
            iteration_sweep(quick_chain, patches, [])
        with pytest.raises(ValueError):
            iteration_sweep(quick_chain, patches, [-1])

    def test_param_sweep(self, quick_chain, patches):
        rows = param_sweep(quick_chain, patches, "alpha", [0.01, 0.1], HcdConfig.make(n=2))
        assert [r["param"] for r in rows] == ["alpha", "alpha"]
