import numpy as np
import pytest
import torch
from PIL import Image

import cerfgan.baselines.stargan as stargan_mod
from cerfgan import losses, networks
from cerfgan.baselines import (BaselineSpec, CGANConfig, CGANGenerator, CGANMCD, StarGANTrainer, build_stargan,
                               build_stargan_mcd)
from cerfgan.baselines.cgan_mnist import (N_CLASSES, classify, conditional_fidelity, train_cgan_mcd,
                                          train_digit_classifier, write_digit_grid)
from cerfgan.baselines.probe import (evaluate_translator, identity_translator, run_stargan_failure_probe, summarize,
                                     write_table)
from cerfgan.data import make_toy_translation_dataset
from cerfgan.domains import build_registry, label_batch
from cerfgan.networks import MCD, NetConfig, build_cerfgan, count_parameters
from cerfgan.trainer import TrainConfig


def registry(n):
    return build_registry({"domains": [f"d{j}" for j in range(n)], "pairs": "all"})


def test_full_scale_stargan_parameter_count():
    model = build_stargan(registry(16), BaselineSpec(width=1.0))
    total = model.parameter_counts()["total"]
    assert abs(total - 53.2e6) / 53.2e6 < 0.03
    ours = sum(count_parameters(m) for m in build_cerfgan(NetConfig(16)))
    assert 0.59 <= ours / total <= 0.69


def test_spec_validation():
    with pytest.raises(ValueError):
        BaselineSpec(lambda_cls=-1)
    with pytest.raises(ValueError):
        BaselineSpec(variant="pix2pix")
    with pytest.raises(ValueError):
        BaselineSpec(width=0)


def test_generator_and_discriminator_shapes():
    model = build_stargan(registry(3), BaselineSpec(width=0.125), image_size=64)
    x = torch.randn(2, 3, 64, 64)
    y = model.generator(x, label_batch([0, 2], 3))
    assert y.shape == x.shape and y.abs().max() <= 1
    src, cls = model.discriminator(x)
    assert src.shape == (2, 1, 1, 1) and cls.shape == (2, 3)


def _toy_trainer(spec, **kw):
    cfg = TrainConfig(resolution=64, n_down=5, width=0.125, total_epochs=1, iterations_per_epoch=2, seed=0, **kw)
    return StarGANTrainer(cfg, registry(2), spec)


def _batch(seed=0):
    return torch.rand(2, 3, 64, 64, generator=torch.Generator().manual_seed(seed)) * 2 - 1


@pytest.mark.parametrize("lam", [0.0, 10.0])
def test_classification_term_presence(lam, monkeypatch):
    tr = _toy_trainer(BaselineSpec(lambda_cls=lam, width=0.125))
    calls = []
    orig = losses.classification_loss
    monkeypatch.setattr(losses, "classification_loss", lambda *a: calls.append(1) or orig(*a))
    tr.d_step(_batch(0), _batch(1), 1, 0)
    rep = tr.g_step(_batch(1), 1, 0)
    assert len(calls) == (2 if lam else 0)
    assert ("classification" in rep.extra) == bool(lam)


def test_stargan_mcd_has_no_classifier_and_shares_selection(monkeypatch):
    model = build_stargan_mcd(registry(2), BaselineSpec(lambda_cls=10.0, width=0.125), 64, n_down=5)
    assert isinstance(model.discriminator, MCD)
    assert model.spec.lambda_cls == 0 and model.spec.variant == "stargan-mcd"
    assert stargan_mod.select_adversarial is networks.select_adversarial

    tr = _toy_trainer(model.spec)
    calls = []
    monkeypatch.setattr(losses, "classification_loss", lambda *a: calls.append("cls"))
    orig = networks.select_adversarial
    monkeypatch.setattr(stargan_mod, "select_adversarial", lambda d, c: calls.append("select") or orig(d, c))
    tr.d_step(_batch(0), _batch(1), 1, 0)
    tr.g_step(_batch(1), 1, 0)
    assert calls == ["select", "select", "select"]


def test_stargan_mcd_discriminator_is_frozen_in_generator_step():
    tr = _toy_trainer(BaselineSpec(variant="stargan-mcd", width=0.125))
    before = [p.clone() for p in tr.d_net.parameters()] + [b.clone() for b in tr.d_net.buffers()]
    tr.g_step(_batch(), 0, 1)
    after = list(tr.d_net.parameters()) + list(tr.d_net.buffers())
    assert all(torch.equal(a, b) for a, b in zip(before, after))


def test_cgan_shapes_and_label_selection():
    g, m = CGANGenerator(), CGANMCD()
    z = torch.randn(5, 100)
    x = g(z, label_batch([0, 1, 2, 3, 9], N_CLASSES))
    assert x.shape == (5, 1, 28, 28) and x.abs().max() <= 1
    d = m(x)
    assert d.shape == (5, 10)
    # label 0 reads adversarial dimension 0
    assert torch.equal(networks.select_adversarial(d, label_batch([0] * 5, 10)), d[:, 0])


def test_cgan_config_bounds():
    with pytest.raises(ValueError):
        CGANConfig(epochs=21)
    with pytest.raises(ValueError):
        CGANConfig(z_dim=0)


def test_digit_grid_layout(tmp_path):
    path = write_digit_grid(CGANGenerator(), tmp_path / "grid.png", columns=7)
    with Image.open(path) as im:
        assert im.size == (7 * 28, 10 * 28)


def test_cgan_training_smoke_and_fidelity_bounds():
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (64, 28, 28), dtype=np.uint8)
    labels = np.arange(64, dtype=np.uint8) % 10
    res = train_cgan_mcd(images, labels, CGANConfig(epochs=1, batch_size=16))
    assert len(res.history) == 4 and all(np.isfinite(res.history).ravel())
    clf = train_digit_classifier(images, labels, epochs=1)
    assert classify(clf, torch.zeros(3, 1, 28, 28)).shape == (3,)
    f = conditional_fidelity(res.generator, clf, n=50)
    assert 0.0 <= f <= 1.0


def test_probe_calibration_points(tmp_path):
    test = make_toy_translation_dataset("color-inversion", 16, np.random.default_rng(1))
    ident = summarize("identity", None, evaluate_translator(identity_translator(), test, 64))
    assert ident.l1_input == 0 and ident.frac_closer_to_input == 1.0
    perfect = summarize("perfect", None, evaluate_translator(lambda x, t: -x, test, 64))
    assert perfect.l1_target < 1e-6 and perfect.frac_closer_to_input == 0.0
    path = write_table([ident, perfect], tmp_path / "t.csv")
    assert path.read_text().splitlines()[0].startswith("model,lambda_cls,l1_input,l1_target")


def test_probe_table_is_deterministic(tmp_path):
    train = make_toy_translation_dataset("color-inversion", 16, np.random.default_rng(0))
    test = make_toy_translation_dataset("color-inversion", 16, np.random.default_rng(1))
    cfg = TrainConfig(resolution=64, n_down=5, width=0.125, total_epochs=1, iterations_per_epoch=2, seed=0)
    spec = BaselineSpec(width=0.125)
    tables = []
    for name in ("a", "b"):
        rows = run_stargan_failure_probe(registry(2), train, test, cfg, tmp_path / name, spec=spec)
        assert [r.model for r in rows] == ["identity", "stargan", "stargan", "cerfgan"]
        tables.append([(r.l1_input, r.l1_target) for r in rows])
    assert tables[0] == tables[1]
