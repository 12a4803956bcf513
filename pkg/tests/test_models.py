import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acoustic_eeg import nn
from acoustic_eeg.dataset import SyntheticSpec, fit_zscore, synth_utterances
from acoustic_eeg.errors import EmptySplit, NonFiniteLoss, ShapeMismatch, TopologyMismatch
from acoustic_eeg.formats import read_checkpoint
from acoustic_eeg.models import (
    Discriminator, DiscriminatorJudgement, Generator, RegressionModel, TrainConfig, TrainingLog,
    discriminator_loss, generate, generator_loss, init_generator_from_regression,
    model_from_parameters, pad_batch, regression_forward, save_model, train_gan, train_regression,
)
from acoustic_eeg.reduction import FEATURE_SETS

LN2 = math.log(2.0)
probs = st.floats(1e-6, 1 - 1e-6)


def _judge(p_sf, p_se=0.5):
    return DiscriminatorJudgement(p_sf=np.array([p_sf]), p_se=np.array([p_se]))


def _linear_pairs(n, d=3, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(d, 13)) / np.sqrt(13)
    out = []
    for _ in range(n):
        x = 0.5 * rng.normal(size=(int(rng.integers(20, 40)), 13))
        out.append((x, x @ M.T))
    return out


@pytest.fixture(scope="module")
def small_corpus():
    _, items = synth_utterances(SyntheticSpec(n_utterances=12, frames=(15, 25), eeg_dim=4, seed=3))
    pairs = [(m, e) for _, m, e in items]
    return fit_zscore(pairs).apply(pairs)


def test_generator_loss_values():
    x = np.zeros((4, 3))
    assert generator_loss(_judge(0.5), x, x) == pytest.approx(LN2, abs=1e-12)
    assert round(generator_loss(_judge(0.5), x, x), 4) == 0.6931
    assert generator_loss(_judge(1.0), x, x) < 1e-6
    fake = np.full((4, 3), math.sqrt(2.0))
    assert generator_loss(_judge(0.5), fake, x) == pytest.approx(LN2 + 1.0, abs=1e-12)


def test_discriminator_loss_values():
    assert discriminator_loss(_judge(0.5, 0.5)) == pytest.approx(2 * LN2, abs=1e-12)
    assert discriminator_loss(_judge(0.0, 1.0)) < 1e-6
    assert discriminator_loss(_judge(0.1, 0.9)) == pytest.approx(-2 * math.log(0.9), abs=1e-12)
    assert round(discriminator_loss(_judge(0.1, 0.9)), 4) == 0.2107


def test_judgement_is_clamped_to_open_interval():
    j = _judge(0.0, 1.0)
    assert 0.0 < j.p_sf[0] < 1.0 and 0.0 < j.p_se[0] < 1.0
    assert np.isfinite(discriminator_loss(_judge(1.0, 0.0)))


@given(probs, probs, st.integers(0, 1000))
def test_loss_closed_forms(p_sf, p_se, seed):
    rng = np.random.default_rng(seed)
    fake, real = rng.normal(size=(2, 5, 3))
    sq = sum((fake[t, d] - real[t, d]) ** 2 for t in range(5) for d in range(3)) / 15
    j = _judge(p_sf, p_se)
    assert abs(generator_loss(j, fake, real) - (-math.log(p_sf) + 0.5 * sq)) < 1e-12
    assert abs(discriminator_loss(j) - (-math.log(p_se) - math.log(1 - p_sf))) < 1e-12


@given(st.floats(1e-4, 0.99), st.floats(1e-4, 0.009), probs)
def test_losses_move_in_opposite_directions_with_p_sf(p, dp, p_se):
    x = np.zeros((2, 2))
    lo, hi = _judge(p, p_se), _judge(p + dp, p_se)
    assert generator_loss(hi, x, x) < generator_loss(lo, x, x)
    assert discriminator_loss(hi) > discriminator_loss(lo)


def test_generator_loss_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        generator_loss(_judge(0.5), np.zeros((3, 2)), np.zeros((4, 2)))


def test_forward_shapes_and_zero_head():
    model = RegressionModel(5, (4, 2), seed=0)
    assert regression_forward(model, np.ones((1, 13))).shape == (1, 5)
    model.head.params["W"][...] = 0.0
    np.testing.assert_array_equal(model.predict(np.ones((7, 13))), 0.0)
    with pytest.raises(ShapeMismatch):
        model.predict(np.ones((3, 12)))


def _bigru_by_hand(seq, layer):
    fwd, bwd = layer.fwd.cell_params(), layer.bwd.cell_params()
    T, H = len(seq), layer.hidden_size
    f, b = np.zeros((T, H)), np.zeros((T, H))
    h = np.zeros(H)
    for t in range(T):
        h = nn.gru_cell_forward(seq[t], h, fwd)
        f[t] = h
    h = np.zeros(H)
    for t in reversed(range(T)):
        h = nn.gru_cell_forward(seq[t], h, bwd)
        b[t] = h
    return np.concatenate([f, b], axis=1)


def test_composition_oracle():
    model = RegressionModel(6, (4, 2), seed=5)
    x = np.random.default_rng(9).normal(size=(3, 13))
    h1 = _bigru_by_hand(x, model.layer1)
    h2 = _bigru_by_hand(h1, model.layer2)
    want = nn.time_distributed_dense(h2, model.head.params["W"], model.head.params["b"])
    np.testing.assert_allclose(regression_forward(model, x), want, atol=1e-10)


@pytest.mark.parametrize("set_id", [1, 2, 3])
def test_generator_output_dims(set_id):
    dim = FEATURE_SETS[set_id].reduced_dim
    assert generate(Generator(dim, (4, 2)), np.zeros((5, 13))).shape == (5, dim)


def test_generate_is_deterministic(rng):
    gen = Generator(3, (4, 2))
    x = rng.normal(size=(6, 13))
    np.testing.assert_array_equal(generate(gen, x), generate(gen, x))


def test_discriminator_output_in_open_interval(rng):
    disc = Discriminator(eeg_dim=3, branch_sizes=(4, 2))
    p = disc.forward(rng.normal(size=(5, 4, 13)), rng.normal(size=(5, 4, 3)) * 50)
    assert p.shape == (4,)
    assert np.all((p > 0) & (p < 1))
    with pytest.raises(ShapeMismatch):
        disc.forward(np.zeros((5, 2, 13)), np.zeros((4, 2, 3)))


def test_warm_start_is_bit_identical(rng):
    reg = RegressionModel(3, (4, 2), seed=1)
    gen = init_generator_from_regression(Generator(3, (4, 2), seed=2), reg)
    x = rng.normal(size=(8, 13))
    np.testing.assert_array_equal(generate(gen, x), regression_forward(reg, x))
    gen.head.params["b"] += 1.0
    assert not np.any(reg.head.params["b"])


def test_warm_start_topology_mismatch():
    with pytest.raises(TopologyMismatch):
        init_generator_from_regression(Generator(3, (4, 2)), RegressionModel(3, (4, 3)))
    with pytest.raises(TopologyMismatch):
        init_generator_from_regression(Generator(3, (4, 2)), RegressionModel(3, (4, 2), "gru"))


def test_one_gan_step_changes_generator(small_corpus):
    reg = RegressionModel(4, (4, 2), seed=0)
    gen = init_generator_from_regression(Generator(4, (4, 2)), reg)
    x = small_corpus[0][0]
    before = generate(gen, x)
    train_gan(gen, Discriminator(4, (4, 2)), small_corpus, config=TrainConfig(epochs=1, batch_size=len(small_corpus)))
    assert np.abs(generate(gen, x) - before).max() > 0
    np.testing.assert_array_equal(regression_forward(reg, x), before)


def test_first_discriminator_loss_with_neutral_head(small_corpus):
    disc = Discriminator(4, (4, 2))
    disc.head.params["W"][...] = 0.0
    log = train_gan(Generator(4, (4, 2)), disc, small_corpus,
                    config=TrainConfig(epochs=1, batch_size=len(small_corpus)))
    assert log.series("train", "discriminator")[0] == pytest.approx(2 * LN2, abs=1e-12)
    assert round(log.series("train", "discriminator")[0], 4) == 1.3863


def test_gan_losses_finite_and_logged(small_corpus):
    log = train_gan(Generator(4, (4, 2)), Discriminator(4, (4, 2)), small_corpus[:10], small_corpus[10:],
                    TrainConfig(epochs=5, batch_size=4))
    for name in ("generator", "discriminator"):
        series = log.series("train", name)
        assert len(series) == 5 and np.all(np.isfinite(series))
    assert len(log.series("val", "mse")) == 5


def test_zero_lr_leaves_parameters_and_loss_fixed(small_corpus):
    model = RegressionModel(4, (4, 2), seed=0)
    before = {k: v.copy() for k, v in model.named_parameters().items()}
    log = train_regression(model, small_corpus, config=TrainConfig(epochs=3, batch_size=5, lr=0.0))
    for k, v in model.named_parameters().items():
        np.testing.assert_array_equal(v, before[k])
    losses = log.series("train", "mse")
    np.testing.assert_allclose(losses, losses[0], rtol=1e-12)


def test_training_is_deterministic(small_corpus):
    cfg = TrainConfig(epochs=3, batch_size=5, seed=4)
    a, b = RegressionModel(4, (4, 2), seed=0), RegressionModel(4, (4, 2), seed=0)
    train_regression(a, small_corpus, small_corpus[:3], cfg)
    train_regression(b, small_corpus, small_corpus[:3], cfg)
    for k, v in a.named_parameters().items():
        np.testing.assert_array_equal(v, b.named_parameters()[k])


def test_noise_free_linear_task():
    pairs = _linear_pairs(40)
    model = RegressionModel(3, (8, 4), seed=0)
    log = train_regression(model, pairs[:32], pairs[32:], TrainConfig(epochs=50, batch_size=8, lr=1e-2))
    train = log.series("train", "mse")
    assert train[49] < 0.5 * train[0]
    assert math.sqrt(log.series("val", "mse").min()) < 0.05


def test_best_validation_parameters_are_kept():
    pairs = _linear_pairs(20, seed=1)
    model = RegressionModel(3, (4, 2), seed=0)
    log = train_regression(model, pairs[:16], pairs[16:], TrainConfig(epochs=8, batch_size=4, lr=3e-2))
    from acoustic_eeg.models import batched_mse
    assert batched_mse(model, pairs[16:]) == pytest.approx(log.series("val", "mse").min(), rel=1e-12)


def test_training_errors(small_corpus):
    with pytest.raises(EmptySplit):
        train_regression(RegressionModel(4, (4, 2)), [])
    with pytest.raises(EmptySplit):
        train_gan(Generator(4, (4, 2)), Discriminator(4, (4, 2)), [])
    bad = [(m, np.full_like(e, np.nan)) for m, e in small_corpus[:2]]
    with pytest.raises(NonFiniteLoss):
        train_regression(RegressionModel(4, (4, 2)), bad, config=TrainConfig(epochs=1))


def test_pad_batch():
    x, mask = pad_batch([np.ones((2, 3)), np.ones((4, 3))])
    assert x.shape == (4, 2, 3)
    np.testing.assert_array_equal(mask, [[1, 1], [1, 1], [0, 1], [0, 1]])
    assert not np.any(x[2:, 0])


def test_checkpoint_round_trip(tmp_path, rng):
    model = RegressionModel(5, (4, 3), "gru", seed=2)
    save_model(tmp_path / "a.nnw", model)
    loaded = model_from_parameters(read_checkpoint(tmp_path / "a.nnw"))
    assert loaded.topology() == model.topology()
    # weights are stored as f32: compare against the f32-rounded original
    model.load_parameters({k: v.astype(np.float32) for k, v in model.named_parameters().items()})
    x = rng.normal(size=(9, 13))
    np.testing.assert_array_equal(loaded.predict(x), model.predict(x))
    save_model(tmp_path / "b.nnw", loaded)
    assert (tmp_path / "a.nnw").read_bytes() == (tmp_path / "b.nnw").read_bytes()


def test_training_log_csv_round_trip(tmp_path):
    log = TrainingLog()
    log.add(1, "train", "mse", 0.1 + 0.2)
    log.add(1, "val", "mse", 1 / 3)
    log.write_csv(tmp_path / "log.csv")
    assert TrainingLog.read_csv(tmp_path / "log.csv").rows == log.rows
