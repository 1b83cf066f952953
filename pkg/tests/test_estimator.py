import numpy as np
import pytest
from conftest import make_seq
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sser.estimator import SSEREncoder
from sser.event_io import EventSequence, SceneConfig, generate_synthetic, slice_window
from sser.exceptions import ConfigurationError, ValidationError
from sser.validation import check_bits, check_dataset, check_dims, check_positive_int, check_random_state


@pytest.fixture(scope="module")
def scene():
    return generate_synthetic(SceneConfig(width=16, height=12, pattern="mixed", duration=60_000, seed=2))


@pytest.fixture(scope="module")
def fitted(scene):
    est = SSEREncoder(dims=(4, 4), decoder_layers=2, epochs=2, window_us=20_000, crop=8,
                      samples_per_epoch=2, random_state=5)
    return est.fit([scene])


def test_params_and_clone():
    est = SSEREncoder(cell="mgu", dims=(3,), epochs=7)
    p = est.get_params()
    assert p["cell"] == "mgu" and p["dims"] == (3,) and p["epochs"] == 7
    c = clone(est)
    assert c.get_params() == p and c is not est
    c.set_params(lr=0.5)
    assert c.lr == 0.5 and est.lr == 1e-3


def test_fit_transform_score(fitted, scene):
    assert len(fitted.loss_curve_) == 2
    assert fitted.n_channels_ == 4 and fitted.sensor_size_ == (16, 12)
    win = slice_window(scene, int(scene.t[0]), 20_000)
    rep = fitted.transform(win)
    assert rep.shape == (12, 16, 4)
    assert np.abs(rep).max() <= 1 and np.abs(rep).max() > 0
    batch = fitted.transform([win, win])
    assert batch.shape == (2, 12, 16, 4)
    np.testing.assert_array_equal(batch[0], rep)
    assert fitted.score([win]) < 0


def test_fit_is_deterministic(fitted, scene):
    again = clone(fitted).fit(scene)
    assert again.loss_curve_ == fitted.loss_curve_


def test_quantize_switches_transform(scene):
    est = SSEREncoder(dims=(4,), decoder_layers=1, epochs=1, window_us=20_000, crop=8, samples_per_epoch=1)
    est.fit(scene)
    win = slice_window(scene, int(scene.t[0]), 20_000)
    f = est.transform(win)
    q = est.quantize(8, [win])
    r = est.transform(win)
    assert not np.array_equal(f, r)
    assert np.abs(f - r).max() <= 4 * q.state_scale
    np.testing.assert_array_equal(est.dequantize().transform(win), f)
    with pytest.raises(ConfigurationError):
        est.quantize(1, [win])


def test_unfitted_and_bad_input(scene):
    with pytest.raises(NotFittedError):
        SSEREncoder().transform(scene)
    with pytest.raises(ConfigurationError):
        SSEREncoder(epochs=-1).fit(scene)
    with pytest.raises(ValidationError):
        SSEREncoder().fit([np.zeros((3, 4))])
    with pytest.raises(ConfigurationError):
        SSEREncoder().fit(EventSequence.empty(4, 4))


def test_validation_helpers():
    a = make_seq([(1, 0, 0, 1)], 4, 4)
    assert check_dataset(a) == [a]
    with pytest.raises(ValidationError):
        check_dataset([a, make_seq([(1, 0, 0, 1)], 5, 4)])
    assert check_dataset([], allow_empty=True) == []
    assert check_bits(2) == 2 and check_bits(12) == 12
    for bad in (1, 13):
        with pytest.raises(ConfigurationError):
            check_bits(bad)
    with pytest.raises(ConfigurationError):
        check_positive_int(True, "x")
    with pytest.raises(ConfigurationError):
        check_positive_int(1.5, "x")
    assert check_dims(3) == (3,) and check_dims([2, 4]) == (2, 4)
    with pytest.raises(ConfigurationError):
        check_dims([])
    assert check_random_state(None) == 0 and check_random_state(9) == 9
    assert 0 <= check_random_state(np.random.default_rng(0)) < 2**31
