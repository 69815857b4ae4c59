import numpy as np
import pytest

from alignlab.model import DualModel, load_checkpoint, phi_inputs, save_checkpoint
from alignlab.nn import AdamState, FrozenNetworkError, Mlp, adam_step, he_init


def _zero_model(d=4, h=3):
    def zeros(sizes):
        return Mlp(sizes, [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(o) for o in sizes[1:]])
    return DualModel(zeros([d, h, h, 1]), zeros([d + 1, h, h, 1]))


def test_dimensions_validated(rng):
    with pytest.raises(ValueError):
        DualModel(he_init([4, 3, 1], rng), he_init([4, 3, 1], rng))


def test_zero_model_predicts_half():
    m = _zero_model()
    assert m.predict_y(np.ones(4)) == 0.5
    assert m.predict_beta(np.ones(4), 1) == 0.5


def test_phi_inputs_appends_label():
    out = phi_inputs(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0, 1]))
    assert np.array_equal(out, [[1, 2, 0], [3, 4, 1]])


def test_beta_for_each_label_is_an_independent_probability(rng):
    m = DualModel.create(5, 4, rng)
    x = rng.normal(size=5)
    b0, b1 = m.predict_beta(x, 0), m.predict_beta(x, 1)
    assert 0 < b0 < 1 and 0 < b1 < 1


def test_predict_beta_rejects_non_binary_label(rng):
    m = DualModel.create(3, 2, rng)
    with pytest.raises(ValueError):
        m.predict_beta(np.zeros(3), 2)


def test_predict_y_ignores_phase_and_phi(rng):
    m = DualModel.create(5, 4, rng)
    x = rng.normal(size=(8, 5))
    before = m.predict_y(x)
    m.set_phase("step2b")
    for w in m.phi_net.weights:
        w[...] = rng.normal(size=w.shape)
    assert np.array_equal(m.predict_y(x), before)


def test_phase_contract(rng):
    m = DualModel.create(3, 2, rng)
    assert m.frozen is None
    m.set_phase("step2a")
    assert m.frozen == "phi"
    with pytest.raises(FrozenNetworkError):
        adam_step(m.phi_net, [np.zeros_like(p) for p in m.phi_net.params()],
                  AdamState.for_net(m.phi_net, 0.1))
    m.set_phase("step2b")
    assert m.frozen == "theta"
    m.set_phase("step2a")
    assert m.theta_net.trainable and not m.phi_net.trainable
    with pytest.raises(ValueError):
        m.set_phase("step3")


def test_checkpoint_round_trip_is_exact(tmp_path, rng):
    m = DualModel.create(6, 5, rng)
    m.set_phase("step2b")
    save_checkpoint(m, tmp_path / "m.json")
    back = load_checkpoint(tmp_path / "m.json")
    assert back.phase == "step2b"
    for a, b in zip(m.theta_net.params() + m.phi_net.params(),
                    back.theta_net.params() + back.phi_net.params()):
        assert np.array_equal(a, b)


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(p)
