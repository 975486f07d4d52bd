import numpy as np
import pytest

from auv_ftc.errors import SingularCovarianceError, ZeroMassError
from auv_ftc.supervisor import apply_floor, blend_controls, likelihood, log_likelihood, posterior_update


def test_likelihood_frozen_values():
    assert likelihood(np.zeros(3), np.eye(3)) == 1.0
    assert likelihood(np.zeros(2), 4 * np.eye(2)) == pytest.approx(0.25)
    assert likelihood([1.0], [[1.0]]) == pytest.approx(np.exp(-0.5))


def test_log_likelihood_batched():
    z = np.array([[0.0, 0.0], [1.0, 0.0]])
    Pz = np.stack([np.eye(2), np.eye(2)])
    np.testing.assert_allclose(log_likelihood(z, Pz), [0.0, -0.5])
    with pytest.raises(SingularCovarianceError):
        log_likelihood(np.zeros(2), np.zeros((2, 2)))


def test_posterior_update_frozen():
    post = posterior_update([0.5, 0.5], [3.0, 1.0])
    np.testing.assert_allclose(post, [0.75, 0.25])
    np.testing.assert_allclose(posterior_update([0.5, 0.5], log_likelihoods=np.log([3.0, 1.0])), post)


def test_posterior_update_errors():
    with pytest.raises(ZeroMassError):
        posterior_update([0.5, 0.5], [0.0, 0.0])
    with pytest.raises(ValueError):
        posterior_update([0.5, 0.5], [1.0])
    with pytest.raises(ValueError):
        posterior_update([0.5, 0.5], [-1.0, 1.0])
    with pytest.raises(TypeError):
        posterior_update([0.5, 0.5])


def test_floor_frozen():
    out = apply_floor([0.999, 0.001, 0, 0, 0, 0], 0.006)
    expected = np.array([0.994] + [0.001] * 5) / 0.999
    np.testing.assert_allclose(out, expected)


def test_floor_leaves_undecided_posterior():
    p = np.array([0.5, 0.3, 0.2])
    np.testing.assert_array_equal(apply_floor(p, 0.006), p)
    with pytest.raises(ValueError):
        apply_floor(p, 0.0)


def test_blend():
    U = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(blend_controls(U, [0.25, 0.75]), [2.5, 3.5])
    assert blend_controls([1.0, 3.0], [0.5, 0.5]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        blend_controls(U, [1.0])


# --- worked examples --------------------------------------------------------

def test_likelihood_decreases_with_innovation():
    vals = [likelihood([s, 0.0], np.eye(2)) for s in (0, 1, 2, 4, 8, 30)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-100


def test_equal_likelihoods_keep_prior():
    prior = np.array([0.1, 0.2, 0.7])
    np.testing.assert_allclose(posterior_update(prior, [0.3, 0.3, 0.3]), prior)


def test_two_model_bayes_frozen():
    np.testing.assert_allclose(posterior_update([0.5, 0.5], [2.0, 1.0]), [2 / 3, 1 / 3])


def test_zero_prior_is_absorbing():
    np.testing.assert_array_equal(posterior_update([1.0, 0.0], [1e-30, 1e30]), [1.0, 0.0])


def test_floor_before_renormalisation_frozen():
    out = apply_floor([1, 0, 0, 0, 0, 0], 0.006)
    raw = np.array([0.994] + [0.001] * 5)
    np.testing.assert_allclose(out, raw / raw.sum())
    assert abs(out.sum() - 1) <= 1e-12


def test_floor_idempotent():
    once = apply_floor([0.9995, 0.0005, 0, 0, 0, 0], 0.006)
    np.testing.assert_array_equal(apply_floor(once, 0.006), once)


def test_identical_controls_blend_to_themselves():
    u = np.linspace(-3, 3, 8)
    np.testing.assert_allclose(blend_controls(np.tile(u, (6, 1)), [0.1, 0.2, 0.3, 0.2, 0.1, 0.1]), u)
