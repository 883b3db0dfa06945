import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from msnbargain import AdaptiveAllocator, BargainingAllocator, HomogeneousScenario, UserProfile

from conftest import four_users


def test_allocator_params_and_clone():
    est = BargainingAllocator(tolerance=1e-7, distributed=True)
    assert est.get_params()["tolerance"] == 1e-7
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    est.set_params(mu=50.0)
    assert est.mu == 50.0


def test_allocator_fit():
    sc = four_users(normalized=False)
    est = BargainingAllocator().fit(sc)
    assert est.head_ == 1 and est.n_users_ == 4
    assert est.airtime_.shape == (4,) and est.airtime_.sum() <= 20 + 1e-9
    assert est.plain_products_[1] == pytest.approx(213.6849, abs=1e-3)
    assert est.score() == pytest.approx(est.products_[1])
    assert BargainingAllocator(distributed=True).predict(sc) == 1


def test_allocator_accepts_homogeneous():
    hs = HomogeneousScenario([UserProfile(500)] * 3, (5, 5, 5), 4.0)
    assert BargainingAllocator().fit(hs).head_ == 0
    with pytest.raises(TypeError):
        BargainingAllocator().fit(np.zeros((3, 3)))


def test_unfitted_allocator():
    with pytest.raises(NotFittedError):
        BargainingAllocator().predict()


def test_adaptive_allocator():
    sc = four_users(budgets=(500,) * 4)
    est = AdaptiveAllocator(slot_size=1).fit(sc)
    assert est.head_counts_.tolist() == [5, 5, 5, 5]
    faded = AdaptiveAllocator(slot_size=4, snr=20, seed=1, baseline=True).fit(sc)
    assert faded.baseline_.heads[0] is not None
    assert faded.score() == pytest.approx(faded.timeline_.plain_product)
    assert clone(faded).get_params()["snr"] == 20
