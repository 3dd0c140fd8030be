import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dacad.losses import (
    LossWeights,
    cec_loss,
    deepsvdd_loss,
    discriminator_loss,
    plain_bce_loss,
    self_triplet_loss,
    sup_mean_margin_loss,
    total_loss,
)

T = lambda *v: torch.tensor(v, dtype=torch.float64).reshape(len(v), -1)  # noqa: E731


class TestSupMeanMargin:
    def test_margin_satisfied(self):
        assert sup_mean_margin_loss(T(0.0), T(0.0), T(2.0), 1.0).item() == 0.0

    def test_hand_value(self):
        got = sup_mean_margin_loss(T(0.0), T(0.5), T(1.0, 1.2), 1.0).item()
        assert abs(got - 0.03) < 1e-6

    def test_hinge_floor(self):
        a = torch.zeros(3, 2, dtype=torch.float64)
        n = torch.tensor([[1.0, 0.0], [0.0, 2.0]], dtype=torch.float64)
        assert sup_mean_margin_loss(a, a.clone(), n, 1.0).item() == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sup_mean_margin_loss(torch.zeros(2, 3), torch.zeros(2, 3), torch.zeros(2, 4))

    def test_mean_inside_hinge(self):
        # one close and one far negative: the mean over negatives sits inside max(., 0)
        got = sup_mean_margin_loss(T(0.0), T(0.0), T(0.1, 10.0), 1.0).item()
        assert got == 0.0


class TestSelfTriplet:
    def test_large_margin(self):
        assert self_triplet_loss(T(0.0), T(1.0), T(3.0)).item() == 0.0

    def test_hand_value(self):
        assert self_triplet_loss(T(0.0), T(1.0), T(1.0)).item() == 1.0

    def test_degenerate_collapse(self):
        a = T(0.3)
        assert self_triplet_loss(a, a.clone(), a.clone()).item() == 1.0

    def test_unequal_batches(self):
        with pytest.raises(ValueError):
            self_triplet_loss(torch.zeros(2, 1), torch.zeros(2, 1), torch.zeros(3, 1))


class TestDiscriminator:
    def test_max_confusion(self):
        p = torch.full((5,), 0.5, dtype=torch.float64)
        assert abs(discriminator_loss(p, p[:3]).item() - math.log(2)) < 1e-6

    def test_hand_value(self):
        got = discriminator_loss(torch.tensor([0.8], dtype=torch.float64), torch.tensor([0.4], dtype=torch.float64))
        assert abs(got.item() - (-0.5 * (math.log(0.8) + math.log(0.6)))) < 1e-12
        # the printed example value 0.36702 is a hand rounding of 0.366985
        assert abs(got.item() - 0.36702) < 5e-5

    def test_perfect_limit(self):
        got = discriminator_loss(torch.ones(4, dtype=torch.float64), torch.zeros(4, dtype=torch.float64))
        assert 0.0 <= got.item() < 1e-6

    def test_clamped_extremes_finite(self):
        got = discriminator_loss(torch.zeros(2, dtype=torch.float64), torch.ones(2, dtype=torch.float64))
        assert math.isfinite(got.item()) and got.item() == pytest.approx(-math.log(1e-7), rel=1e-9)

    def test_empty(self):
        with pytest.raises(ValueError):
            discriminator_loss(torch.zeros(0), torch.zeros(0))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=10), st.lists(st.floats(0.01, 0.99), min_size=1, max_size=10), st.randoms())
    def test_permutation_invariant(self, src, trg, rnd):
        a = discriminator_loss(torch.tensor(src, dtype=torch.float64), torch.tensor(trg, dtype=torch.float64))
        rnd.shuffle(src)
        rnd.shuffle(trg)
        b = discriminator_loss(torch.tensor(src, dtype=torch.float64), torch.tensor(trg, dtype=torch.float64))
        assert a.item() == pytest.approx(b.item(), abs=1e-12)
        assert a.item() >= 0


class TestCec:
    c = torch.zeros(1, dtype=torch.float64)

    def test_at_centre_normal(self):
        assert cec_loss(T(0.0), [0], self.c).item() == 0.0

    def test_normal_unit_distance(self):
        assert cec_loss(T(1.0), [0], self.c).item() == 1.0

    def test_anomalous_unit_distance(self):
        got = cec_loss(T(1.0), [1], self.c).item()
        assert abs(got - (-math.log(1 - math.exp(-1)))) < 1e-12
        assert abs(got - 0.45868) < 1e-5

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            cec_loss(T(1.0), [-1], self.c)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cec_loss(torch.zeros(2, 3), [0, 1], torch.zeros(2))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4))
    def test_normal_term_identity(self, v):
        e = torch.tensor([v], dtype=torch.float64)
        c = torch.tensor([0.1, -0.2, 0.3, 0.1], dtype=torch.float64)
        assert cec_loss(e, [0], c).item() == pytest.approx(((e - c) ** 2).sum().item(), rel=1e-12, abs=1e-15)

    def test_anomaly_at_centre_clamped(self):
        got = cec_loss(T(0.0), [1], self.c).item()
        assert got == pytest.approx(-math.log(1e-7), rel=1e-9)


class TestHeads:
    def test_deepsvdd_ignores_anomalies(self):
        e = torch.tensor([[1.0, 0.0], [5.0, 5.0]], requires_grad=True)
        loss = deepsvdd_loss(e, [0, 1], torch.zeros(2))
        loss.backward()
        assert loss.item() == 1.0
        assert e.grad[1].abs().sum().item() == 0.0

    def test_plain_bce(self):
        got = plain_bce_loss(torch.zeros(4, 1), [0, 1, 0, 1]).item()
        assert got == pytest.approx(math.log(2))


class TestTotal:
    def test_unit_weights(self):
        assert total_loss(0.1, 0.2, 0.3, 0.4, LossWeights()) == pytest.approx(1.0, abs=1e-12)

    def test_weighted(self):
        assert total_loss(1, 5, 2, 1, LossWeights(alpha=2, beta=0, gamma=1, lam=3)) == 7

    def test_zero(self):
        assert total_loss(0, 0, 0, 0, LossWeights()) == 0

    @pytest.mark.parametrize("kw", [{"alpha": -1}, {"gamma": float("nan")}, {"margin": 0}])
    def test_invalid_weights(self, kw):
        with pytest.raises(ValueError):
            LossWeights(**kw)


@settings(max_examples=60, deadline=None)
@given(
    d=st.integers(1, 6),
    b=st.integers(1, 6),
    seed=st.integers(0, 2**31 - 1),
    margin=st.floats(0.1, 3.0),
)
def test_non_negative_and_hinge_inactive(d, b, seed, margin):
    g = torch.Generator().manual_seed(seed)
    a = torch.randn(b, d, generator=g, dtype=torch.float64)
    p = a + 0.01 * torch.randn(b, d, generator=g, dtype=torch.float64)
    assert sup_mean_margin_loss(a, p, torch.randn(b, d, generator=g, dtype=torch.float64), margin).item() >= 0
    assert self_triplet_loss(a, p, torch.randn(b, d, generator=g, dtype=torch.float64), margin).item() >= 0
    # negatives pushed far away: both hinges exactly zero with zero gradient
    a.requires_grad_(True)
    far = a.detach() + 100.0
    for loss in (sup_mean_margin_loss(a, p, far, margin), self_triplet_loss(a, p, far, margin)):
        assert loss.item() == 0.0
        (grad,) = torch.autograd.grad(loss, a)
        assert grad.abs().max().item() == 0.0


# -- finite-difference gradient audit ---------------------------------------------------


def fd_grad(fn, x: torch.Tensor, h: float = 1e-6) -> torch.Tensor:
    """Central differences of ``fn`` at ``x`` evaluated in float64."""
    x = x.detach().double()
    flat = x.reshape(-1)
    out = torch.zeros_like(flat)
    for i in range(flat.numel()):
        up, dn = flat.clone(), flat.clone()
        up[i] += h
        dn[i] -= h
        out[i] = (fn(up.reshape(x.shape)) - fn(dn.reshape(x.shape))) / (2 * h)
    return out.reshape(x.shape)


def analytic_grad(fn, x: torch.Tensor) -> torch.Tensor:
    x = x.detach().float().requires_grad_(True)
    (g,) = torch.autograd.grad(fn(x), x)
    return g.double()


def rel_err(a, b) -> float:
    return ((a - b).norm() / max(b.norm().item(), 1e-12)).item()


def loss_case(name: str, g: torch.Generator, d: int):
    """Scalar objective of a (4, d) embedding batch with the other inputs fixed."""
    if name == "sup":
        pos, neg = torch.randn(4, d, generator=g), torch.randn(5, d, generator=g) * 0.5
        return lambda x: sup_mean_margin_loss(x, pos.to(x.dtype), neg.to(x.dtype), 2.0)
    if name == "self":
        pos, neg = torch.randn(4, d, generator=g), torch.randn(4, d, generator=g) * 0.5
        return lambda x: self_triplet_loss(x, pos.to(x.dtype), neg.to(x.dtype), 2.0)
    centre = torch.randn(d, generator=g) * 0.3
    return lambda x: cec_loss(x, [0.0, 1.0, 0.0, 1.0], centre.to(x.dtype))


@pytest.mark.parametrize("case", ["sup", "self", "cec"])
@pytest.mark.parametrize("seed", range(20))
def test_gradient_audit_embedding_losses(case, seed):
    g = torch.Generator().manual_seed(seed)
    d = 1 + seed % 8
    fn = loss_case(case, g, d)
    x = torch.randn(4, d, generator=g)
    assert rel_err(analytic_grad(fn, x), fd_grad(fn, x)) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_gradient_audit_discriminator_loss(seed):
    g = torch.Generator().manual_seed(seed)
    trg = torch.rand(3, generator=g).double() * 0.8 + 0.1
    fn = lambda s: discriminator_loss(s, trg.to(s.dtype))  # noqa: E731
    src = torch.rand(4, generator=g) * 0.8 + 0.1
    assert rel_err(analytic_grad(fn, src), fd_grad(fn, src)) < 1e-4
