import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ganmut.emotion_space import EmotionLabel, init_directions
from ganmut.losses import (
    LossBreakdown,
    LossWeights,
    adversarial_loss,
    classification_loss_fake,
    classification_loss_real,
    gradient_penalty,
    info_loss,
    interpolation_loss,
    reconstruction_loss,
    total_discriminator_loss,
    total_generator_loss,
)
from ganmut.networks import ModelConfig, build_models

from _oracles import TinyProblem, directional_check

A = EmotionLabel


class TestAdversarial:
    def test_constant_critic(self):
        assert float(adversarial_loss(torch.full((5,), 3.0), torch.full((5,), 3.0))) == 0.0

    def test_hand_expectation(self):
        assert float(adversarial_loss(torch.ones(4), -torch.ones(4))) == 2.0

    def test_identical_batches(self):
        _, D = build_models(ModelConfig(image_size=16, base_channels=4))
        x = torch.rand(3, 3, 16, 16)
        assert float(adversarial_loss(D(x).src, D(x.clone()).src).detach()) == 0.0


class TestClassification:
    def test_certain(self):
        logits = torch.full((2, 7), -1e4)
        logits[0, 3] = logits[1, 5] = 1e4
        assert float(classification_loss_real(logits, torch.tensor([3, 5]))) == 0.0

    def test_uniform(self):
        loss = classification_loss_real(torch.zeros(3, 7), torch.tensor([0, 4, 6]))
        assert float(loss) == pytest.approx(math.log(7), abs=1e-6)
        assert math.log(7) == pytest.approx(1.9459, abs=1e-4)

    def test_half_probability(self):
        # two logits tie at 0, the rest effectively -inf: p(true) = 1/2
        logits = torch.full((1, 7), -1e4)
        logits[0, 1] = logits[0, 2] = 0.0
        assert float(classification_loss_real(logits, torch.tensor([1]))) == pytest.approx(math.log(2), abs=1e-6)

    def test_fake_targets_follow_codes(self):
        table = init_directions()
        theta = torch.tensor([2.0, table.direction(A.SADNESS)], dtype=torch.float64)
        rho = torch.tensor([0.1, 0.9], dtype=torch.float64)
        logits = torch.full((2, 7), -1e4)
        logits[0, int(A.NEUTRAL)] = 1e4
        logits[1, int(A.SADNESS)] = 1e4
        assert float(classification_loss_fake(logits, theta, rho, table)) == 0.0
        assert float(classification_loss_fake(torch.zeros(2, 7), theta, rho, table)) == pytest.approx(math.log(7))


class TestInfo:
    def test_exact(self):
        xy = torch.tensor([[0.3, 0.1], [-0.5, 0.2]])
        assert float(info_loss(xy.clone(), xy)) == 0.0

    def test_origin_vs_unit(self):
        assert float(info_loss(torch.zeros(1, 2), torch.tensor([[1.0, 0.0]]))) == 1.0

    def test_offset(self):
        xy = torch.rand(6, 2, dtype=torch.float64)
        assert float(info_loss(xy + torch.tensor([0.1, 0.0], dtype=torch.float64), xy)) == pytest.approx(0.01)


class TestInterpolation:
    def test_masked_out(self):
        coor = torch.rand(5, 2, requires_grad=True)
        loss = interpolation_loss(coor, torch.tensor([0.0, 0.1, 0.2, 0.15, 0.05]))
        assert float(loss.detach()) == 0.0
        loss.backward()  # still part of the graph
        assert float(coor.grad.abs().sum()) == 0.0

    def test_exact_radius(self):
        rho = torch.tensor([0.5, 0.9], dtype=torch.float64)
        coor = torch.stack([rho * math.cos(1.0), rho * math.sin(1.0)], dim=1)
        assert float(interpolation_loss(coor, rho)) == pytest.approx(0.0, abs=1e-15)

    def test_single_sample(self):
        coor = torch.tensor([[0.7, 0.0], [0.3, 0.0]], dtype=torch.float64)
        rho = torch.tensor([0.5, 0.1], dtype=torch.float64)
        assert float(interpolation_loss(coor, rho)) == pytest.approx(0.04, abs=1e-12)

    @settings(max_examples=40)
    @given(st.integers(1, 6), st.integers(0, 6), st.integers(0, 10_000))
    def test_sub_threshold_samples_do_not_change_value(self, n_in, n_out, seed):
        gen = torch.Generator().manual_seed(seed)
        coor = torch.rand(n_in, 2, generator=gen, dtype=torch.float64)
        rho = 0.2 + 0.8 * torch.rand(n_in, generator=gen, dtype=torch.float64) + 1e-9
        base = float(interpolation_loss(coor, rho))
        extra_coor = torch.rand(n_out, 2, generator=gen, dtype=torch.float64)
        extra_rho = 0.2 * torch.rand(n_out, generator=gen, dtype=torch.float64)
        mixed = float(interpolation_loss(torch.cat([coor, extra_coor]), torch.cat([rho, extra_rho])))
        assert mixed == base


class TestReconstruction:
    def test_identity_generator(self):
        x = torch.rand(2, 3, 16, 16)
        assert float(reconstruction_loss(lambda img, xy: img, x, x.clone(), torch.zeros(2, 2))) == 0.0

    def test_constant_offset(self):
        x = torch.rand(2, 3, 16, 16, dtype=torch.float64)
        loss = reconstruction_loss(lambda img, xy: img + 0.1, x, x, torch.zeros(2, 2))
        assert float(loss) == pytest.approx(0.1, abs=1e-12)

    def test_non_negative_random_networks(self):
        G, D = build_models(ModelConfig(image_size=16, base_channels=4, seed=4))
        x = torch.rand(3, 3, 16, 16) * 2 - 1
        fake = G(x, torch.rand(3, 2))
        assert reconstruction_loss(G, x, fake, D(x).coor).item() >= 0


class TestGradientPenalty:
    def test_unit_slope_critic(self):
        x = torch.rand(4, 3, 16, 16, dtype=torch.float64)
        y = torch.rand(4, 3, 16, 16, dtype=torch.float64)
        critic = lambda img: img.flatten(1).sum(1) / math.sqrt(3 * 16 * 16)
        assert gradient_penalty(critic, x, y, torch.Generator().manual_seed(0)).item() <= 1e-10

    @pytest.mark.parametrize("critic", [lambda img: torch.full((img.shape[0],), 2.5, dtype=img.dtype),
                                        lambda img: img.flatten(1).sum(1) * 0 + 2.5])
    def test_constant_critic(self, critic):
        x = torch.rand(4, 3, 16, 16, dtype=torch.float64)
        assert gradient_penalty(critic, x, x * 0.5).item() == pytest.approx(1.0, abs=1e-10)

    def test_non_negative(self):
        _, D = build_models(ModelConfig(image_size=16, base_channels=4, seed=3))
        for seed in range(5):
            gen = torch.Generator().manual_seed(seed)
            x, y = torch.rand(2, 2, 3, 16, 16, generator=gen)
            assert gradient_penalty(D.critic, x, y, gen).item() >= 0


class TestTotals:
    TERMS = {"adv": 0.7, "cls_real": 1.3, "cls_fake": 0.4, "info": 0.25, "rho": 0.05, "rec": 0.1, "gp": 0.3}

    def test_zero(self):
        zeros = dict.fromkeys(self.TERMS, 0.0)
        assert total_discriminator_loss(zeros, LossWeights()) == 0.0
        assert total_generator_loss(zeros, LossWeights()) == 0.0

    def test_single_terms(self):
        zeros = dict.fromkeys(self.TERMS, 0.0)
        assert total_discriminator_loss(dict(zeros, adv=2.0), LossWeights()) == -2.0
        assert total_generator_loss(dict(zeros, adv=1.0, rec=0.1), LossWeights(lambda_rec=10)) == pytest.approx(2.0)

    def test_exact_weighted_sums(self):
        w = LossWeights(0.5, 7.0, 3.0, 1.5, 2.5, 0.25)
        t = self.TERMS
        assert total_discriminator_loss(t, w) == -t["adv"] + 0.5 * t["cls_real"] + 1.5 * t["info"] + 3.0 * t["gp"]
        assert total_generator_loss(t, w) == t["adv"] + 0.5 * t["cls_fake"] + 7.0 * t["rec"] \
            + 2.5 * t["info"] + 0.25 * t["rho"]

    def test_gp_linearity(self):
        zeros = dict.fromkeys(self.TERMS, 0.0)
        one = total_discriminator_loss(dict(zeros, gp=0.3), LossWeights(lambda_gp=4.0))
        two = total_discriminator_loss(dict(zeros, gp=0.3), LossWeights(lambda_gp=8.0))
        assert two == 2 * one

    @pytest.mark.parametrize("field", ["lambda_cls", "lambda_rec", "lambda_info_G", "lambda_rho"])
    def test_generator_linearity(self, field):
        base = {**dict.fromkeys(self.TERMS, 0.0), "cls_fake": 0.4, "rec": 0.1, "info": 0.25, "rho": 0.05}
        zero = LossWeights(**{f: 0.0 for f in LossWeights.__dataclass_fields__})
        one = total_generator_loss(base, LossWeights(**{**zero.to_dict(), field: 1.5}))
        two = total_generator_loss(base, LossWeights(**{**zero.to_dict(), field: 3.0}))
        assert two == 2 * one

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_gp=-1)
        with pytest.raises(ValueError):
            LossWeights(lambda_rec=math.inf)

    def test_breakdown_keeps_only_computed_terms(self):
        bd = LossBreakdown.from_tensors({"adv": torch.tensor(1.0), "gp": torch.tensor(0.5)})
        assert dict(bd.items()) == {"adv": 1.0, "gp": 0.5}


def test_non_negative_terms_on_random_problem():
    problem = TinyProblem(seed=9)
    with torch.enable_grad():
        for name in ("cls_real", "cls_fake", "info", "rho", "rec", "gp"):
            assert problem.term(name).item() >= 0, name


@pytest.mark.parametrize("name", ["adv", "cls_real", "cls_fake", "info", "rho", "rec", "gp"])
def test_gradient_matches_finite_difference(name):
    analytic, numeric, rel = directional_check(TinyProblem(seed=21), name, seed=3)
    assert rel <= 1e-4, (analytic, numeric)
