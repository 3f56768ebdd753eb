import dataclasses

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from upgrade_table import TABLE, TRAJECTORY, TRAJECTORY_INIT
from revanon.errors import InvalidArgument
from revanon.networks import GeneratorConfig, UNetGenerator
from revanon.upgradation import (KEPT, UPGRADED, SupervisionStore, UpgradeState,
                                 ValidationSnapshot, apply_upgrade, check, init_state)


class TestInit:
    def test_formula(self):
        s = init_state(0.60, 20.0, 0.5)
        assert s.max_r1 == pytest.approx(0.55, abs=1e-12)
        assert (s.upgrade_count, s.last_decision) == (0, KEPT)
        assert (s.eps_psnr, s.eps_ssim, s.eps_r1) == (1.0, 0.05, 0.05)

    def test_zero_eps(self):
        assert init_state(0.6, 20.0, 0.5, eps=(1.0, 0.05, 0.0)).max_r1 == 0.6

    def test_negative_max_allowed(self):
        assert init_state(0.02, 20.0, 0.5).max_r1 == pytest.approx(-0.03)

    @pytest.mark.parametrize("r1", [-0.1, 1.2])
    def test_rank1_range(self, r1):
        with pytest.raises(InvalidArgument):
            init_state(r1, 20.0, 0.5)


@pytest.mark.parametrize("label,state,snap,decision,max_r1", TABLE, ids=[r[0] for r in TABLE])
def test_decision_table(label, state, snap, decision, max_r1):
    got, new = check(state, snap)
    assert got == decision
    assert new.max_r1 == pytest.approx(max_r1, abs=1e-12)
    if decision == KEPT:
        assert new == state
    else:
        assert new.upgrade_count == state.upgrade_count + 1
        assert new.last_decision == UPGRADED


def test_trajectory_monotone():
    state = init_state(**TRAJECTORY_INIT)
    trace = [state.max_r1]
    for snap, expected in TRAJECTORY:
        decision, state = check(state, snap)
        assert decision == expected
        trace.append(state.max_r1)
    assert trace == sorted(trace)
    assert state.upgrade_count == 3
    ups = [t for t, (_, d) in zip(trace[1:], TRAJECTORY) if d == UPGRADED]
    assert all(b > a for a, b in zip(ups, ups[1:]))


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 40), st.floats(0, 1), st.floats(-0.5, 1), st.floats(0, 40), st.floats(0, 1),
       st.floats(0, 1))
def test_check_properties(psnr_des, ssim_des, max_r1, p, s, r):
    state = UpgradeState(psnr_des, ssim_des, max_r1)
    snap = ValidationSnapshot(p, s, r)
    decision, new = check(state, snap)
    assert new.max_r1 >= state.max_r1
    expected = p < psnr_des + 1.0 and s < ssim_des + 0.05 and r > max_r1
    assert (decision == UPGRADED) == expected
    # a repeated identical snapshot can never upgrade twice
    assert check(new, snap)[0] == KEPT


def test_frozen_state():
    with pytest.raises(dataclasses.FrozenInstanceError):
        init_state(0.5, 20, 0.5).max_r1 = 0.9


def test_privacy_gate_off_is_hill_climb():
    state = UpgradeState(20.0, 0.5, 0.1, eps_psnr=float("inf"), eps_ssim=float("inf"))
    decisions = []
    for r in (0.2, 0.15, 0.3, 0.3, 0.5):
        d, state = check(state, ValidationSnapshot(99.0, 1.0, r))
        decisions.append(d)
    assert decisions == [UPGRADED, KEPT, UPGRADED, KEPT, UPGRADED]


def test_max_above_one_never_upgrades():
    state = init_state(1.0, 20.0, 0.5, eps=(1.0, 0.05, -0.5))
    for r in (0.0, 0.5, 1.0):
        assert check(state, ValidationSnapshot(0.0, 0.0, r))[0] == KEPT


def _gen():
    return UNetGenerator(GeneratorConfig(base_width=4, depth=2, image_size=(8, 4)))


class TestApplyUpgrade:
    def test_targets_equal_frozen_generator(self):
        gen = _gen()
        gen.train()
        images = torch.rand(10, 3, 8, 4)
        store = SupervisionStore(torch.rand(10, 3, 8, 4))
        assert store.tags == ["desensitized"] * 10
        new = apply_upgrade(store, gen, images, epoch=7, batch_size=3)
        assert gen.training
        gen.eval()
        with torch.no_grad():
            ref = gen(images)
        assert float((new.targets - ref).abs().mean()) == 0.0
        assert new.tags == ["upgraded@7"] * 10
        assert not new.targets.requires_grad

    def test_original_store_untouched(self):
        store = SupervisionStore(torch.rand(4, 3, 8, 4))
        before = store.targets.clone()
        apply_upgrade(store, _gen(), torch.rand(4, 3, 8, 4), epoch=1)
        assert torch.equal(store.targets, before)
        assert store.tags == ["desensitized"] * 4

    def test_atomic_on_failure(self):
        class Broken(torch.nn.Module):
            def forward(self, x):
                out = x.clone()
                out[0] = float("nan")
                return out

        store = SupervisionStore(torch.rand(4, 3, 8, 4))
        before = store.targets.clone()
        with pytest.raises(InvalidArgument):
            apply_upgrade(store, Broken(), torch.rand(4, 3, 8, 4), epoch=2)
        assert torch.equal(store.targets, before)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            apply_upgrade(SupervisionStore(torch.rand(4, 3, 8, 4)), _gen(),
                          torch.rand(5, 3, 8, 4), epoch=1)

    def test_two_upgrades_track_generator(self):
        gen = _gen()
        images = torch.rand(6, 3, 8, 4)
        s1 = apply_upgrade(SupervisionStore(torch.rand(6, 3, 8, 4)), gen, images, epoch=3)
        with torch.no_grad():
            for p in gen.parameters():
                p.add_(0.1)
        s2 = apply_upgrade(s1, gen, images, epoch=5)
        assert s2.tags == ["upgraded@5"] * 6
        assert not torch.equal(s1.targets, s2.targets)
