import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focuslab.adafocus import (
    FocusConfig,
    SaliencyTable,
    estimate_naive,
    focus_coefficients,
    loss_adafocus,
    loss_noisy,
    mask,
    update_online,
    weight,
    weighted_bce,
)
from focuslab.classifier import sigmoid
from focuslab.errors import ConfigError, InputError, StateError

KINDS = ("exponential", "constant", "linear", "logarithmic")


class TestNaiveEstimate:
    def test_argmax(self):
        s = np.array([[0.2], [0.7], [0.5]])
        assert estimate_naive(s, [1]) == {0: (2, 0.7)}

    def test_earliest_tie(self):
        assert estimate_naive(np.array([[0.4], [0.4]]), [1]) == {0: (1, 0.4)}

    def test_constant_column(self):
        s = np.full((5, 2), 0.3)
        assert estimate_naive(s, [0, 1]) == {1: (1, 0.3)}

    def test_empty(self):
        with pytest.raises(InputError):
            estimate_naive(np.zeros((0, 2)), [1, 1])


class TestOnlineUpdate:
    def _table(self, lam, a):
        table = SaliencyTable()
        table.init_video(0, [1])
        table.set(0, 0, lam, a)
        return table

    def test_no_update_on_lower(self):
        table = update_online(self._table(3, 0.6), 0, 8, [0.55], [1])
        assert table.get(0, 0) == (3, 0.6)

    def test_update_from_zero(self):
        table = update_online(self._table(0, 0.0), 0, 5, [0.01], [1])
        assert table.get(0, 0) == (5, 0.01)

    def test_equal_score_does_not_move(self):
        table = update_online(self._table(2, 0.6), 0, 7, [0.6], [1])
        assert table.get(0, 0) == (2, 0.6)

    def test_unknown_video(self):
        with pytest.raises(StateError):
            update_online(SaliencyTable(), 3, 1, [0.5], [1])
        table = update_online(SaliencyTable(), 3, 1, [0.5, 0.2], [1, 0], init_missing=True)
        assert len(table) == 1 and table.get(3, 0) == (1, 0.5)

    def test_only_in_video_classes(self):
        table = SaliencyTable()
        table.init_video(0, [0, 1, 0, 1])
        update_online(table, 0, 2, [0.9, 0.8, 0.7, 0.6], [0, 1, 0, 1])
        assert [k for _, k, _, _ in table.items()] == [1, 3]

    def test_equivalence_small_exhaustive(self):
        # direct calls, every 3 x 2 matrix over five levels
        q = [0.1, 0.3, 0.5, 0.7, 0.9]
        for flat in itertools.product(q, repeat=6):
            s = np.array(flat).reshape(3, 2)
            table = SaliencyTable()
            table.init_video(0, [1, 1])
            for t in range(1, 4):
                update_online(table, 0, t, s[t - 1], [1, 1])
            assert table.entries(0) == estimate_naive(s, [1, 1])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 20), st.floats(0.001, 0.999)), min_size=1, max_size=40))
    def test_running_max(self, observations):
        table = SaliencyTable()
        table.init_video(0, [1])
        prev_a = 0.0
        for i, (t, p) in enumerate(observations):
            update_online(table, 0, t, [p], [1])
            lam, a = table.get(0, 0)
            seen = observations[: i + 1]
            assert a >= prev_a
            assert a == max(pp for _, pp in seen)
            assert lam in [tt for tt, pp in seen if pp == a]
            prev_a = a


class TestWeight:
    cfg = FocusConfig()

    def test_boundary_is_alpha(self):
        assert weight(0.75, 1.0, self.cfg) == 5.0
        assert weight(0.375, 0.5, self.cfg) == 5.0  # 0.375 == 0.75 * 0.5 exactly in binary

    def test_upper_value(self):
        assert weight(0.9, 1.0, self.cfg) == pytest.approx(5.80917121364141561, rel=1e-14)

    def test_lower_value(self):
        assert weight(0.45, 1.0, self.cfg) == pytest.approx(0.406569659740599112, rel=1e-14)

    @pytest.mark.parametrize("kind,p,a,expected", [
        ("constant", 0.9, 1.0, 5.0),
        ("constant", 0.5, 1.0, 0.75),
        ("linear", 0.95, 1.0, 5.0 * 1.2),
        ("linear", 0.5, 1.0, 0.75),
        ("logarithmic", 0.85, 1.0, 5.0 * math.log(math.e + 0.1)),
        ("logarithmic", 0.5, 1.0, math.log(math.e - 0.25)),
    ])
    def test_alternative_kinds(self, kind, p, a, expected):
        assert weight(p, a, FocusConfig(weight_kind=kind)) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("kind", KINDS)
    def test_monotone_on_grid(self, kind):
        cfg = FocusConfig(weight_kind=kind)
        p = np.linspace(0.001, 0.999, 100)
        for a in np.linspace(0.0, 1.0, 100):
            w = weight(p, np.full_like(p, a), cfg)
            assert np.all(np.diff(w) >= 0)

    def test_exponential_bounds(self):
        cfg = FocusConfig()
        P, A = np.meshgrid(np.linspace(1e-6, 1 - 1e-6, 200), np.linspace(0, 1, 200))
        w = weight(P, A, cfg)
        assert np.all(w > math.exp(-cfg.beta))
        assert np.all(w <= cfg.alpha * math.e)

    @pytest.mark.parametrize("kwargs,field", [
        ({"theta": 1.0}, "theta"), ({"theta": 0.0}, "theta"), ({"alpha": 0.5}, "alpha"),
        ({"beta": 0.0}, "beta"), ({"weight_kind": "cubic"}, "weight_kind"),
        ({"warmup_fraction": 1.0}, "warmup_fraction"),
    ])
    def test_config_validation(self, kwargs, field):
        with pytest.raises(ConfigError) as info:
            FocusConfig(**kwargs)
        assert info.value.field == field


class TestMask:
    def test_zero_distance(self):
        for gamma in (0.0, 0.3, 1.0):
            assert mask(4, 10, 4, gamma) == 1

    def test_boundary_inclusive(self):
        assert mask(3, 10, 7, 0.8) == 1
        assert mask(3, 10, 7, 0.79) == 0

    def test_gamma_one_does_not_cover_far_clips(self):
        assert mask(1, 10, 10, 1.0) == 0

    def test_unset_position(self):
        assert mask(5, 10, 0, 1.0) == 0

    def test_symmetry(self):
        T = 12
        for lam in range(1, T + 1):
            for t in range(1, T + 1):
                mirror = 2 * lam - t
                if 1 <= mirror <= T:
                    for gamma in np.linspace(0, 1, 11):
                        assert mask(t, T, lam, gamma) == mask(mirror, T, lam, gamma)


class TestLosses:
    def test_noisy_ln2(self):
        l_in, l_out, c = loss_noisy([0.5, 0.5], [1, 0])
        assert l_in == pytest.approx(0.693147180559945309, rel=1e-15)
        assert l_out == pytest.approx(0.693147180559945309, rel=1e-15)
        np.testing.assert_array_equal(c, [-0.5, 0.5])

    def test_no_positives(self):
        l_in, _, _ = loss_noisy([0.2, 0.9], [0, 0])
        assert l_in == 0.0

    def test_positive_limit(self):
        l_in, _, _ = loss_noisy([1 - 1e-12], [1])
        assert l_in < 1e-11

    def test_weighted_single_positive(self):
        loss, c = weighted_bce([0.5], [1], [5.0])
        assert loss == pytest.approx(3.46573590279972655, rel=1e-15)
        assert c[0] == -2.5

    def test_mask_zero_kills_class(self):
        cfg = FocusConfig()
        out = loss_adafocus([0.9, 0.2], [1, 0], {0: (10, 0.95)}, t=1, T=20, gamma=0.0, cfg=cfg)
        assert out.masks[0] == 0 and out.weights[0] > 1
        assert out.loss == pytest.approx(-math.log(0.8), rel=1e-15)
        assert out.grad_coeffs[0] == 0.0

    def test_unobserved_instance_fallback(self):
        W, M = focus_coefficients([0.4], [1], {}, t=3, T=10, gamma=1.0, cfg=FocusConfig())
        assert W[0] == 1.0 and M[0] == 0.0

    def test_constant_identity_reduction(self):
        cfg = FocusConfig(weight_kind="constant", alpha=1.0, lower_scale=1.0)
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = rng.uniform(0.01, 0.99, 6)
            y = rng.integers(0, 2, 6)
            entries = {k: (int(rng.integers(1, 11)), float(rng.uniform())) for k in np.flatnonzero(y)}
            t = int(rng.integers(1, 11))
            out = loss_adafocus(p, y, entries, t, 10, gamma=2.0, cfg=cfg)
            l_in, l_out, c = loss_noisy(p, y)
            assert out.loss == l_in + l_out
            np.testing.assert_array_equal(out.grad_coeffs, c)

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_ablation_identity(self, data):
        K = data.draw(st.integers(1, 6))
        p = np.array(data.draw(st.lists(st.floats(1e-6, 1 - 1e-6), min_size=K, max_size=K)))
        y = np.array(data.draw(st.lists(st.integers(0, 1), min_size=K, max_size=K)))
        entries = {int(k): (data.draw(st.integers(0, 8)), data.draw(st.floats(0, 1))) for k in np.flatnonzero(y)}
        cfg = FocusConfig(use_action_focus=False, use_clip_focus=False,
                          weight_kind=data.draw(st.sampled_from(KINDS)))
        out = loss_adafocus(p, y, entries, data.draw(st.integers(1, 8)), 8,
                            data.draw(st.floats(0, 1)), cfg)
        l_in, l_out, c = loss_noisy(p, y)
        assert out.loss == l_in + l_out
        np.testing.assert_array_equal(out.grad_coeffs, c)

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("flags", [(True, True), (True, False), (False, True)])
    def test_coefficients_match_finite_differences(self, kind, flags):
        cfg = FocusConfig(weight_kind=kind, use_action_focus=flags[0], use_clip_focus=flags[1])
        rng = np.random.default_rng(hash((kind, flags)) % 2**32)
        h = 1e-6
        for _ in range(20):
            K, T = 5, 12
            z = rng.normal(0, 2, K)
            y = rng.integers(0, 2, K)
            entries = {int(k): (int(rng.integers(0, T + 1)), float(rng.uniform())) for k in np.flatnonzero(y)}
            t, gamma = int(rng.integers(1, T + 1)), float(rng.uniform())
            out = loss_adafocus(sigmoid(z), y, entries, t, T, gamma, cfg)
            frozen = out.pos_weights
            for k in range(K):
                up, down = z.copy(), z.copy()
                up[k] += h
                down[k] -= h
                f = (weighted_bce(sigmoid(up), y, frozen)[0] - weighted_bce(sigmoid(down), y, frozen)[0]) / (2 * h)
                a = out.grad_coeffs[k]
                assert abs(a - f) / max(1e-8, abs(a) + abs(f)) <= 1e-5


def test_table_dump_roundtrip(tmp_path):
    table = SaliencyTable()
    table.init_video(4, [1, 0, 1])
    update_online(table, 4, 3, [0.25, 0.5, 0.125], [1, 0, 1])
    table.dump(tmp_path / "t.jsonl")
    back = SaliencyTable.load(tmp_path / "t.jsonl")
    assert list(back.items()) == list(table.items())
    assert (tmp_path / "t.jsonl").read_text().count("\n") == 2
