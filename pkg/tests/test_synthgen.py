import numpy as np
import pytest
from hypothesis import given, strategies as st

from latent_roadmap import synthgen, worlds
from latent_roadmap.errors import DimensionMismatch, IoError
from latent_roadmap.synthgen import (NuisanceFactors, RenderParams, augment, generate_dataset, render,
                                     sample_factors, split_holdout)
from latent_roadmap.worlds import BOX_STACKING, SHELF_ARRANGEMENT


def small_dataset(n=200, seed=0, **kw):
    params = RenderParams.build(BOX_STACKING, seed=seed, **kw)
    return generate_dataset(BOX_STACKING, params, n, 0.5, np.random.default_rng(seed))


def identity_params(spec, D=12):
    S = spec.n_slots
    mix = np.zeros((1, D, S))
    mix[0, :S, :S] = np.eye(S)
    return RenderParams(D, 1, 0, 0.0, 0.0, 0.0, mix, np.zeros((D, 0)), np.zeros(D), 0)


def test_identity_mixing_gives_padded_occupancy():
    params = identity_params(BOX_STACKING)
    state = worlds.enumerate_states(BOX_STACKING)[5]
    f = NuisanceFactors(0, 0, 0.0, np.zeros(9))
    o = render(BOX_STACKING, state, f, params)
    expect = np.zeros(12)
    expect[:9] = synthgen.occupancy_vector(BOX_STACKING, state)
    assert np.array_equal(o, expect)


def test_viewpoints_differ():
    params = RenderParams.build(BOX_STACKING, V=2, sigma_noise=0.0, seed=3)
    state = worlds.enumerate_states(BOX_STACKING)[0]
    z = np.zeros(9)
    o0 = render(BOX_STACKING, state, NuisanceFactors(0, 0, 0.5, z), params)
    o1 = render(BOX_STACKING, state, NuisanceFactors(1, 0, 0.5, z), params)
    assert np.linalg.norm(o0 - o1) > 0.1


def test_one_slot_change_is_one_column():
    params = RenderParams.build(BOX_STACKING, V=1, sigma_noise=0.0, seed=4)
    s1 = (1 << 0) | (1 << 1) | (1 << 2) | (1 << 3)
    s2 = (1 << 0) | (1 << 1) | (1 << 2) | (1 << 6)
    f = NuisanceFactors(0, 0, 0.3, np.full(9, 0.05))
    diff = render(BOX_STACKING, s2, f, params) - render(BOX_STACKING, s1, f, params)
    cols = params.mix_view[0]
    assert np.allclose(diff, cols[:, 6] - cols[:, 3], atol=1e-12)


def test_render_dimension_errors():
    params = RenderParams.build(BOX_STACKING, seed=0)
    with pytest.raises(DimensionMismatch):
        render(BOX_STACKING, 15, NuisanceFactors(0, 0, 0.0, np.zeros(3)), params)
    with pytest.raises(DimensionMismatch):
        RenderParams.build(BOX_STACKING, D=4)


def test_render_params_immutable():
    params = RenderParams.build(BOX_STACKING, seed=0)
    with pytest.raises(ValueError):
        params.mix_view[0, 0, 0] = 1.0
    cols = np.linalg.norm(params.mix_view[1], axis=0)
    assert np.allclose(cols, 1.0)


def test_distractor_presence_rate():
    params = RenderParams.build(SHELF_ARRANGEMENT, V=1, K=5, p_distractor=0.8, seed=0)
    rng = np.random.default_rng(7)
    masks = np.array([sample_factors(params, rng).distractors for _ in range(10000)])
    present = np.array([[(m >> k) & 1 for k in range(5)] for m in masks])
    assert np.all(np.abs(present.mean(axis=0) - 0.8) < 0.02)


def test_factor_edge_cases():
    rng = np.random.default_rng(0)
    p0 = RenderParams.build(SHELF_ARRANGEMENT, V=1, K=5, p_distractor=0.0, seed=0)
    for _ in range(200):
        f = sample_factors(p0, rng)
        assert f.distractors == 0 and f.viewpoint == 0
        assert 0.0 <= f.lighting <= 1.0
        assert np.all(np.abs(f.jitter) <= 3 * p0.sigma_jitter + 1e-15)


def test_dataset_pairs_by_construction():
    ds = small_dataset(500)
    sc = ds.sidecar
    for k in range(len(ds)):
        if ds.s[k] == 1:
            assert sc.state_i[k] == sc.state_j[k]
        else:
            assert worlds.is_legal_transition(BOX_STACKING, int(sc.state_i[k]), int(sc.state_j[k]))
    assert not ds.augmented.any()


def test_action_fraction():
    params = RenderParams.build(BOX_STACKING, seed=0)
    ds = generate_dataset(BOX_STACKING, params, 2500, 0.5, np.random.default_rng(11))
    # binomial(2500, 0.5) has sd 25
    assert abs(ds.n_action_pairs - 1250) < 100


def test_deterministic_generation():
    a, b = small_dataset(50, seed=9), small_dataset(50, seed=9)
    assert np.array_equal(a.obs_i, b.obs_i) and np.array_equal(a.obs_j, b.obs_j)
    assert np.array_equal(a.s, b.s)


def test_augment_identity_and_sizes():
    ds = small_dataset(300)
    assert augment(ds, 0, np.random.default_rng(0)) is ds
    out = augment(ds, 1, np.random.default_rng(0))
    n_sim = ds.n_similar_pairs
    assert len(out) == len(ds) + n_sim
    assert np.all(out.s[len(ds):] == 0) and np.all(out.augmented[len(ds):])
    assert out.n_action_pairs == ds.n_action_pairs
    out3 = augment(ds, 3, np.random.default_rng(0))
    assert len(out3) == len(ds) + 3 * n_sim


def test_augment_sidecar_follows_observation():
    ds = small_dataset(300)
    out = augment(ds, 2, np.random.default_rng(5))
    all_obs = np.concatenate([ds.obs_i, ds.obs_j])
    all_states = np.concatenate([ds.sidecar.state_i, ds.sidecar.state_j])
    for k in range(len(ds), len(out)):
        hit = np.flatnonzero((all_obs == out.obs_j[k]).all(axis=1))
        assert len(hit) >= 1
        assert all_states[hit[0]] == out.sidecar.state_j[k]


def test_augment_false_negative_rate():
    # draws that land on the anchor's own state should occur at the rate of that state's share
    ds = small_dataset(1000, seed=2)
    out = augment(ds, 5, np.random.default_rng(3))
    extra = out.take(np.arange(len(ds), len(out)))
    states = np.concatenate([ds.sidecar.state_i, ds.sidecar.state_j])
    share = {s: np.mean(states == s) for s in np.unique(states)}
    expected = np.mean([share[s] for s in extra.sidecar.state_i])
    observed = np.mean(extra.sidecar.state_i == extra.sidecar.state_j)
    assert abs(observed - expected) < 0.03


def test_split_holdout():
    ds = small_dataset(2500)
    train, hold = split_holdout(ds, 0.2, np.random.default_rng(0))
    assert (len(train), len(hold)) == (2000, 500)
    rows = {tuple(r) for r in np.round(ds.obs_i, 12)}
    got = [tuple(r) for r in np.round(np.concatenate([train.obs_i, hold.obs_i]), 12)]
    assert set(got) == rows and len(got) == len(ds)
    t2, h2 = split_holdout(ds, 0.2, np.random.default_rng(0))
    assert np.array_equal(train.obs_i, t2.obs_i) and np.array_equal(hold.obs_j, h2.obs_j)
    with pytest.raises(ValueError):
        split_holdout(augment(ds, 1, np.random.default_rng(0)), 0.2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        split_holdout(ds, 1.0, np.random.default_rng(0))


def test_training_view_has_no_sidecar():
    view = small_dataset(20).training_view()
    assert not hasattr(view, "sidecar")
    assert set(view._fields) == {"obs_i", "obs_j", "s", "augmented"}


def test_save_load_roundtrip(tmp_path):
    ds = augment(small_dataset(40, K=2), 1, np.random.default_rng(0))
    path = tmp_path / "d.bin"
    synthgen.save_dataset(ds, path)
    back = synthgen.load_dataset(path)
    assert np.array_equal(back.obs_i, ds.obs_i) and np.array_equal(back.obs_j, ds.obs_j)
    assert np.array_equal(back.s, ds.s) and np.array_equal(back.augmented, ds.augmented)
    assert np.array_equal(back.sidecar.state_j, ds.sidecar.state_j)
    assert np.array_equal(back.sidecar.jitter_i, ds.sidecar.jitter_i)
    assert np.array_equal(back.params.mix_view, ds.params.mix_view)
    with pytest.raises(IoError):
        synthgen.load_dataset(tmp_path / "missing.bin")


def test_export_csv(tmp_path):
    ds = small_dataset(5)
    synthgen.export_csv(ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert len(lines) == 6
    assert len(lines[0].split(",")) == 5 + 2 * ds.params.D


@given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_render_finite_and_shaped(V, K, seed):
    params = RenderParams.build(SHELF_ARRANGEMENT, V=V, K=K, seed=seed % 1000)
    rng = np.random.default_rng(seed)
    f = sample_factors(params, rng)
    assert 0 <= f.viewpoint < V
    assert f.distractors < (1 << K) if K else f.distractors == 0
    o = render(SHELF_ARRANGEMENT, worlds.enumerate_states(SHELF_ARRANGEMENT)[0], f, params, rng)
    assert o.shape == (params.D,) and np.all(np.isfinite(o))
