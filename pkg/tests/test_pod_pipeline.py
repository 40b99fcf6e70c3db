from dataclasses import replace

import numpy as np
import pytest

from clstm_rom import archive, linalg, ode
from clstm_rom import pod_pipeline as pp
from clstm_rom import twostage as ts
from clstm_rom.linalg import ContractError, PodBasis

from helpers import rigged_model
from oracles import dft_magnitude

SPEC = ode.SurrogateSpec(n=40, blocks=2, periodic_modes=3, transient_modes=2)
STAGE = ts.StageConfig(hidden=6, channels=4, epochs=2, batch_size=32, lr=3e-3)


def _trajs(thetas=(0.0, 1.0, 2.0), steps=160, swing=30):
    return [ode.synth_cavity_like(SPEC, th, 0.1, steps, swing) for th in thetas]


def _config(n_i, cap=None, energy=0.9999, w=10, m=1):
    c = ts.TwoStageConfig(k=2, w=w, m=m, sample_stride=4, first=STAGE, second=STAGE)
    return pp.PipelineConfig(n_i=n_i, energy_target=energy, coeff_cap=cap, blocks=(1, 1), model_1=c, model_2=c)


@pytest.fixture(scope="module")
def pipe():
    return pp.build_pipeline(_trajs(), _config(40))


@pytest.fixture(scope="module")
def flat_pipe():
    return pp.build_pipeline(_trajs(), _config(0))


# ---------------------------------------------------------------- reduce


def test_reduce_full_rank_is_lossless():
    traj = _trajs()[0]
    basis = linalg.pod(traj.states, 1.0)
    red = pp.reduce(traj, basis)
    assert red.basis_id == "basis_1" and red.coeffs.shape[0] == basis.n_modes
    back = linalg.pod_lift(basis, red.coeffs)
    assert np.linalg.norm(back - traj.states) <= 1e-10 * np.linalg.norm(traj.states)


def test_reduce_three_mode_surrogate():
    spec = ode.SurrogateSpec(n=60, blocks=1, periodic_modes=3, transient_modes=0)
    traj = ode.synth_cavity_like(spec, 0.5, 0.1, 200, 0)
    basis = linalg.pod(traj.states, 0.9999)
    assert basis.n_modes == 3
    rec = linalg.pod_lift(basis, pp.reduce(traj.states, basis))
    assert np.linalg.norm(rec - traj.states) / np.linalg.norm(traj.states) <= 1e-4


def test_cap_is_independent_of_energy_rank():
    trajs = _trajs()
    s = np.hstack([t.states for t in trajs])
    full = linalg.block_pod(s, [20, 20], 0.9999)
    capped = linalg.block_pod(s, [20, 20], 0.9999, cap=3)
    assert full.n_modes > 3 and capped.n_modes == 3
    assert pp.reduce(s, capped).shape == (3, s.shape[1])


def test_lift_project_idempotent(pipe):
    x = np.random.default_rng(0).standard_normal((40, 5))
    a = pp.reduce(x, pipe.basis_1)
    b = pp.reduce(linalg.pod_lift(pipe.basis_1, a), pipe.basis_1)
    assert np.max(np.abs(a - b)) <= 1e-12


# ---------------------------------------------------------------- build


def test_periodic_basis_is_smaller(pipe):
    assert pipe.basis_2.n_modes < pipe.basis_1.n_modes
    # constructed mode counts: 3 periodic per block, plus 2 transient per block
    assert pipe.basis_2.n_modes == 6
    assert pipe.basis_1.n_modes == 10


def test_m_is_basis_change(pipe):
    assert np.array_equal(pipe.M, pipe.basis_2.modes.T @ pipe.basis_1.modes)
    assert pipe.M.shape == (pipe.basis_2.n_modes, pipe.basis_1.n_modes)


@pytest.mark.parametrize("seed", range(100))
def test_m_application_equals_lift_then_project(pipe, seed):
    c = np.random.default_rng(seed).standard_normal(pipe.basis_1.n_modes)
    direct = pipe.M @ c
    via = pipe.basis_2.modes.T @ (pipe.basis_1.modes @ c)
    assert np.max(np.abs(direct - via)) <= 1e-12


def test_zero_swing_in_gives_identity(flat_pipe):
    assert flat_pipe.basis_1 is flat_pipe.basis_2
    assert np.array_equal(flat_pipe.M, np.eye(flat_pipe.basis_1.n_modes))
    assert flat_pipe.model_2 is flat_pipe.model_1


def test_build_contract():
    with pytest.raises(ContractError):
        pp.build_pipeline(_trajs(steps=30), _config(40))
    with pytest.raises(ContractError):
        pp.build_pipeline(_trajs(), replace(_config(10), model_1=None))
    with pytest.raises(ContractError):
        pp.block_sizes(41, (1, 1))


def test_archive_keeps_m_bit_exact(pipe, tmp_path):
    path = tmp_path / "p.romf"
    archive.save(path, pipe)
    back, _ = archive.load(path)
    assert np.array_equal(back.M, pipe.M)
    assert back.M.tobytes() == pipe.M.tobytes()
    assert back.n_i == pipe.n_i


# ---------------------------------------------------------------- rollout


def test_zero_swing_in_matches_single_model(flat_pipe):
    traj = _trajs((0.7,), steps=60)[0]
    win = traj.states[:, :10]
    full = pp.pipeline_rollout(flat_pipe, win, traj.theta, 25)
    coeffs = pp.reduce(win, flat_pipe.basis_1)
    single = ts.rollout(flat_pipe.model_1, coeffs.T, traj.theta, 25)
    assert np.array_equal(full.predicted, linalg.pod_lift(flat_pipe.basis_1, single.predicted))


def test_horizon_equal_to_swing_in_uses_model_1_only(pipe):
    traj = _trajs((0.7,), steps=60)[0]
    out = pp.pipeline_rollout(pipe, traj.states[:, :10], traj.theta, pipe.n_i)
    assert out.coeffs_2.shape[1] == 0
    direct = ts.rollout(pipe.model_1, pp.reduce(traj.states[:, :10], pipe.basis_1).T, traj.theta, pipe.n_i)
    assert np.array_equal(out.predicted, linalg.pod_lift(pipe.basis_1, direct.predicted))


def test_rollout_contract(pipe):
    traj = _trajs((0.7,), steps=60)[0]
    with pytest.raises(ContractError):
        pp.pipeline_rollout(pipe, traj.states[:, :10], traj.theta, pipe.n_i - 1)


def test_rigged_identity_pipeline_is_constant():
    n = 3
    eye = PodBasis(np.eye(n), np.ones(n), 1.0, n)
    model = rigged_model(z=n, w=4, m=2)
    cfg = pp.PipelineConfig(n_i=3, model_1=model.config, model_2=model.config)
    pipe = pp.PipelineModel(eye, eye, model, model, np.eye(n), 3, cfg)
    window = np.random.default_rng(1).uniform(-1, 1, (n, 4))
    out = pp.pipeline_rollout(pipe, window, [0.5], 9)
    assert out.predicted.shape == (n, 9)
    assert np.allclose(out.predicted, window[:, -1:], atol=1e-14)


def test_divergence_is_labelled_by_phase(pipe):
    bad_g = replace(pipe.model_2.second_stage, params={
        **pipe.model_2.second_stage.params, "head.b": np.full_like(pipe.model_2.second_stage.params["head.b"], np.nan)})
    bad = replace(pipe, model_2=replace(pipe.model_2, second_stage=bad_g))
    traj = _trajs((0.7,), steps=60)[0]
    with pytest.raises(ode.DivergenceError, match="phase 2"):
        pp.pipeline_rollout(bad, traj.states[:, :10], traj.theta, pipe.n_i + 5)


def test_error_decomposition_triangle(pipe):
    traj = _trajs((0.7,), steps=90)[0]
    out = pp.pipeline_rollout(pipe, traj.states[:, :10], traj.theta, 40)
    truth = traj.states[:, 10:50]
    d = pp.error_decomposition(pipe, truth, out.predicted)
    assert np.all(d["total"] <= d["projection"] + d["model"] + 1e-12)


# ---------------------------------------------------------------- spectra


def test_dominant_bin_of_pure_sinusoid():
    t = np.arange(256)
    assert pp.dominant_bins(np.sin(2 * np.pi * 8 * t / 256))[0] == 8


def test_two_sinusoids_match_dft_oracle():
    t = np.arange(128)
    x = 2.0 * np.sin(2 * np.pi * 5 * t / 128) + np.cos(2 * np.pi * 19 * t / 128 + 0.3)
    ours = np.abs(np.fft.rfft(x))
    ref = dft_magnitude(list(x))
    assert np.max(np.abs(ours - ref)) < 1e-9
    peaks = sorted(np.argsort(ref)[-2:].tolist())
    assert peaks == [5, 19]
    assert pp.dominant_bins(x)[0] == 5


def test_spectral_compare_pairs():
    t = np.arange(64)
    a = np.vstack([np.sin(2 * np.pi * 3 * t / 64), np.sin(2 * np.pi * 7 * t / 64)])
    assert pp.spectral_compare(a, a[::-1]) == [(3, 7), (7, 3)]
    with pytest.raises(ContractError):
        pp.spectral_compare(a, a[:, :10])


def test_suggest_swing_in():
    spec = ode.SurrogateSpec(n=20, blocks=1, periodic_modes=2, transient_modes=1, omega0=1.0, omega_slope=0.0)
    traj = ode.synth_cavity_like(spec, 0.0, 0.1, 800, 120)
    coeffs = linalg.pod(traj.states, 0.9999).modes.T @ traj.states
    n_i = pp.suggest_n_i(coeffs)
    assert n_i is not None and 0 < n_i <= 120
    settled = ode.synth_cavity_like(spec, 0.0, 0.1, 800, 0)
    assert pp.suggest_n_i(linalg.pod(settled.states, 0.9999).modes.T @ settled.states) == 0
