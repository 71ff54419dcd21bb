import math

import numpy as np
import pytest

from lindey.errors import InvalidArgument
from lindey.fock import BasisKind, InputState
from lindey.protocol import (
    Interferometer,
    NoiseOp,
    NoisePlacement,
    ProtocolConfig,
    default_config_for,
    run_protocol,
)

from reference import final_state

# N=2 twin-Fock, L=S+, gamma=0.05, delta=0.5, T_H=2.3; computed with the matrix-exponential reference
FROZEN_TF2_SPLUS = np.array([
    [0.42131681303842, -0.2350056586764 - 0.04033868584082j, -0.32994544875053],
    [-0.2350056586764 + 0.04033868584082j, 0.15736637392317, 0.2350056586764 - 0.04033868584082j],
    [-0.32994544875053, 0.2350056586764 + 0.04033868584082j, 0.42131681303842],
])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=0, input_state="n0"),
        dict(n=1.5, input_state="n0"),
        dict(n=3, input_state="tf"),
        dict(n=2, input_state="n0", gamma=-0.1),
        dict(n=2, input_state="n0", delta=math.nan),
        dict(n=2, input_state="n0", t_bs_first=-1),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgument):
        ProtocolConfig(**kwargs)


def test_config_coerces_enums():
    cfg = ProtocolConfig(n=2, input_state="noon", noise_op="s+", noise_placement="whole")
    assert cfg.input_state is InputState.NOON
    assert cfg.noise_op is NoiseOp.SPLUS
    assert cfg.noise_placement is NoisePlacement.WHOLE_PROCESS
    assert cfg.basis_kind is BasisKind.FIXED_N
    assert cfg.replace(noise_op="alpha").basis_kind is BasisKind.TRUNCATED
    with pytest.raises(ValueError):
        ProtocolConfig(n=2, input_state="fock")


def test_default_splitters():
    assert default_config_for("n0", 4).t_bs_first == pytest.approx(math.pi / 4)
    assert default_config_for("tf", 4).t_bs_second == pytest.approx(math.pi / 4)
    assert default_config_for("noon", 1).t_bs_first == pytest.approx(math.pi / 4)
    assert default_config_for("noon", 2).t_bs_first == pytest.approx(math.pi / 2)
    assert default_config_for("noon", 2, t_bs_first=0.3).t_bs_first == 0.3


def test_frozen_final_state():
    run = run_protocol(default_config_for("tf", 2, noise_op="s+", gamma=0.05), 2.3)
    assert np.max(np.abs(run.rho_final - FROZEN_TF2_SPLUS)) < 1e-10


@pytest.mark.parametrize(
    "inp,n,noise,placement",
    [
        ("n0", 1, "s-", "hold"),
        ("noon", 2, "sz", "hold"),
        ("n0", 3, "s+", "whole"),
        ("tf", 2, "alpha", "hold"),
        ("n0", 2, "alpha", "whole"),
    ],
)
def test_pipeline_matches_reference(inp, n, noise, placement):
    cfg = default_config_for(inp, n, noise_op=noise, gamma=0.07, noise_placement=placement)
    run = Interferometer(cfg).run(1.9)
    ref, _ = final_state(n, inp, noise, 0.07, 0.5, 1.9, tbs1=cfg.t_bs_first, truncated=noise == "alpha",
                         whole=placement == "whole")
    assert np.max(np.abs(run.rho_final - ref)) < 1e-10
    assert run.rho_after_bs1.shape == run.rho_after_hold.shape == ref.shape


def test_final_states_follow_single_runs():
    ifo = Interferometer(default_config_for("n0", 2, noise_op="sz", gamma=0.02))
    grid = [0.0, 0.5, 1.25]
    traj = list(ifo.final_states(grid))
    for t, rho in zip(grid, traj):
        assert np.allclose(rho, ifo.run(t).rho_final, atol=1e-13)


def test_run_with_delta_override_reports_that_delta():
    ifo = Interferometer(default_config_for("n0", 1))
    run = ifo.run(1.0, delta=0.7)
    assert run.config.delta == 0.7
    with pytest.raises(InvalidArgument):
        ifo.run(-0.1)


def test_noon_metadata_note():
    assert "noon_first_splitter" in Interferometer(default_config_for("noon", 4)).metadata
    assert Interferometer(default_config_for("noon", 2)).metadata == {}


def test_zero_rate_is_unitary():
    run = run_protocol(default_config_for("tf", 4, noise_op="s-", gamma=0.0), 3.0)
    rho = run.rho_final
    assert np.trace(rho @ rho).real == pytest.approx(1, abs=1e-10)


def test_bs1_state_is_cached_and_frozen():
    ifo = Interferometer(default_config_for("n0", 2))
    a = ifo.after_bs1()
    assert ifo.after_bs1() is a
    with pytest.raises(ValueError):
        a[0, 0] = 0


@pytest.mark.parametrize("inp,n", [("n0", 3), ("tf", 2), ("noon", 2)])
def test_zero_rate_placement_is_irrelevant(inp, n):
    hold = run_protocol(default_config_for(inp, n, noise_op="s-", gamma=0.0), 2.2).rho_final
    whole = run_protocol(default_config_for(inp, n, noise_op="s-", gamma=0.0, noise_placement="whole"), 2.2)
    assert np.max(np.abs(hold - whole.rho_final)) < 1e-10


@pytest.mark.parametrize("t", [0.0, 0.9, 3.3, 10.0])
def test_noiseless_single_particle_fringe(t):
    run = run_protocol(default_config_for("n0", 1, noise_op="none", gamma=0.3), t)
    imbalance = (run.rho_final[1, 1] - run.rho_final[0, 0]).real
    assert imbalance == pytest.approx(math.cos(0.5 * t), abs=1e-9)
