import numpy as np
import pytest

from src.engine import export
from src.engine.dynamics import initial_state, rollout
from src.engine.figures import export_figures
from src.models.filter_models import FilterBank, ParticleEnsemble
from src.models.learning_models import EpisodeLog, QWeights
from src.models.sensor_models import SensorWeights


def test_atlas_is_written_one_file_per_joint(nominal_atlas, tmp_path):
    paths = export.write_atlas(nominal_atlas, tmp_path)
    assert [p.name for p in paths] == [f"atlas_j{j}.csv" for j in range(1, 5)]
    header, columns = paths[0].read_text().splitlines()[:2]
    assert header.startswith("# period=")
    assert "omega0=" in header and f"K={nominal_atlas.samples}" in header
    assert columns == "theta,x,xdot"


def test_atlas_file_round_trip(nominal_atlas, tmp_path):
    export.write_atlas(nominal_atlas, tmp_path)
    loaded = export.read_atlas(tmp_path)
    np.testing.assert_array_equal(loaded.x, nominal_atlas.x)
    np.testing.assert_array_equal(loaded.xdot, nominal_atlas.xdot)
    np.testing.assert_array_equal(loaded.theta, nominal_atlas.theta)
    assert loaded.time_origin == nominal_atlas.time_origin
    assert loaded.period == nominal_atlas.period


def test_missing_atlas_is_reported(tmp_path):
    assert not export.has_atlas(tmp_path)
    with pytest.raises(FileNotFoundError):
        export.read_atlas(tmp_path)


def random_bank(rng, clock):
    ensembles = [ParticleEnsemble(theta=rng.uniform(0, 2 * np.pi, 6), omega=rng.uniform(0.95, 1.05, 6)) for _ in range(3)]
    return FilterBank(ensembles=ensembles, weights=SensorWeights(r=rng.normal(size=(3, 3)), alpha_h=0.02), clock=clock)


@pytest.mark.parametrize("clock", [12.34, None])
def test_bank_file_round_trip(rng, tmp_path, clock):
    bank = random_bank(rng, clock)
    names = [p.name for p in export.write_bank(bank, tmp_path)]
    assert names == [export.BANK_PARTICLES, export.BANK_WEIGHTS]
    assert export.has_bank(tmp_path)
    loaded = export.read_bank(tmp_path)
    np.testing.assert_array_equal(loaded.phases(), bank.phases())
    for before, after in zip(bank.ensembles, loaded.ensembles):
        np.testing.assert_array_equal(after.omega, before.omega)
    np.testing.assert_array_equal(loaded.weights.r, bank.weights.r)
    assert loaded.weights.alpha_h == 0.02
    assert loaded.clock == clock


def test_bank_with_mismatched_joints_is_rejected(rng, tmp_path):
    export.write_bank(random_bank(rng, 1.0), tmp_path)
    path = tmp_path / export.BANK_WEIGHTS
    path.write_text("\n".join(path.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(ValueError):
        export.read_bank(tmp_path)


def test_checkpoint_file_round_trip(rng, tmp_path):
    w = QWeights(w1=rng.normal(size=16), w2=rng.normal(size=32), w3=rng.uniform(0.1, 1, 5))
    loaded = export.read_checkpoint(export.write_checkpoint(w, tmp_path / export.CHECKPOINT))
    np.testing.assert_array_equal(loaded.vector, w.vector)


def test_checkpoint_with_unknown_group_is_rejected(tmp_path):
    path = tmp_path / export.CHECKPOINT
    path.write_text("group,index,value\nw1,0,0.1\nw4,0,0.2\n")
    with pytest.raises(ValueError):
        export.read_checkpoint(path)


def test_trajectory_columns(nominal_params, tmp_path):
    states = rollout(initial_state(nominal_params), nominal_params, 0.02, 3)
    frame = export.read_trajectory(export.write_trajectory(states, nominal_params, tmp_path / "traj.csv"))
    assert list(frame.columns) == (
        ["t"] + [f"q{i}" for i in range(1, 6)] + [f"qdot{i}" for i in range(1, 6)]
        + [f"x{i}" for i in range(1, 5)] + ["psi", "xcm", "ycm"]
    )
    assert len(frame) == 4
    np.testing.assert_allclose(frame["t"], [0.0, 0.02, 0.04, 0.06])


def test_metrics_rows():
    w = QWeights(w1=np.zeros(4), w2=np.zeros(8), w3=np.ones(2))
    logs = [
        EpisodeLog(episode=k, dt=0.5, horizon=1.0, bellman_errors=[1.0, 1.0], costs=[2.0, 4.0],
                   psi_trace=[0.0, -0.1, -0.3], weight_snapshot=w)
        for k in (1, 2)
    ]
    frame = export.metrics_frame(logs)
    assert list(frame.columns) == ["episode", "avg_bellman_error", "net_dpsi", "mean_cost", "sensor_drift"]
    assert frame.iloc[0, :4].tolist() == pytest.approx([1, 1.0, -0.3, 3.0])
    assert frame["sensor_drift"].isna().all()


def test_sensor_drift_is_largest_weight_change_per_episode():
    w = QWeights(w1=np.zeros(4), w2=np.zeros(8), w3=np.ones(2))
    snapshots = [np.zeros((2, 3)), np.array([[0.0, 0.2, 0.0], [-0.5, 0.0, 0.0]]), np.array([[0.0, 0.2, 0.001], [-0.5, 0.0, 0.0]])]
    logs = [
        EpisodeLog(episode=k + 1, dt=0.5, horizon=1.0, bellman_errors=[0.0], costs=[0.0], psi_trace=[0.0, 0.0],
                   weight_snapshot=w, sensor_weights=r)
        for k, r in enumerate(snapshots)
    ]
    drift = export.sensor_drift(logs)
    assert np.isnan(drift[0])
    np.testing.assert_allclose(drift[1:], [0.5, 0.001])


def test_figures_from_open_loop_output(nominal_atlas, nominal_params, tmp_path):
    export.write_atlas(nominal_atlas, tmp_path)
    states = rollout(initial_state(nominal_params), nominal_params, 0.02, 20)
    export.write_trajectory(states, nominal_params, tmp_path / export.OPEN_LOOP_TRAJECTORY)
    written = export_figures(tmp_path)
    assert {p.name for p in written} == {"limit_cycle.png", "turning.png"}
    assert all(p.stat().st_size > 0 for p in written)


def test_figures_need_an_existing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        export_figures(tmp_path / "missing")


def test_figures_of_empty_directory(tmp_path):
    assert export_figures(tmp_path) == []
