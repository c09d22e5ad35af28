"""Batch harness: config round trips, sweep/bounds/diagnose commands."""

from dataclasses import replace

import numpy as np
import pytest

from mirrormotion import cli, est, sim

from conftest import ALPHA_SQS


@pytest.fixture()
def tiny_config(tmp_path):
    """Reference constants with a short, few-trial simulation for fast runs."""
    base = cli.reference_config()
    return replace(
        base,
        simulation=replace(base.simulation, n_samples=4000, n_trials=3, edge_discard=5e-5),
        out_dir=str(tmp_path / "results"),
    )


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        config = cli.reference_config()
        path = tmp_path / "default.cfg"
        cli.write_config(config, path)
        assert cli.read_config(path) == config

    def test_round_trip_after_edit(self, tmp_path):
        base = cli.reference_config()
        config = replace(
            base,
            eta_det=1.0,
            alpha_sqs=(2.0e5, 7.7e6),
            simulation=replace(base.simulation, seed=99, mode="nonlinear"),
        )
        path = tmp_path / "edited.cfg"
        cli.write_config(config, path)
        assert cli.read_config(path) == config

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("mirror.masss = 1.0\n")
        with pytest.raises(ValueError, match="unknown config keys"):
            cli.read_config(path)

    def test_comments_and_defaults(self, tmp_path):
        path = tmp_path / "partial.cfg"
        path.write_text("# only override the seed\nsim.seed = 7\n")
        config = cli.read_config(path)
        assert config.simulation.seed == 7
        assert config.mirror == cli.reference_config().mirror

    def test_missing_transfer_file_rejected(self):
        with pytest.raises(ValueError, match="not found"):
            replace(cli.reference_config(), tf_source="/nonexistent/gqf.csv")

    def test_reference_config_values(self):
        config = cli.reference_config()
        assert config.alpha_sqs == ALPHA_SQS
        assert config.simulation.dt == 1e-7
        assert config.simulation.n_samples * config.simulation.dt == pytest.approx(1e-3)
        assert config.simulation.n_trials == 300
        assert config.simulation.feedback_delay_samples == 4
        assert config.eta_det == 0.871


class TestSweep:
    def test_row_cardinality_and_columns(self, tiny_config):
        rows = cli.cmd_sweep(tiny_config)
        assert len(rows) == 3 * 2 * len(tiny_config.alpha_sqs)
        assert set(rows[0]) == set(cli.SWEEP_COLUMNS)
        csv_path = f"{tiny_config.out_dir}/sweep.csv"
        lines = open(csv_path).read().splitlines()
        assert lines[0] == ",".join(cli.SWEEP_COLUMNS)
        assert len(lines) == 1 + len(rows)

    def test_bit_identical_reruns(self, tiny_config, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        cli.cmd_sweep(tiny_config, out_path=out1)
        cli.cmd_sweep(tiny_config, out_path=out2)
        assert out1.read_bytes() == out2.read_bytes()

    def test_worker_pool_matches_serial(self, tiny_config, tmp_path):
        config = replace(tiny_config, alpha_sqs=(1.02e6,))
        serial = tmp_path / "serial.csv"
        pooled = tmp_path / "pooled.csv"
        cli.cmd_sweep(config, out_path=serial, workers=1)
        cli.cmd_sweep(config, out_path=pooled, workers=2)
        assert serial.read_bytes() == pooled.read_bytes()

    def test_coherent_bound_equals_mmse_at_unit_efficiency(self, tiny_config):
        config = replace(tiny_config, eta_det=1.0, alpha_sqs=(1.02e6,))
        rows = cli.cmd_sweep(config)
        for row in rows:
            if row["probe"] == "coherent":
                assert row["qcrb_coh"] == pytest.approx(row["mmse"], rel=1e-9)

    def test_seed_changes_results(self, tiny_config, tmp_path):
        out1 = tmp_path / "s1.csv"
        out2 = tmp_path / "s2.csv"
        config2 = replace(
            tiny_config, simulation=replace(tiny_config.simulation, seed=1234)
        )
        cli.cmd_sweep(tiny_config, out_path=out1)
        cli.cmd_sweep(config2, out_path=out2)
        assert out1.read_bytes() != out2.read_bytes()

    def test_failed_point_keeps_partial_csv(self, tiny_config, tmp_path, monkeypatch, capsys):
        real = cli.run_sweep_point

        def flaky(config, kind, alpha_sq, grid=None, workers=1):
            if kind == "squeezed" and alpha_sq == tiny_config.alpha_sqs[0]:
                raise RuntimeError("synthetic point failure")
            return real(config, kind, alpha_sq, grid=grid, workers=workers)

        monkeypatch.setattr(cli, "run_sweep_point", flaky)
        out = tmp_path / "partial.csv"
        rows = cli.cmd_sweep(tiny_config, out_path=out)
        assert len(rows) == 3 * (2 * len(tiny_config.alpha_sqs) - 1)
        assert "synthetic point failure" in capsys.readouterr().err
        assert len(out.read_text().splitlines()) == 1 + len(rows)


class TestBounds:
    def test_curves_decrease_and_cover_sweep_points(self, tiny_config):
        rows = cli.cmd_bounds(tiny_config, n_points=9)
        alphas = sorted({row["alpha_sq"] for row in rows})
        for a in tiny_config.alpha_sqs:
            assert a in alphas
        for x in ("q", "p", "f"):
            for col in ("mmse_coh", "mmse_sq", "qcrb_coh", "qcrb_sq"):
                curve = [row[col] for row in rows if row["var"] == x]
                assert np.all(np.diff(curve) < 0)

    def test_bound_columns_match_direct_evaluation(self, tiny_config):
        rows = cli.cmd_bounds(tiny_config, n_points=2)
        priors = tiny_config.priors()
        grid = est.SpectralGrid.build(priors)
        for row in rows:
            if row["alpha_sq"] in tiny_config.alpha_sqs:
                coh = tiny_config.probe_template("coherent", row["alpha_sq"])
                assert row["qcrb_coh"] == pytest.approx(
                    est.qcrb(row["var"], priors, coh, grid), rel=1e-12
                )

    def test_unit_efficiency_traces_coincide(self, tiny_config):
        config = replace(tiny_config, eta_det=1.0, alpha_sqs=(1.02e6, 6.24e6))
        for row in cli.cmd_bounds(config, n_points=3):
            assert row["mmse_coh"] == pytest.approx(row["qcrb_coh"], rel=1e-9)
            assert row["mmse_sq"] > row["qcrb_sq"]  # impure squeezing stays above


class TestDiagnose:
    def test_operating_band_matches_published_range(self):
        # the self-consistent tracking error puts the effective squeezing
        # factor inside the reported -3.28 .. -3.48 dB operating band
        config = cli.reference_config()
        dbs = [cli.diagnose_point(config, a).r_sq_eff_db for a in config.alpha_sqs]
        assert all(-3.50 <= db <= -3.27 for db in dbs)
        assert dbs[0] == pytest.approx(-3.28, abs=0.03)
        assert dbs[-1] == pytest.approx(-3.48, abs=0.03)
        assert np.all(np.diff(dbs) < 0)

    def test_gaps_and_linearization(self):
        config = cli.reference_config()
        d = cli.diagnose_point(config, 1.02e6)
        assert d.attainability_coherent == pytest.approx(1.0, rel=1e-12)
        assert d.attainability_squeezed > 1.7
        assert d.linearization_check < 0.1
        assert d.broadband.ok

    def test_report_text(self):
        config = replace(cli.reference_config(), alpha_sqs=(1.02e6,))
        text = cli.cmd_diagnose(config)
        for token in (
            "sigma_phi^2",
            "effective R_sq",
            "attainability gap coherent",
            "broadband",
            "dB",
        ):
            assert token in text


class TestSimulateCommand:
    def test_dump_trajectories(self, tiny_config):
        config = replace(
            tiny_config, simulation=replace(tiny_config.simulation, n_trials=2)
        )
        point = cli.cmd_simulate(
            config, "coherent", 1.02e6, dump_trajectories=True
        )
        assert point.n_diverged == 0
        out = f"{config.out_dir}/trajectories_coherent_1.020e+06"
        import os

        files = sorted(os.listdir(out))
        assert files == ["trial_0000.csv", "trial_0001.csv"]
        header = open(f"{out}/{files[0]}").readline().strip()
        assert header == "t,f,q,p,phi,phi_fb,y"


class TestMainEntry:
    def test_write_config_and_diagnose(self, tmp_path, capsys):
        cfg_path = tmp_path / "canonical.cfg"
        assert cli.main(["write-config", str(cfg_path)]) == 0
        assert cli.read_config(cfg_path) == cli.reference_config()

        assert (
            cli.main(
                ["--config", str(cfg_path), "diagnose"]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "operating-point diagnostics" in out

    def test_sweep_command(self, tmp_path, capsys):
        cfg = replace(
            cli.reference_config(),
            alpha_sqs=(1.02e6,),
            simulation=replace(
                cli.reference_config().simulation, n_samples=4000, edge_discard=5e-5
            ),
        )
        cfg_path = tmp_path / "tiny.cfg"
        cli.write_config(cfg, cfg_path)
        code = cli.main(
            [
                "--config", str(cfg_path),
                "--trials", "2",
                "--out", str(tmp_path / "out"),
                "--seed", "5",
                "sweep",
            ]
        )
        assert code == 0
        assert "wrote 6 rows" in capsys.readouterr().out
        assert (tmp_path / "out" / "sweep.csv").exists()
