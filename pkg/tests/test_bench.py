import numpy as np
import pytest

from diffinv import FixedPointVariant, ZeroPredictor
from diffinv.bench import (
    CSV_HEADER,
    DEFAULT_ITERS,
    ExperimentGrid,
    GridRow,
    method_config,
    run_grid,
    write_grid_csv,
)


class TestMethodConfig:
    def test_euler_is_none(self):
        assert method_config("euler", 20) is None

    @pytest.mark.parametrize(
        "method,variant",
        [
            ("plain", FixedPointVariant.PLAIN),
            ("averaged", FixedPointVariant.AVERAGED),
            ("anderson", FixedPointVariant.ANDERSON),
        ],
    )
    def test_variants(self, method, variant):
        cfg = method_config(method, 20)
        assert cfg.variant is variant
        assert cfg.iters == DEFAULT_ITERS[20]

    def test_iteration_budget_per_step_count(self):
        assert method_config("plain", 10).iters == 11
        assert method_config("plain", 20).iters == 6
        assert method_config("plain", 50).iters == 5
        assert method_config("plain", 13).iters == 6  # fallback
        assert method_config("plain", 20, iters=9).iters == 9

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            method_config("newton", 20)


class TestRunGrid:
    def test_single_cell_zero_predictor(self):
        grid = ExperimentGrid(
            step_counts=(10,), omegas=(1.0,), methods=("averaged",),
            dim=8, seed=5, predictor=ZeroPredictor(),
        )
        rows = run_grid(grid)
        assert len(rows) == 1
        row = rows[0]
        assert row.method == "averaged"
        assert row.steps == 10
        assert row.omega == 1.0
        assert row.round_trip_relative_l2 <= 1e-12
        assert np.isfinite(row.psnr)

    def test_row_count_and_canonical_order(self):
        grid = ExperimentGrid(
            step_counts=(20, 10), omegas=(1.0, 0.0), methods=("euler", "averaged"),
            dim=8, seed=0,
        )
        rows = run_grid(grid)
        assert len(rows) == 8
        keys = [(r.method, r.steps, r.omega) for r in rows]
        assert keys == sorted(keys)

    def test_fixed_point_beats_euler_at_zero_guidance(self):
        grid = ExperimentGrid(
            step_counts=(10, 20), omegas=(0.0,), methods=("euler", "averaged"),
            dim=16, seed=3,
        )
        rows = run_grid(grid)
        by_key = {(r.method, r.steps): r.round_trip_relative_l2 for r in rows}
        for steps in (10, 20):
            assert by_key[("averaged", steps)] < by_key[("euler", steps)]

    def test_default_grid_averaged_beats_euler_in_every_steps_row(self):
        # paired-run property on the default axes with the default predictor
        grid = ExperimentGrid(methods=("euler", "averaged"))
        rows = run_grid(grid)
        by_key = {(r.method, r.steps, r.omega): r.round_trip_relative_l2 for r in rows}
        default = ExperimentGrid()
        for steps in default.step_counts:
            assert by_key[("averaged", steps, 0.0)] < by_key[("euler", steps, 0.0)]

    def test_nfe_matches_instrumented_counts(self):
        grid = ExperimentGrid(
            step_counts=(10,), omegas=(1.0,), methods=("euler", "plain"), dim=8, seed=1
        )
        rows = run_grid(grid)
        by_method = {r.method: r for r in rows}
        assert by_method["euler"].nfe == 2 * 10
        assert by_method["plain"].nfe == 2 * 10 * (DEFAULT_ITERS[10] + 1)

    def test_grid_validation(self):
        with pytest.raises(ValueError, match="nonempty"):
            ExperimentGrid(step_counts=())
        with pytest.raises(ValueError, match="unknown methods"):
            ExperimentGrid(methods=("euler", "warp"))


class TestCsv:
    def test_header_and_formatting(self, tmp_path):
        rows = [
            GridRow("euler", 10, 0.0, 1.234567891234e-05, 87.65432109, 20, 12.5, 7),
        ]
        path = tmp_path / "g.csv"
        write_grid_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[1] == "euler,10,0,1.23456789e-05,87.6543211,20,0,7"

    def test_timing_flag_controls_wall_column(self, tmp_path):
        rows = [GridRow("euler", 10, 0.0, 1e-5, 80.0, 20, 12.5, 7)]
        path = tmp_path / "g.csv"
        write_grid_csv(rows, path, timing=True)
        assert ",12.5," in path.read_text()

    def test_byte_determinism(self, tmp_path):
        grid = ExperimentGrid(
            step_counts=(10,), omegas=(0.0, 1.0), methods=("euler", "averaged"),
            dim=8, seed=9,
        )
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_grid_csv(run_grid(grid), p1)
        write_grid_csv(run_grid(grid), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_newline_discipline(self, tmp_path):
        rows = [GridRow("euler", 10, 0.0, 1e-5, 80.0, 20, 0.0, 7)]
        path = tmp_path / "g.csv"
        write_grid_csv(rows, path)
        blob = path.read_bytes()
        assert b"\r" not in blob
        assert blob.endswith(b"\n")
