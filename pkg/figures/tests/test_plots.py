"""Figure contracts: plotted series equal CSV values exactly, schema
violations are cited precisely, smoothing is hand-checkable."""

import csv

import matplotlib.pyplot as plt
import pytest

from pathforge_figures.cli import main
from pathforge_figures.plots import (
    AGGREGATE_HEADER,
    RUN_HEADER,
    FigureError,
    load_curveset,
    plot_learning_curves,
    plot_pretrain_curve,
    smooth,
)


def write_aggregate(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_HEADER)
        writer.writerows(rows)


def three_scenario_rows():
    rows = []
    for scenario, base in (("none", 10.0), ("decexp", 8.0), ("uniform", 5.0)):
        for policy, offset in (("gnn", 4.0), ("random", 0.0)):
            for epoch in (1, 2, 3):
                mean = base + offset + epoch
                rows.append(
                    [scenario, policy, epoch, repr(mean), repr(mean - 1.0),
                     repr(mean + 1.5), 10]
                )
    return rows


@pytest.fixture(autouse=True)
def close_figures():
    yield
    plt.close("all")


class TestLoadCurveset:
    def test_parses_and_groups(self, tmp_path):
        path = tmp_path / "agg.csv"
        write_aggregate(path, three_scenario_rows())
        curves = load_curveset(path)
        assert set(curves) == {"none", "decexp", "uniform"}
        assert curves["none"]["gnn"][0] == (1, 15.0, 14.0, 16.5)
        assert [e for e, *_ in curves["uniform"]["random"]] == [1, 2, 3]

    def test_directory_source(self, tmp_path):
        write_aggregate(tmp_path / "a.csv", three_scenario_rows()[:6])
        write_aggregate(tmp_path / "b.csv", three_scenario_rows()[6:])
        assert set(load_curveset(tmp_path)) == {"none", "decexp", "uniform"}

    def test_missing_column_cited(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("scenario,policy,epoch\nnone,gnn,1\n")
        with pytest.raises(FigureError, match="expected columns"):
            load_curveset(path)

    def test_band_violation_cites_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_aggregate(path, [["none", "gnn", 1, "5.0", "6.0", "7.0", 3]])
        with pytest.raises(FigureError, match="row 2"):
            load_curveset(path)

    def test_non_numeric_cited(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_aggregate(path, [["none", "gnn", 1, "abc", "0", "1", 3]])
        with pytest.raises(FigureError, match="mean_return"):
            load_curveset(path)

    def test_epoch_must_increase(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_aggregate(
            path,
            [["none", "gnn", 2, "1.0", "0.5", "1.5", 3],
             ["none", "gnn", 1, "1.0", "0.5", "1.5", 3]],
        )
        with pytest.raises(FigureError, match="not increasing"):
            load_curveset(path)

    def test_empty_dir(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(FigureError, match="no CSV"):
            load_curveset(empty)


class TestLearningCurves:
    def test_three_panels_in_fixed_order(self, tmp_path):
        path = tmp_path / "agg.csv"
        write_aggregate(path, three_scenario_rows())
        fig = plot_learning_curves(path, tmp_path / "out.png")
        assert len(fig.axes) == 3
        titles = [ax.get_title() for ax in fig.axes]
        assert titles == [
            "no prior knowledge",
            "decreasing-exponential prior",
            "uniform prior",
        ]
        assert (tmp_path / "out.png").stat().st_size > 0

    def test_plotted_series_equal_csv_exactly(self, tmp_path):
        path = tmp_path / "agg.csv"
        rows = three_scenario_rows()
        write_aggregate(path, rows)
        fig = plot_learning_curves(path)
        curves = load_curveset(path)
        for ax, scenario in zip(fig.axes, ("none", "decexp", "uniform")):
            by_label = {line.get_label(): line for line in ax.get_lines()}
            for policy, pts in curves[scenario].items():
                x, y = by_label[policy].get_data()
                assert list(x) == [e * 5 for e, *_ in pts]
                assert list(y) == [m for _, m, _, _ in pts]
            # one band per line, drawn from the CI columns verbatim
            assert len(ax.collections) == len(curves[scenario])

    def test_band_edges_are_ci_columns(self, tmp_path):
        path = tmp_path / "agg.csv"
        write_aggregate(
            path, [["none", "gnn", e, repr(float(e)), repr(e - 0.5), repr(e + 0.25), 4]
                   for e in (1, 2)]
        )
        fig = plot_learning_curves(path)
        band = fig.axes[0].collections[0].get_paths()[0]
        ys = band.vertices[:, 1]
        assert {0.5, 1.5, 1.25, 2.25} <= {round(float(v), 6) for v in ys}

    def test_single_scenario_single_panel(self, tmp_path):
        path = tmp_path / "agg.csv"
        write_aggregate(path, [["uniform", "cmab", 1, "2.0", "1.0", "3.0", 5]])
        fig = plot_learning_curves(path)
        assert len(fig.axes) == 1


class TestPretrainCurve:
    def write_run(self, path, pairs):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RUN_HEADER)
            for step, reward in pairs:
                writer.writerow(["pre", 0, step, "train", repr(reward), 90])

    def test_window_one_is_raw(self, tmp_path):
        path = tmp_path / "run.csv"
        self.write_run(path, [(1024, 3.0), (2048, 5.0), (3072, 4.0)])
        fig = plot_pretrain_curve(path, tmp_path / "pre.png", window=1)
        raw, smoothed = fig.axes[0].get_lines()
        assert list(raw.get_ydata()) == [3.0, 5.0, 4.0]
        assert list(smoothed.get_ydata()) == [3.0, 5.0, 4.0]
        assert (tmp_path / "pre.png").stat().st_size > 0

    def test_smoothing_constant_is_identity(self, tmp_path):
        path = tmp_path / "run.csv"
        self.write_run(path, [(s, 7.0) for s in (1, 2, 3, 4)])
        fig = plot_pretrain_curve(path, window=3)
        assert list(fig.axes[0].get_lines()[1].get_ydata()) == [7.0] * 4

    def test_empty_errors(self, tmp_path):
        path = tmp_path / "run.csv"
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(RUN_HEADER)
        with pytest.raises(FigureError, match="no train rows"):
            plot_pretrain_curve(path)


class TestSmooth:
    def test_hand_computed(self):
        assert smooth([1.0, 2.0, 3.0, 4.0], 2) == [1.0, 1.5, 2.5, 3.5]

    def test_window_longer_than_series(self):
        assert smooth([2.0, 4.0], 10) == [2.0, 3.0]

    def test_bad_window(self):
        with pytest.raises(FigureError):
            smooth([1.0], 0)


class TestCli:
    def test_curves_command(self, tmp_path, capsys):
        path = tmp_path / "agg.csv"
        write_aggregate(path, three_scenario_rows())
        out = tmp_path / "fig.png"
        assert main(["curves", "--in", str(path), "--out", str(out)]) == 0
        assert out.exists()
        assert str(out) in capsys.readouterr().out

    def test_schema_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        assert main(["curves", "--in", str(bad), "--out", str(tmp_path / "f.png")]) == 2
        assert "expected columns" in capsys.readouterr().err
