import numpy as np
import pytest

from ivfigures import SchemaError, read_curves, render
from ivfigures.cli import main
from ivfigures.plots import build_figures

HEADER = "x,estimator,mean,stderr,oracle,masked\n"


def write_scalar_curves(path, estimators=("tau_obs", "tau_iv", "tau_param"),
                        n=40, stderr=0.1):
    xs = np.linspace(-2.5, 2.5, n)
    lines = [HEADER.strip()]
    for name in estimators:
        for x in xs:
            oracle = 0.75 * x * x + 2 * x + 1
            mean = oracle + (0.5 if name == "tau_obs" else 0.05)
            lines.append(f"{x:.6g},{name},{mean:.6g},{stderr:.6g},{oracle:.6g},0")
    path.write_text("\n".join(lines) + "\n")


def write_401k_curves(path, n=12):
    xs = np.arange(6, 6 + n, dtype=float)
    lines = [HEADER.strip()]
    for name in ("tau_obs", "tau_iv", "tau_param"):
        for x in xs:
            masked = 1 if x < 12 else 0
            lines.append(f"{x:.6g},{name},{10 + x / 10:.6g},0,{9.5 + x / 10:.6g},{masked}")
    path.write_text("\n".join(lines) + "\n")


class TestParser:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "curves.csv"
        write_scalar_curves(path)
        data = read_curves(path)
        assert data.estimators == ("tau_obs", "tau_iv", "tau_param")
        assert data.x["tau_obs"].shape == (40,)
        assert data.n_rows == 120

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("x,estimator,mean\n0,a,1\n")
        with pytest.raises(SchemaError) as err:
            read_curves(path)
        assert err.value.line == 1

    def test_rejects_empty(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            read_curves(path)

    def test_rejects_header_only(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text(HEADER)
        with pytest.raises(SchemaError, match="no data rows"):
            read_curves(path)

    def test_rejects_missing_cell_with_line_number(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text(HEADER + "0,tau_obs,1,0,1,0\n0.5,tau_obs,1,0,1\n")
        with pytest.raises(SchemaError) as err:
            read_curves(path)
        assert err.value.line == 3

    def test_rejects_unparsable_float(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text(HEADER + "0,tau_obs,oops,0,1,0\n")
        with pytest.raises(SchemaError) as err:
            read_curves(path)
        assert err.value.line == 2

    def test_rejects_bad_masked(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text(HEADER + "0,tau_obs,1,0,1,2\n")
        with pytest.raises(SchemaError, match="masked"):
            read_curves(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError, match="not found"):
            read_curves(tmp_path / "nope.csv")


class TestRender:
    def test_scalar_writes_four_images(self, tmp_path):
        curves = tmp_path / "curves.csv"
        write_scalar_curves(curves)
        written = render(curves, tmp_path / "figs", mode="scalar")
        names = {p.name for p in written}
        assert names == {"tau_obs.png", "tau_iv.png", "tau_param.png", "overlay.png"}
        assert all(p.stat().st_size > 0 for p in written)

    def test_zero_stderr_bands_collapse(self, tmp_path):
        curves = tmp_path / "curves.csv"
        write_scalar_curves(curves, stderr=0.0)
        written = render(curves, tmp_path / "figs")
        assert len(written) == 4

    def test_rendering_never_mutates_input(self, tmp_path):
        curves = tmp_path / "curves.csv"
        write_scalar_curves(curves)
        before = curves.read_bytes()
        render(curves, tmp_path / "figs")
        assert curves.read_bytes() == before

    def test_401k_masked_region_dashed(self, tmp_path):
        curves = tmp_path / "curves.csv"
        write_401k_curves(curves)
        data = read_curves(curves)
        figures = build_figures(data, mode="401k")
        ax = figures["tau_param"].axes[0]
        styles = {line.get_linestyle() for line in ax.get_lines()}
        assert "--" in styles  # masked stretch
        assert "-" in styles   # unmasked stretch
        import matplotlib.pyplot as plt

        for fig in figures.values():
            plt.close(fig)

    def test_scalar_mode_has_no_dashed_estimator_lines(self, tmp_path):
        curves = tmp_path / "curves.csv"
        write_scalar_curves(curves)
        data = read_curves(curves)
        figures = build_figures(data, mode="scalar")
        ax = figures["tau_obs"].axes[0]
        styles = [line.get_linestyle() for line in ax.get_lines()]
        assert "--" not in styles
        import matplotlib.pyplot as plt

        for fig in figures.values():
            plt.close(fig)


class TestCli:
    def test_success_exit_zero(self, tmp_path, capsys):
        curves = tmp_path / "curves.csv"
        write_scalar_curves(curves)
        code = main(["--curves", str(curves), "--out", str(tmp_path / "figs")])
        assert code == 0
        assert "wrote" in capsys.readouterr().out

    def test_malformed_input_nonzero_exit(self, tmp_path, capsys):
        curves = tmp_path / "bad.csv"
        curves.write_text(HEADER + "0,tau_obs,not-a-number,0,1,0\n")
        code = main(["--curves", str(curves), "--out", str(tmp_path / "figs")])
        assert code == 2
        assert "line 2" in capsys.readouterr().err

    def test_empty_file_nonzero_exit(self, tmp_path):
        curves = tmp_path / "empty.csv"
        curves.write_text("")
        assert main(["--curves", str(curves), "--out", str(tmp_path / "f")]) == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_401k_mode(self, tmp_path):
        curves = tmp_path / "curves.csv"
        write_401k_curves(curves)
        code = main(["--curves", str(curves), "--out", str(tmp_path / "figs"),
                     "--mode", "401k"])
        assert code == 0
        assert (tmp_path / "figs" / "overlay.png").exists()
