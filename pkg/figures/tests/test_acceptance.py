"""Acceptance: render panels from a scalar curve file; dash the
no-compliance region in 401k mode; reject malformed input."""

from test_render import write_401k_curves, write_scalar_curves

from ivfigures import read_curves, render
from ivfigures.cli import main
from ivfigures.plots import build_figures


def _report(name: str, ok: bool) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return ok


def test_acceptance_render(tmp_path):
    curves = tmp_path / "curves.csv"
    write_scalar_curves(curves)
    written = render(curves, tmp_path / "figs", mode="scalar")
    ok = len(written) == 4 and all(p.exists() and p.stat().st_size > 0
                                   for p in written)
    assert _report("figures: 4 images from a 3-estimator scalar curves file", ok)


def test_acceptance_401k_dashed(tmp_path):
    import matplotlib.pyplot as plt

    curves = tmp_path / "curves.csv"
    write_401k_curves(curves)
    figures = build_figures(read_curves(curves), mode="401k")
    styles = {line.get_linestyle()
              for fig in figures.values() for line in fig.axes[0].get_lines()}
    for fig in figures.values():
        plt.close(fig)
    assert _report("figures: no-compliance region drawn dashed in 401k mode",
                   "--" in styles)


def test_acceptance_malformed_input(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,estimator,mean,stderr,oracle,masked\n1,tau_obs,oops,0,1,0\n")
    code = main(["--curves", str(bad), "--out", str(tmp_path / "figs")])
    assert _report("figures: malformed input exits nonzero", code != 0)
