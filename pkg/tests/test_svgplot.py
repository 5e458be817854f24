"""Hand-emitted SVG charts: structure, determinism, golden files."""

import pathlib
import re
import xml.etree.ElementTree as ET

import pytest

from otvq.svgplot import Histogram, Series, emit_svg, render_histogram, render_series

GOLDEN = pathlib.Path(__file__).parent / "golden"


def _fixture_series():
    return Series(xs=[0, 50, 100, 150, 200], ys=[1.25, 0.8, 0.52, 0.41, 0.385],
                  title="fixture curve", x_label="iteration", y_label="loss")


def _fixture_hist():
    return Histogram(values=[3, 7, 0, 5], title="fixture histogram",
                     x_label="codeword", y_label="count")


def test_series_matches_golden_file():
    assert render_series(_fixture_series()) == (GOLDEN / "curve.svg").read_text()


def test_histogram_matches_golden_file():
    assert render_histogram(_fixture_hist()) == (GOLDEN / "hist.svg").read_text()


def test_output_is_valid_xml():
    for text in (render_series(_fixture_series()), render_histogram(_fixture_hist())):
        root = ET.fromstring(text)
        assert root.tag.endswith("svg")


def test_render_is_byte_stable():
    assert render_series(_fixture_series()) == render_series(_fixture_series())
    assert render_histogram(_fixture_hist()) == render_histogram(_fixture_hist())


def test_single_point_series_has_one_vertex():
    text = render_series(Series(xs=[1.0], ys=[2.0], title="p"))
    root = ET.fromstring(text)
    polylines = [el for el in root.iter() if el.tag.endswith("polyline")]
    assert len(polylines) == 1
    points = polylines[0].attrib["points"].split()
    assert len(points) == 1


def test_series_has_axes_and_title():
    text = render_series(_fixture_series())
    root = ET.fromstring(text)
    lines = [el for el in root.iter() if el.tag.endswith("}line")]
    assert len(lines) == 2  # x and y axis
    texts = [el.text for el in root.iter() if el.tag.endswith("text")]
    assert "fixture curve" in texts
    assert "iteration" in texts and "loss" in texts


def test_uniform_histogram_gives_equal_bars():
    text = render_histogram(Histogram(values=[4, 4, 4, 4, 4], title="u"))
    heights = re.findall(r'height="([0-9.]+)" fill="#d1822b"', text)
    assert len(heights) == 5
    assert len(set(heights)) == 1


def test_histogram_bar_count_and_scaling():
    text = render_histogram(_fixture_hist())
    root = ET.fromstring(text)
    bars = [el for el in root.iter()
            if el.tag.endswith("rect") and el.attrib.get("fill") == "#d1822b"]
    assert len(bars) == 4
    heights = [float(b.attrib["height"]) for b in bars]
    assert heights[2] == 0.0  # empty bin
    assert max(heights) == heights[1]  # tallest bar is the max count
    # coordinates carry 6 significant digits
    assert heights[0] / heights[1] == pytest.approx(3 / 7, rel=1e-4)


def test_rejects_bad_input():
    with pytest.raises(ValueError, match="empty"):
        render_series(Series(xs=[], ys=[]))
    with pytest.raises(ValueError, match="empty"):
        render_histogram(Histogram(values=[]))
    with pytest.raises(ValueError, match="non-finite"):
        render_series(Series(xs=[1.0], ys=[float("nan")]))
    with pytest.raises(ValueError, match="mismatch"):
        render_series(Series(xs=[1.0, 2.0], ys=[1.0]))
    with pytest.raises(ValueError, match="nonnegative"):
        render_histogram(Histogram(values=[1.0, -2.0]))


def test_emit_svg_writes_file_and_rejects_unknown(tmp_path):
    path = tmp_path / "out.svg"
    emit_svg(_fixture_series(), str(path))
    assert path.read_text() == render_series(_fixture_series())
    with pytest.raises(TypeError):
        emit_svg([1, 2, 3], str(tmp_path / "bad.svg"))


def test_constant_series_renders():
    # degenerate y-range must not divide by zero
    text = render_series(Series(xs=[0, 1, 2], ys=[5.0, 5.0, 5.0], title="flat"))
    ET.fromstring(text)
