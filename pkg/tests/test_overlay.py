import numpy as np

from conftest import toy_params
from symparse.features import FEATURE_DIM, SIGNED_BINS
from symparse.model import SymbolId
from symparse.overlay import PALETTE, render_filter_glyph, render_overlay, write_overlays, write_symbol_glyphs
from symparse.pnm import ImageBuffer, read_pnm


def _record(cells):
    return {"image_id": "a.pgm", "parts": {name: {"cell": list(c)} for name, c in cells.items()}}


def test_overlay_draws_part_boxes(tree):
    image = ImageBuffer(np.zeros((120, 100), dtype=np.uint8))
    torso = tree.part_by_name("upper_body")
    out = render_overlay(image, _record({"upper_body": (10, 12), "neck": (3, 3)}), tree, cell_size=4)
    assert out.channels == 3
    w, h = torso.box_size
    x0, y0 = (10 - w // 2) * 4, (12 - h // 2) * 4
    assert tuple(out.data[y0, x0]) == PALETTE["upper_body"]
    assert tuple(out.data[y0 + h * 4 - 1, x0 + w * 4 - 1]) == PALETTE["upper_body"]
    # inside the box and joints are left alone
    assert tuple(out.data[y0 + 5, x0 + 5]) == (0, 0, 0)
    assert out.data[12, 12].sum() == 0


def test_right_limbs_are_dashed(tree):
    image = ImageBuffer(np.zeros((120, 100), dtype=np.uint8))
    record = _record({"l_upper_arm": (5, 8), "r_upper_arm": (18, 8)})
    out = render_overlay(image, record, tree, cell_size=4)
    color = np.array(PALETTE["upper_arm"])
    w, h = tree.part_by_name("l_upper_arm").box_size
    y0 = (8 - h // 2) * 4
    left_row = out.data[y0, (5 - w // 2) * 4 : (5 - w // 2 + w) * 4]
    right_row = out.data[y0, (18 - w // 2) * 4 : (18 - w // 2 + w) * 4]
    assert np.all(left_row == color)
    assert 0 < np.all(right_row == color, axis=1).sum() < len(right_row)


def test_write_overlays_skips_unknown_images(tmp_path, tree):
    images = {"a.pgm": ImageBuffer(np.zeros((40, 40), dtype=np.uint8))}
    records = [_record({"head": (4, 4)}), {"image_id": "b.pgm", "parts": {}}]
    paths = write_overlays(tmp_path, records, images, tree, 4)
    assert [p.name for p in paths] == ["a_parse.ppm"]
    assert read_pnm(paths[0]).channels == 3


def test_glyph_marks_only_weighted_cells():
    weights = np.zeros((2, 3, FEATURE_DIM))
    weights[1, 2, 0] = 2.0
    weights[0, 0, SIGNED_BINS + 4] = -1.0  # negative weights are not drawn
    glyph = render_filter_glyph(weights.ravel(), (3, 2), FEATURE_DIM, cell_px=8)
    assert glyph.shape == (16, 24)
    assert glyph[8:, 16:].max() == 2.0
    glyph[8:, 16:] = 0
    assert not glyph.any()


def test_symbol_glyph_files(tmp_path, tree, rng):
    counts = {pid: 1 + (pid == 0) for pid in tree.part_ids}
    params = toy_params(tree, rng, counts, feature_dim=FEATURE_DIM)
    params = params.replace(symbols={**params.symbols, 0: (SymbolId(0, 0, 0), SymbolId(0, 1, 0))})
    paths = write_symbol_glyphs(params, tmp_path, cell_px=4)
    assert len(paths) == len(tree.parts) + 1
    sheet = read_pnm(tmp_path / "glyph_upper_body.pgm")
    w, h = tree.part(0).box_size
    assert (sheet.height, sheet.width) == (h * 4, 2 * w * 4 + 2)
    assert "upper_body: 2 symbols over 2 types [0/0 1/0]" in (tmp_path / "glyphs.txt").read_text()
