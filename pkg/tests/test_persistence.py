import struct

import numpy as np
import pytest

from conftest import toy_params
from symparse.errors import ModelFormatError, ModelVersionError
from symparse.persistence import FORMAT_VERSION, MAGIC, decode_model, encode_model, load_model, save_model


@pytest.fixture
def params(tree, rng):
    counts = {pid: 1 + pid % 3 for pid in tree.part_ids}
    return toy_params(tree, rng, counts, feature_dim=2, keep_fraction=0.5, root_bias=-0.25).replace(cell_size=6)


def test_saved_model_loads_back_identically(tmp_path, params):
    path = tmp_path / "model.bin"
    save_model(params, path)
    loaded = load_model(path)
    assert loaded.tree == params.tree
    assert loaded.symbols == params.symbols
    assert (loaded.cell_size, loaded.feature_dim, loaded.root_bias) == (6, 2, -0.25)
    for pid, bank in params.filters.items():
        np.testing.assert_array_equal(loaded.filters[pid], bank)
    for edge in params.context.edges:
        assert sorted(loaded.context.pairs[edge]) == sorted(params.context.pairs[edge])
        for pair, ctx in params.context.finite_pairs(edge):
            got = loaded.context.pairs[edge][pair]
            np.testing.assert_array_equal(got.weights, ctx.weights)
            assert (got.bias, got.anchor, got.count) == (ctx.bias, ctx.anchor, ctx.count)
    assert encode_model(loaded) == encode_model(params)


def test_header_layout(params):
    raw = encode_model(params)
    assert raw[:4] == MAGIC
    assert struct.unpack("<III", raw[4:16]) == (FORMAT_VERSION, 6, 2)
    assert raw[24:28] == b"TREE"


def test_version_mismatch_is_rejected(params):
    raw = bytearray(encode_model(params))
    raw[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
    with pytest.raises(ModelVersionError, match="version mismatch"):
        decode_model(bytes(raw))


@pytest.mark.parametrize(
    "mangle,message",
    [
        (lambda raw: b"XXXX" + raw[4:], "bad magic"),
        (lambda raw: raw[:-3], "truncated"),
        (lambda raw: raw + b"\x00", "trailing"),
        (lambda raw: raw[:24] + b"SYMB" + raw[28:], "expected section TREE"),
    ],
)
def test_corrupt_files_are_rejected(params, mangle, message):
    with pytest.raises(ModelFormatError, match=message):
        decode_model(mangle(encode_model(params)))


def test_missing_model_file(tmp_path):
    with pytest.raises(ModelFormatError, match="cannot read model"):
        load_model(tmp_path / "none.bin")
