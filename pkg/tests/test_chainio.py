import json

import numpy as np
import pytest

from rrmix import chainio
from rrmix.errors import IngestionError


def _same(a, b):
    assert a.names == b.names
    np.testing.assert_array_equal(a.draws, b.draws)
    np.testing.assert_array_equal(a.S_mean, b.S_mean)
    assert a.invariant_passes == b.invariant_passes


def test_binary_roundtrip(dynamic_chain, tmp_path):
    p = chainio.write_chain(dynamic_chain, tmp_path / "c.rrc")
    back = chainio.read_chain(p)
    _same(dynamic_chain, back)
    assert "wall_time_s" not in back.meta
    assert "threads" not in back.meta["config"]
    assert back.meta["K"] == dynamic_chain.meta["K"]


def test_column_major_layout(dynamic_chain, tmp_path):
    p = chainio.write_chain(dynamic_chain, tmp_path / "c.rrc")
    raw = p.read_bytes()
    _, _, _, m, P, _, H = chainio._FIXED.unpack(raw[:chainio._FIXED.size])
    start = chainio._FIXED.size + H
    first_col = np.frombuffer(raw[start:start + 8 * m], dtype="<f8")
    np.testing.assert_array_equal(first_col, dynamic_chain.draws[:, 0])


def test_write_is_deterministic(dynamic_chain, tmp_path):
    a = chainio.write_chain(dynamic_chain, tmp_path / "a.rrc")
    b = chainio.write_chain(dynamic_chain, tmp_path / "b.rrc")
    assert a.read_bytes() == b.read_bytes()


def test_csv_roundtrip(static_chain, tmp_path):
    p = chainio.write_chain_csv(static_chain, tmp_path / "c.csv")
    back = chainio.read_chain(p)
    assert back.names == static_chain.names
    np.testing.assert_array_equal(back.draws, static_chain.draws)
    assert back.S_mean is None


def test_latent_roundtrip(small_sim, tmp_path):
    from rrmix import engine

    ch = engine.fit(small_sim[0], engine.FitConfig(draws=3, burnin=0, store_latent=True))
    back = chainio.read_chain(chainio.write_chain(ch, tmp_path / "l.rrc"))
    np.testing.assert_array_equal(back.z, ch.z)
    np.testing.assert_array_equal(back.zstar, ch.zstar)


def test_truncated_file(dynamic_chain, tmp_path):
    p = chainio.write_chain(dynamic_chain, tmp_path / "c.rrc")
    p.write_bytes(p.read_bytes()[:-100])
    with pytest.raises(IngestionError):
        chainio.read_chain(p)


def test_unknown_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_text("hello")
    with pytest.raises(IngestionError):
        chainio.read_chain(p)


def test_manifest(dynamic_chain, small_sim, tmp_path):
    from rrmix.data import write_dataset

    data = tmp_path / "d.csv"
    write_dataset(small_sim[0], data)
    out = chainio.write_chain(dynamic_chain, tmp_path / "c.rrc")
    doc = chainio.manifest([dynamic_chain], data, [out], extra={"threads": 1})
    path = chainio.write_manifest(doc, tmp_path / "m.json")
    back = json.loads(path.read_text())
    assert back["config"]["draws"] == 400
    assert back["dataset_sha256"] == chainio.file_sha256(data)
    assert back["chains"][0]["wall_time_s"] > 0
    assert set(back["chains"][0]["invariant_pass_rate"].values()) == {1.0}
