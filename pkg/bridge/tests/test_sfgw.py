"""Weight-file round trips, and proof the engine accepts what we write."""

import numpy as np
import pytest

from sifigan_bridge import (
    FormatError,
    param_count,
    read_sfgw,
    tensor_inventory,
    write_sfgw,
)

from conftest import SMALL


def random_store(seed=0, scale=0.05):
    rng = np.random.default_rng(seed)
    return {
        name: rng.normal(0.0, scale, shape).astype(np.float32)
        for name, shape in tensor_inventory(SMALL).items()
    }


def test_roundtrip(tmp_path):
    store = random_store()
    write_sfgw(store, tmp_path / "w.sfgw")
    back = read_sfgw(tmp_path / "w.sfgw")
    assert set(back) == set(store)
    for name in store:
        assert np.array_equal(back[name], store[name])


def test_write_is_deterministic(tmp_path):
    store = random_store()
    write_sfgw(store, tmp_path / "a.sfgw")
    write_sfgw(dict(reversed(list(store.items()))), tmp_path / "b.sfgw")
    assert (tmp_path / "a.sfgw").read_bytes() == (tmp_path / "b.sfgw").read_bytes()


def test_engine_loads_our_file(tmp_path, engine, small_config):
    _, config_path = small_config
    write_sfgw(random_store(), tmp_path / "w.sfgw")
    report, _ = engine("inspect", "--weights", tmp_path / "w.sfgw", "--config", config_path)
    assert report["matches_config"] is True
    assert report["param_count"] == param_count(SMALL)
    assert report["tensor_count"] == len(tensor_inventory(SMALL))


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "w.sfgw"
    write_sfgw(random_store(), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_sfgw(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "w.sfgw"
    write_sfgw(random_store(), path)
    path.write_bytes(path.read_bytes()[:-512])
    with pytest.raises(FormatError):
        read_sfgw(path)
