import pytest

from tokswap.errors import DataError
from tokswap.manifest import (
    RunManifest,
    load_manifest,
    sha256_file,
    write_manifest,
)


def test_sha256_file(tmp_path):
    path = tmp_path / "data.txt"
    path.write_bytes(b"hello")
    # Known digest of the ASCII string "hello".
    assert sha256_file(path) == (
        "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
    )


def test_manifest_roundtrip(tmp_path):
    m = RunManifest(
        command="train-bpe",
        parameters={"vocab_size": 2000},
        input_hashes={"corpus": "abc"},
        seed=7,
    )
    path = tmp_path / "m.json"
    write_manifest(m, path)
    loaded = load_manifest(path)
    assert loaded == m
    assert loaded.timestamp == m.timestamp


def test_matches_ignores_timestamp():
    a = RunManifest("t", {"x": 1}, {"f": "h"}, timestamp="2026-01-01T00:00:00Z")
    b = RunManifest("t", {"x": 1}, {"f": "h"}, timestamp="2026-02-02T00:00:00Z")
    assert a.matches(b)
    c = RunManifest("t", {"x": 2}, {"f": "h"})
    assert not a.matches(c)
    d = RunManifest("t", {"x": 1}, {"f": "other"})
    assert not a.matches(d)


def test_timestamp_auto_filled():
    m = RunManifest("t", {}, {})
    assert m.timestamp
    assert m.timestamp.endswith("Z")


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{broken", encoding="utf-8")
    with pytest.raises(DataError):
        load_manifest(path)


def test_load_rejects_wrong_fields(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"command": "x", "unexpected": 1}', encoding="utf-8")
    with pytest.raises(DataError):
        load_manifest(path)
