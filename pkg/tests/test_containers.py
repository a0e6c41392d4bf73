import numpy as np
import pytest

from wskan.containers import (
    BadMagicError,
    TruncatedPayloadError,
    VersionUnsupportedError,
    read_container,
    write_container,
)


def test_round_trip_preserves_bytes_and_values():
    rng = np.random.default_rng(0)
    arrs = [("x", rng.standard_normal((3, 4))), ("idx", np.arange(7, dtype=np.int64))]
    blob = write_container(b"TST0", 1, {"note": "hi"}, arrs)
    version, header, got = read_container(blob, b"TST0", 1)
    assert version == 1
    assert header["note"] == "hi"
    np.testing.assert_array_equal(got["x"], arrs[0][1])
    assert got["x"].tobytes() == arrs[0][1].tobytes()
    np.testing.assert_array_equal(got["idx"], arrs[1][1])


def test_bad_magic():
    blob = write_container(b"TST0", 1, {}, [])
    with pytest.raises(BadMagicError):
        read_container(blob, b"XXXX", 1)


def test_version_unsupported():
    blob = write_container(b"TST0", 3, {}, [])
    with pytest.raises(VersionUnsupportedError):
        read_container(blob, b"TST0", 2)


def test_truncated_payload():
    blob = write_container(b"TST0", 1, {}, [("x", np.ones((10, 10)))])
    with pytest.raises(TruncatedPayloadError):
        read_container(blob[:-8], b"TST0", 1)
    with pytest.raises(TruncatedPayloadError):
        read_container(blob[:10], b"TST0", 1)
    with pytest.raises(TruncatedPayloadError):
        read_container(b"", b"TST0", 1)
