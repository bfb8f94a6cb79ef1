import struct

import numpy as np
import pytest

from mevg.errors import LatentIOError, ShapeError
from mevg.latent_io import FORMAT_VERSION, MAGIC, load_latent, save_latent


def random_clip(shape=(3, 2, 5, 7), seed=0):
    return np.random.default_rng(seed).standard_normal(shape).astype(np.float32)


def test_round_trip_bit_exact(tmp_path):
    clip = random_clip()
    path = tmp_path / "clip.lat"
    save_latent(path, clip)
    back = load_latent(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, clip)


def test_file_layout_frozen(tmp_path):
    clip = random_clip((2, 1, 2, 3), seed=1)
    path = tmp_path / "clip.lat"
    save_latent(path, clip)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC == b"MEVG"
    assert raw[4] == FORMAT_VERSION == 1
    assert struct.unpack("<4I", raw[5:21]) == (2, 1, 2, 3)
    assert raw[21:] == clip.tobytes()
    assert len(raw) == 21 + 4 * clip.size


def test_reads_handwritten_file(tmp_path):
    # a file produced without numpy pins the byte order and ordering contract
    values = [1.5, -2.25, 0.0, 3.0e-5, -1.0, 7.25]
    path = tmp_path / "hand.lat"
    path.write_bytes(
        b"MEVG" + bytes([1]) + struct.pack("<4I", 1, 2, 1, 3) + struct.pack("<6f", *values)
    )
    clip = load_latent(path)
    assert clip.shape == (1, 2, 1, 3)
    np.testing.assert_array_equal(clip.ravel(), np.array(values, np.float32))


def test_save_casts_to_float32(tmp_path):
    clip = np.arange(8, dtype=np.float64).reshape(1, 2, 2, 2) + 0.5
    path = tmp_path / "cast.lat"
    save_latent(path, clip)
    back = load_latent(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, clip.astype(np.float32))


def test_save_rejects_non_4d(tmp_path):
    with pytest.raises(ShapeError):
        save_latent(tmp_path / "bad.lat", np.zeros((2, 2, 2), np.float32))


def test_save_leaves_no_temp_files(tmp_path):
    path = tmp_path / "clip.lat"
    save_latent(path, random_clip())
    save_latent(path, random_clip(seed=2))  # overwrite is fine
    assert [p.name for p in tmp_path.iterdir()] == ["clip.lat"]


@pytest.mark.parametrize(
    "mutate,what",
    [
        (lambda raw: raw[:10], "shorter than a header"),
        (lambda raw: raw[:-4], "truncated payload"),
        (lambda raw: raw + b"\x00" * 4, "trailing bytes"),
        (lambda raw: b"XEVG" + raw[4:], "wrong magic"),
        (lambda raw: raw[:4] + bytes([9]) + raw[5:], "future version"),
    ],
)
def test_corrupt_files_raise(tmp_path, mutate, what):
    path = tmp_path / "clip.lat"
    save_latent(path, random_clip())
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(LatentIOError):
        load_latent(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(LatentIOError):
        load_latent(tmp_path / "absent.lat")


def test_loaded_array_is_writable(tmp_path):
    path = tmp_path / "clip.lat"
    save_latent(path, random_clip())
    clip = load_latent(path)
    clip[0, 0, 0, 0] = 42.0  # must not be a read-only frombuffer view
    assert clip[0, 0, 0, 0] == 42.0
