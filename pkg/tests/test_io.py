import struct

import numpy as np
import pytest
from scipy.io import wavfile

from hoadoa import io


def test_wav_round_trip(tmp_path, rng):
    x = rng.standard_normal((9, 1234)).astype(np.float32)
    io.write_wav(tmp_path / "a.wav", x, 16000)
    y, rate = io.read_wav(tmp_path / "a.wav")
    assert rate == 16000 and np.array_equal(x, y)


def test_wav_mono_and_header(tmp_path):
    io.write_wav(tmp_path / "m.wav", np.ones(10), 48000)
    data, rate = io.read_wav(tmp_path / "m.wav")
    assert data.shape == (1, 10) and rate == 48000
    raw = (tmp_path / "m.wav").read_bytes()
    assert raw[:4] == b"RIFF" and raw[8:12] == b"WAVE"
    # format tag 3 = IEEE float, 32 bits per sample
    fmt = raw.index(b"fmt ")
    tag, channels = struct.unpack("<HH", raw[fmt + 8 : fmt + 12])
    assert (tag, channels) == (3, 1)


def test_wav_rejects_integer_samples(tmp_path):
    wavfile.write(tmp_path / "i.wav", 16000, np.zeros(10, np.int16))
    with pytest.raises(io.FormatError):
        io.read_wav(tmp_path / "i.wav")


def test_hoat_round_trip_and_layout(rng):
    a = rng.standard_normal((50, 512, 6)).astype(np.float32)
    blob = io.encode_hoat(a)
    assert blob[:8] == b"HOAT\x01\x00\x03\x00"
    assert struct.unpack("<3I", blob[8:20]) == (50, 512, 6)
    assert len(blob) == 20 + 4 * a.size
    assert np.array_equal(io.decode_hoat(blob), a)


def test_hoat_scalar_and_empty():
    assert io.decode_hoat(io.encode_hoat(np.float32(2.5))) == np.float32(2.5)
    assert io.decode_hoat(io.encode_hoat(np.zeros((0, 3)))).shape == (0, 3)


@pytest.mark.parametrize("mutate", [
    lambda b: b"HOAX" + b[4:],
    lambda b: b[:4] + b"\x02" + b[5:],
    lambda b: b[:5] + b"\x01" + b[6:],
    lambda b: b[:-4],
    lambda b: b[:6],
])
def test_hoat_malformed(mutate):
    blob = io.encode_hoat(np.ones((2, 3)))
    with pytest.raises(io.FormatError):
        io.decode_hoat(mutate(blob))


def test_hoat_file(tmp_path):
    io.write_hoat(tmp_path / "t.hoat", np.arange(6.0).reshape(2, 3))
    assert np.array_equal(io.read_hoat(tmp_path / "t.hoat"), np.arange(6.0).reshape(2, 3))
    assert not list(tmp_path.glob("*.part"))


def test_bundle(tmp_path, rng):
    params = {"conv1/kernel": rng.standard_normal((3, 3, 2)), "dense/bias": np.zeros(4)}
    io.write_bundle(tmp_path / "b", params, {"seed": 3})
    back, meta = io.read_bundle(tmp_path / "b")
    assert meta == {"seed": 3}
    assert set(back) == set(params)
    for k in params:
        assert np.array_equal(back[k], params[k].astype(np.float32))


def test_sha256(tmp_path):
    (tmp_path / "x").write_bytes(b"abc")
    assert io.sha256_file(tmp_path / "x") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
