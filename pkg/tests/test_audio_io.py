import struct

import numpy as np
import pytest

from usvpipe.audio_io import (AudioClip, load_wav, pad_to_duration, wav_duration,
                              write_wav)
from usvpipe.exceptions import (ClipTooLongError, MalformedWavError,
                                UnsupportedFormatError)

from conftest import write_raw_wav


def test_int16_scaling_by_type_maximum(tmp_wav_factory):
    # constant 16384 in int16 -> 16384/32768 = 0.5 exactly
    payload = struct.pack("<200h", *([16384] * 200))
    clip = load_wav(tmp_wav_factory(bits=16, payload=payload))
    assert np.all(clip.samples == 0.5)
    assert clip.sample_rate == 50_000


def test_empty_data_chunk_rejected(tmp_wav_factory):
    with pytest.raises(MalformedWavError):
        load_wav(tmp_wav_factory(payload=b""))


def test_two_channels_rejected(tmp_wav_factory):
    with pytest.raises(UnsupportedFormatError):
        load_wav(tmp_wav_factory(channels=2))


def test_compressed_format_rejected(tmp_wav_factory):
    with pytest.raises(UnsupportedFormatError):
        load_wav(tmp_wav_factory(fmt_tag=0x0055))  # MP3-in-WAV tag


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "broken.wav"
    write_raw_wav(path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 37])
    with pytest.raises(MalformedWavError):
        load_wav(path)


def test_not_riff_rejected(tmp_path):
    path = tmp_path / "nope.wav"
    path.write_bytes(b"OggS" + b"\x00" * 64)
    with pytest.raises(MalformedWavError):
        load_wav(path)


def test_float32_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    clip = AudioClip(samples=rng.uniform(-1, 1, 500), sample_rate=250_000,
                     source_id="f32")
    path = tmp_path / "f32.wav"
    write_wav(path, clip, encoding="float32")
    loaded = load_wav(path)
    assert loaded.sample_rate == 250_000
    np.testing.assert_array_equal(loaded.samples,
                                  clip.samples.astype(np.float32).astype(np.float64))


def test_int16_roundtrip_quantisation_bound(tmp_path):
    rng = np.random.default_rng(4)
    clip = AudioClip(samples=rng.uniform(-0.9, 0.9, 500), sample_rate=50_000)
    path = tmp_path / "i16.wav"
    write_wav(path, clip)
    loaded = load_wav(path)
    # half-step rounding plus the 32767-write / 32768-read scale asymmetry
    assert np.abs(loaded.samples - clip.samples).max() < 1.5 / 32768


def test_24bit_pcm_decodes(tmp_path):
    # two known samples: +2^22 -> 0.5, -2^22 -> -0.5
    def pack24(v):
        return struct.pack("<i", v)[:3]

    payload = pack24(2 ** 22) + pack24(-2 ** 22)
    path = tmp_path / "i24.wav"
    write_raw_wav(path, bits=24, payload=payload)
    clip = load_wav(path)
    np.testing.assert_allclose(clip.samples, [0.5, -0.5])


def test_scaling_linearity(tmp_wav_factory):
    values = [1000, -2000, 3000, 12000]
    single = struct.pack("<4h", *values)
    double = struct.pack("<4h", *[2 * v for v in values])
    c1 = load_wav(tmp_wav_factory(payload=single))
    c2 = load_wav(tmp_wav_factory(payload=double))
    np.testing.assert_array_equal(c2.samples, 2.0 * c1.samples)


def test_wav_duration_matches_full_load(tmp_wav_factory):
    payload = struct.pack("<300h", *([0] * 300))
    path = tmp_wav_factory(payload=payload, sample_rate=10_000)
    assert wav_duration(path) == load_wav(path).duration_s == 0.03


class TestPadToDuration:
    def test_one_second_clip_padded_to_three(self):
        clip = AudioClip(samples=np.ones(250_000), sample_rate=250_000)
        padded = pad_to_duration(clip, 3.0)
        assert padded.samples.size == 750_000
        assert np.all(padded.samples[:250_000] == 1.0)
        assert np.all(padded.samples[250_000:] == 0.0)

    def test_exact_length_clip_unchanged(self):
        clip = AudioClip(samples=np.ones(750_000), sample_rate=250_000)
        padded = pad_to_duration(clip, 3.0)
        assert padded.samples.size == 750_000
        np.testing.assert_array_equal(padded.samples, clip.samples)

    def test_over_length_clip_rejected(self):
        clip = AudioClip(samples=np.ones(800_000), sample_rate=250_000)
        with pytest.raises(ClipTooLongError):
            pad_to_duration(clip, 3.0)

    def test_prefix_preserved_bit_exactly_after_load(self, tmp_path):
        rng = np.random.default_rng(9)
        clip = AudioClip(samples=rng.uniform(-1, 1, 5000), sample_rate=50_000)
        path = tmp_path / "pad.wav"
        write_wav(path, clip, encoding="float32")
        loaded = load_wav(path)
        padded = pad_to_duration(loaded, 0.5)
        np.testing.assert_array_equal(padded.samples[:5000], loaded.samples)
