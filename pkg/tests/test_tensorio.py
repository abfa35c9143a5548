import numpy as np
import pytest

from motionkit import tensorio
from motionkit.tensorio import (
    AttentionValidationError,
    BadMagicError,
    GridShape,
    HeaderError,
    RecordError,
    TensorRecord,
    TruncatedFileError,
    UnsupportedVersionError,
    float_record,
    byte_record,
    read_container,
    write_container,
)


def roundtrip(tmp_path, records):
    path = tmp_path / "c.maft"
    write_container(path, records)
    return read_container(path)


def test_single_record_roundtrip_bit_exact(tmp_path):
    rec = float_record("a", np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    (back,) = roundtrip(tmp_path, [rec])
    assert back.name == "a"
    assert back.dtype == "float32"
    assert back.data.tobytes() == rec.data.tobytes()


def test_empty_container_roundtrip(tmp_path):
    assert roundtrip(tmp_path, []) == []


def test_multi_record_order_and_payloads(tmp_path):
    recs = [
        float_record("x", np.arange(7, dtype=np.float32)),
        byte_record("mask", np.array([[1, 0], [0, 1]], dtype=np.uint8)),
        float_record("y", np.zeros((3, 2, 5), dtype=np.float32)),
    ]
    back = roundtrip(tmp_path, recs)
    assert [r.name for r in back] == ["x", "mask", "y"]
    for a, b in zip(recs, back):
        assert a.data.dtype == b.data.dtype
        assert a.data.shape == b.data.shape
        assert a.data.tobytes() == b.data.tobytes()


def test_nan_payload_rejected(tmp_path):
    rec = float_record("bad", np.array([1.0, np.nan], dtype=np.float32))
    with pytest.raises(RecordError):
        write_container(tmp_path / "c.maft", [rec])


def test_inf_payload_rejected(tmp_path):
    rec = float_record("bad", np.array([np.inf], dtype=np.float32))
    with pytest.raises(RecordError):
        write_container(tmp_path / "c.maft", [rec])


def test_duplicate_names_rejected(tmp_path):
    recs = [float_record("a", np.ones(2, np.float32))] * 2
    with pytest.raises(RecordError):
        write_container(tmp_path / "c.maft", recs)


def test_unsupported_dtype_rejected(tmp_path):
    rec = TensorRecord("a", np.ones(2, dtype=np.float64))
    with pytest.raises(RecordError):
        write_container(tmp_path / "c.maft", [rec])


def test_bad_magic(tmp_path):
    path = tmp_path / "c.maft"
    write_container(path, [float_record("a", np.ones(3, np.float32))])
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        read_container(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "c.maft"
    write_container(path, [float_record("a", np.ones(3, np.float32))])
    raw = bytearray(path.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        read_container(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "c.maft"
    write_container(path, [float_record("a", np.ones(64, np.float32))])
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(TruncatedFileError):
        read_container(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "c.maft"
    write_container(path, [float_record("a", np.ones(4, np.float32))])
    raw = path.read_bytes()
    path.write_bytes(raw[:20])
    with pytest.raises(TruncatedFileError):
        read_container(path)


def test_header_payload_length_mismatch(tmp_path):
    path = tmp_path / "c.maft"
    write_container(path, [float_record("a", np.ones(4, np.float32))])
    raw = path.read_bytes()
    # corrupt the declared shape without touching payload bytes
    body = raw[16:].replace(b'"shape":[4]', b'"shape":[5]')
    path.write_bytes(raw[:16] + body)
    with pytest.raises(HeaderError):
        read_container(path)


def test_header_not_json(tmp_path):
    path = tmp_path / "c.maft"
    header = b"not json"
    blob = tensorio.MAGIC + (1).to_bytes(4, "little") + len(header).to_bytes(8, "little") + header
    path.write_bytes(blob)
    with pytest.raises(HeaderError):
        read_container(path)


def test_payloads_are_64_byte_aligned(tmp_path):
    path = tmp_path / "c.maft"
    write_container(
        path,
        [
            float_record("a", np.ones(3, np.float32)),  # 12 bytes -> next offset 64
            float_record("b", np.full(2, 7.0, np.float32)),
        ],
    )
    raw = path.read_bytes()
    header_len = int.from_bytes(raw[8:16], "little")
    import json

    entries = json.loads(raw[16 : 16 + header_len])
    assert entries[0]["offset"] == 0
    assert entries[1]["offset"] == 64
    base = 16 + header_len
    assert raw[base + 12 : base + 64] == b"\x00" * 52


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = tmp_path / "c.maft"
    write_container(path, [float_record("a", np.ones(2, np.float32))])
    leftovers = [p for p in tmp_path.iterdir() if p.name != "c.maft"]
    assert leftovers == []


def test_randomized_roundtrips(tmp_path):
    rng = np.random.default_rng(11)
    for trial in range(50):
        records = []
        for k in range(rng.integers(0, 6)):
            name = f"r{trial}_{k}"
            if rng.random() < 0.5:
                shape = tuple(int(d) for d in rng.integers(1, 5, size=rng.integers(1, 4)))
                records.append(float_record(name, rng.normal(size=shape).astype(np.float32)))
            else:
                shape = tuple(int(d) for d in rng.integers(1, 6, size=2))
                records.append(byte_record(name, rng.integers(0, 256, size=shape)))
        back = roundtrip(tmp_path, records)
        assert len(back) == len(records)
        for a, b in zip(records, back):
            assert a.name == b.name and a.data.tobytes() == b.data.tobytes()


def test_validate_attention_uniform_ok():
    shape = GridShape(1, 2, 2)
    rec = float_record("attention", np.full((4, 4), 0.25, np.float32))
    tensorio.validate_attention(rec, shape)


def test_validate_attention_negative_entry():
    shape = GridShape(1, 2, 2)
    a = np.full((4, 4), 0.25, np.float32)
    a[1, 2] = -0.1
    with pytest.raises(AttentionValidationError, match="negative"):
        tensorio.validate_attention(float_record("attention", a), shape)


def test_validate_attention_zero_row():
    shape = GridShape(1, 2, 2)
    a = np.full((4, 4), 0.25, np.float32)
    a[2, :] = 0.0
    with pytest.raises(AttentionValidationError, match="zero"):
        tensorio.validate_attention(float_record("attention", a), shape)


def test_validate_attention_shape_mismatch():
    shape = GridShape(2, 2, 2)
    a = np.full((4, 4), 0.25, np.float32)
    with pytest.raises(AttentionValidationError, match="shape"):
        tensorio.validate_attention(float_record("attention", a), shape)


def test_validate_attention_row_sums_above_one_allowed():
    # cross-frame one-hot blocks stack on top of the diagonal, so full-row
    # sums can legitimately exceed 1
    shape = GridShape(2, 1, 1)
    a = np.array([[1.0, 1.0], [1.0, 1.0]], dtype=np.float32)
    tensorio.validate_attention(float_record("attention", a), shape)


def test_grid_shape_invariants():
    with pytest.raises(ValueError):
        GridShape(0, 2, 2)
    with pytest.raises(ValueError):
        GridShape(1, 1, 2**32)
    assert GridShape(2, 3, 4).tokens == 24


def test_meta_shape_roundtrip():
    shape = GridShape(3, 5, 7)
    rec = tensorio.meta_shape_record(shape)
    assert tensorio.parse_meta_shape(rec) == shape


def test_pair_name_roundtrip():
    assert tensorio.parse_pair_name(tensorio.pair_name(2, 5)) == (2, 5)
    assert tensorio.parse_pair_name("motion_aligned") is None
    assert tensorio.parse_sweep_name(tensorio.sweep_name(5, 18)) == (5, 18)
