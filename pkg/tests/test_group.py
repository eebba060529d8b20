import pytest

from mp3presence import group
from mp3presence.errors import DivisionByZero, InvalidEncoding


def test_bilinearity_small_exponents():
    assert group.pair(group.g1**2, group.g2**3) == group.pair(group.g1, group.g2) ** 6


def test_zero_exponent_pairs_to_identity(rng):
    v = group.random_scalar(rng)
    assert group.pair(group.g1**0, group.g2**v) == group.gt_identity()


def test_bilinearity_random(rng):
    base = group.pair(group.g1, group.g2)
    for _ in range(100):
        u, v = group.random_scalar(rng), group.random_scalar(rng)
        assert group.pair(group.g1**u, group.g2**v) == base ** group.mul(u, v)


def test_hash_to_g2_deterministic_and_distinct():
    assert group.hash_to_g2(b"abc") == group.hash_to_g2(b"abc")
    assert group.hash_to_g2(b"abc") != group.hash_to_g2(b"abc\x00")


def test_hash_to_g2_outputs_validate(rng):
    for _ in range(1000):
        h = group.hash_to_g2(rng.randbytes(16))
        assert h.is_valid()
        assert group.decode_g2(group.encode_g2(h)) == h


def test_scalar_wraparound_and_inverse(rng):
    assert group.add(group.P - 1, 1) == 0
    assert group.sub(0, 1) == group.P - 1
    assert group.neg(5) == group.P - 5
    for _ in range(50):
        x = group.random_scalar(rng)
        assert group.mul(x, group.inv(x)) == 1
    with pytest.raises(DivisionByZero):
        group.inv(0)
    with pytest.raises(ZeroDivisionError):
        group.inv(group.P)


def test_random_scalar_nonzero(rng):
    assert all(0 < group.random_scalar(rng) < group.P for _ in range(200))


@pytest.mark.parametrize(
    "enc,dec,make,length",
    [
        (group.encode_g1, group.decode_g1, lambda r: group.random_g1(r), group.LEN_G1),
        (group.encode_g2, group.decode_g2, lambda r: group.random_g2(r), group.LEN_G2),
        (group.encode_gt, group.decode_gt,
         lambda r: group.pair(group.g1, group.g2) ** group.random_scalar(r), group.LEN_GT),
    ],
)
def test_element_round_trip(rng, enc, dec, make, length):
    for _ in range(10):
        e = make(rng)
        data = enc(e)
        assert len(data) == length
        assert dec(data) == e


def test_identity_encodings_fixed_length():
    for enc, dec, ident, length in [
        (group.encode_g1, group.decode_g1, group.g1_identity(), group.LEN_G1),
        (group.encode_g2, group.decode_g2, group.g2_identity(), group.LEN_G2),
        (group.encode_gt, group.decode_gt, group.gt_identity(), group.LEN_GT),
    ]:
        data = enc(ident)
        assert data == bytes(length)
        assert dec(data) == ident


def test_scalar_round_trip_and_rejection(rng):
    x = group.random_scalar(rng)
    assert group.decode_scalar(group.encode_scalar(x)) == x
    assert len(group.encode_scalar(x)) == 32
    with pytest.raises(InvalidEncoding):
        group.decode_scalar(group.P.to_bytes(32, "big"))
    with pytest.raises(InvalidEncoding):
        group.decode_scalar(b"\x01" * 31)


def test_non_canonical_and_garbage_points_rejected(rng):
    data = bytearray(group.encode_g1(group.random_g1(rng)))
    with pytest.raises(InvalidEncoding):
        group.decode_g1(bytes(data[:-1]))
    # 0x02/0x03 only differ in the y sign bit; any other prefix is invalid
    data[0] = 0x07
    with pytest.raises(InvalidEncoding):
        group.decode_g1(bytes(data))
    with pytest.raises(InvalidEncoding):
        group.decode_g2(b"\xff" * group.LEN_G2)


def test_suite_descriptor():
    s = group.SUITE
    assert s.p == group.P and s.p.bit_length() == 255
    assert (s.len_g1, s.len_g2, s.len_gt) == (group.LEN_G1, group.LEN_G2, group.LEN_GT)
